"""Lipschitz losses on [0, 1] played through SMB on an evenly spaced grid.

Loss sequences are given either as a vectorised callable ``f(t, x)`` with
1-based round ``t``, or as a list of one-argument callables ``fs[t-1](x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidLipschitz
from .smb import SMB, SparseSMB, RoundTrace, _SmbBase
from .tree import MetricTree, build_tree, pad_action_count

LossFamily = Union[Callable[[int, float], float], Sequence[Callable[[float], float]]]
Metric = Callable[[float, float], float]


@dataclass(frozen=True)
class ContinuumPlan:
    L: float
    T: int
    target_k: int
    k: int
    eta: float

    @property
    def tree(self) -> MetricTree:
        return build_tree(self.k)

    @property
    def grid(self) -> np.ndarray:
        return np.arange(1, self.k + 1) / self.k


def plan_discretization(L: float, T: int) -> ContinuumPlan:
    """Grid of about ``L**(2/3) T**(1/3)`` points, padded to a power of two."""
    if not L >= 1:
        raise InvalidLipschitz(f"Lipschitz constant must be >= 1, got {L!r}")
    if T < 8:
        raise ValueError("horizon must be at least 8")
    target = max(2, int(round(L ** (2 / 3) * T ** (1 / 3))))
    k, _ = pad_action_count(target, T)
    return ContinuumPlan(L=float(L), T=int(T), target_k=target, k=k, eta=1.0 / math.sqrt(k * T))


def _evaluator(f: LossFamily) -> Callable[[int, np.ndarray], np.ndarray]:
    if callable(f):
        return lambda t, x: np.asarray(f(t, x), dtype=float)
    fs = list(f)
    return lambda t, x: np.asarray(np.vectorize(fs[t - 1])(x), dtype=float)


def lipschitz_round(
    plan: ContinuumPlan, state: _SmbBase, f_t: Callable[[float], float]
) -> tuple[float, float, RoundTrace]:
    """One SMB round where arm ``i`` is the point ``i / k``; ``f_t`` is evaluated once."""
    k = plan.k
    trace = state.step(lambda i: float(f_t(i / k)))
    return trace.action / k, trace.loss, trace


def run_lipschitz(plan: ContinuumPlan, f: LossFamily, seed=None, sparse: bool = True):
    """Play ``plan.T`` rounds; returns the chosen points and the SMB traces."""
    cls = SparseSMB if sparse else SMB
    learner = cls(plan.tree, plan.eta, seed=seed)
    ev = _evaluator(f)
    points = np.empty(plan.T)
    traces = []
    for t in range(1, plan.T + 1):
        x, _, tr = lipschitz_round(plan, learner, lambda x, t=t: float(ev(t, x)))
        points[t - 1] = x
        traces.append(tr)
    return points, traces


def line_metric(x: float, y: float) -> float:
    return abs(x - y)


def tree_metric(k: int) -> Metric:
    """Tree distance between grid points ``i/k``; zero when the point does not move."""
    tree = build_tree(k)

    def metric(x: float, y: float) -> float:
        return tree.switch_cost(int(round(x * k)), int(round(y * k)))

    return metric


@dataclass
class MovementRegret:
    regret: float
    loss: float
    movement: float
    comparator: float
    comparator_point: float
    resolution_error: float


def movement_regret(
    points: Sequence[float],
    f: LossFamily,
    metric: Union[str, Metric] = "line",
    *,
    k: int,
    L: float = 1.0,
    refine: int = 10,
) -> MovementRegret:
    """Loss plus movement of a played sequence minus the best fixed point.

    ``k`` is the playing grid size. The fixed comparator is searched on
    ``refine * k + 1`` evenly spaced points of [0, 1]; for L-Lipschitz losses
    this overstates the continuous minimum by at most ``L * T / (refine * k)``,
    reported as ``resolution_error``.
    ``metric`` is ``"line"``, ``"tree"`` or any callable.
    """
    x = np.asarray(points, dtype=float)
    T = len(x)
    if metric == "line":
        metric = line_metric
    elif metric == "tree":
        metric = tree_metric(k)
    ev = _evaluator(f)
    loss = float(sum(ev(t, x[t - 1]) for t in range(1, T + 1)))
    movement = float(sum(metric(x[t], x[t - 1]) for t in range(1, T)))
    grid = np.linspace(0.0, 1.0, refine * k + 1)
    totals = np.zeros_like(grid)
    if callable(f) and T:
        chunk = max(1, 2**20 // len(grid))
        for s in range(1, T + 1, chunk):
            ts = np.arange(s, min(T, s + chunk - 1) + 1)[:, None]
            totals += np.broadcast_to(ev(ts, grid[None, :]), (len(ts), len(grid))).sum(axis=0)
    else:
        for t in range(1, T + 1):
            totals += ev(t, grid)
    j = int(np.argmin(totals))
    best = float(totals[j])
    return MovementRegret(
        regret=loss + movement - best,
        loss=loss,
        movement=movement,
        comparator=best,
        comparator_point=float(grid[j]),
        resolution_error=L * T / (refine * k),
    )
