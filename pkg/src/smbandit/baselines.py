"""Exp3 reference learner and a checker for the second-order MW regret bound."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidEta, ProtocolError
from .smb import _Randomness, check_loss


class Exp3:
    """Exponential weights on importance-weighted losses, no uniform mixing.

    Uses the same randomness layout as the SMB learners (one uniform per
    action), so runs seeded alike draw the same uniforms.
    """

    def __init__(self, k: int, eta: float, seed=None):
        if not (eta > 0 and math.isfinite(eta)):
            raise InvalidEta(f"eta must be positive, got {eta!r}")
        self.k = k
        self.eta = float(eta)
        self.logp = np.full(k, -math.log(k))
        self.p = np.full(k, 1.0 / k)
        self._rand = _Randomness(seed, 1)
        self._pending: Optional[int] = None

    def probabilities(self) -> np.ndarray:
        return self.p.copy()

    def select(self) -> int:
        if self._pending is not None:
            raise ProtocolError("select() called twice without update()")
        u = self._rand.uniform()
        cs = np.cumsum(self.p)
        j = int(np.searchsorted(cs, u * cs[-1], side="right"))
        self._pending = min(j, self.k - 1) + 1
        return self._pending

    def update(self, loss: float) -> None:
        if self._pending is None:
            raise ProtocolError("update() called before select()")
        loss = check_loss(loss)
        i = self._pending - 1
        self._pending = None
        if loss == 0.0:
            return
        self.logp[i] -= self.eta * loss / self.p[i]
        self.logp -= np.logaddexp.reduce(self.logp)
        self.p = np.exp(self.logp)

    def step(self, loss_oracle: Callable[[int], float]) -> tuple[int, float]:
        arm = self.select()
        loss = loss_oracle(arm)
        self.update(loss)
        return arm, float(loss)


def exp3_step(state: Exp3, loss_oracle: Callable[[int], float]) -> tuple[int, float]:
    return state.step(loss_oracle)


def mw_distributions(costs: np.ndarray, eta: float) -> np.ndarray:
    """``q_1..q_T`` of multiplicative weights started from uniform."""
    costs = np.asarray(costs, dtype=float)
    T, k = costs.shape
    cum = np.vstack([np.zeros(k), np.cumsum(costs, axis=0)[:-1]])
    logits = -eta * cum
    logits -= logits.max(axis=1, keepdims=True)
    q = np.exp(logits)
    return q / q.sum(axis=1, keepdims=True)


@dataclass
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def verify_second_order_bound(
    q: Optional[Sequence[np.ndarray]], costs: Sequence[np.ndarray], eta: float
) -> BoundCheck:
    """Compare ``max_i sum_t (q_t.c_t - c_t(i))`` against ``log(k)/eta + eta sum_t q_t.c_t**2``.

    ``q`` may be None, in which case the MW iterates are generated from
    ``costs``. A violated bound is reported in the result, never raised.
    """
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 2:
        raise ValueError("costs must have shape (T, k)")
    q = mw_distributions(costs, eta) if q is None else np.asarray(q, dtype=float)
    k = costs.shape[1]
    learner = float(np.sum(q * costs))
    lhs = learner - float(costs.sum(axis=0).min())
    rhs = math.log(k) / eta + eta * float(np.sum(q * costs**2))
    return BoundCheck(lhs, rhs, lhs <= rhs + 1e-9)
