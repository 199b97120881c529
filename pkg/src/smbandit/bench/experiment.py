"""Seeded regret/movement experiments for the three settings.

Every run is a pure function of its config and seed. Per-seed results are
reduced in seed order, so summaries and CSV output are reproducible byte for
byte whether or not seeds run in parallel.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..baselines import Exp3
from ..continuum import movement_regret, plan_discretization
from ..pricing import Buyer, PricingInstance, best_fixed_price, run_pricing
from ..smb import SMB, SparseSMB, default_eta
from ..tree import build_tree
from .generators import generate_buyers, generate_losses, lipschitz_sine, parse_spec

MODES = ("bandit", "lipschitz", "pricing", "verify")
RECORD_COLUMNS = ["seed", "t", "learner", "cum_loss", "cum_movement", "cum_regret"]


@dataclass
class ExperimentConfig:
    mode: str = "bandit"
    k: int = 16
    L: float = 1.0
    T: int = 10_000
    tau_bar: int = 2
    eta: Optional[float] = None
    adversary: str = "stochastic_gap(0.4, 0.2)"
    values: str = "uniform"
    patience: str = "uniform"
    blocks: str = "box"
    learners: tuple[str, ...] = ("smb", "exp3")
    seeds: tuple[int, ...] = (0,)
    out: Optional[str] = None
    trace: Optional[str] = None
    stride: int = 1
    plot: bool = False
    jobs: int = 1
    scope: str = "all"
    budget: int = 10_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.mode == "bandit":
            build_tree(self.k)
        if self.stride < 1:
            raise ValueError("stride must be positive")
        for name in self.learners:
            if name not in ("smb", "smb_dense", "exp3"):
                raise ValueError(f"unknown learner {name!r}")


def level_of_switch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LCA level of consecutive actions (0 when equal), vectorised."""
    x = (np.asarray(a, dtype=np.int64) - 1) ^ (np.asarray(b, dtype=np.int64) - 1)
    return np.where(x > 0, np.frexp(x.astype(float))[1], 0)


def switch_counts(actions: np.ndarray, D: int) -> list[int]:
    """Number of rounds with ``A_d(i_t) != A_d(i_{t-1})`` for each ``d < D``."""
    lv = level_of_switch(actions[1:], actions[:-1])
    return [int(np.count_nonzero(lv > d)) for d in range(D)]


@dataclass
class BanditRun:
    learner: str
    actions: np.ndarray
    losses: np.ndarray  # incurred loss per round
    movement: np.ndarray  # tree movement per round (0 at t = 1)
    best_arm: int
    best_column: np.ndarray  # per-round loss of the best fixed arm
    second_moment: Optional[np.ndarray] = None
    bad_events: int = 0
    touched: int = 0

    @property
    def regret(self) -> float:
        return float(self.losses.sum() + self.movement.sum() - self.best_column.sum())


def _rows(losses: np.ndarray, chunk: int = 4096):
    """Rows as Python lists of floats, converted a chunk at a time."""
    for s in range(0, len(losses), chunk):
        yield from np.asarray(losses[s : s + chunk], dtype=float).tolist()


def run_bandit(
    losses: np.ndarray,
    learner: str = "smb",
    eta: Optional[float] = None,
    seed=None,
    trace_sink=None,
) -> BanditRun:
    """Play one learner against a fixed ``(T, k)`` loss matrix."""
    T, k = losses.shape
    tree = build_tree(k)
    eta = default_eta(k, T) if eta is None else eta
    actions = np.empty(T, dtype=np.int64)
    incurred = np.empty(T)
    second = None
    bad = touched = 0
    if learner == "exp3":
        algo = Exp3(k, eta, seed=seed)
        for t, row in enumerate(_rows(losses)):
            a, l = algo.step(lambda i: row[i - 1])
            actions[t], incurred[t] = a, l
    else:
        cls = SMB if learner == "smb_dense" else SparseSMB
        algo = cls(tree, eta, seed=seed, trace_sink=trace_sink)
        second = np.empty(T)
        for t, row in enumerate(_rows(losses)):
            tr = algo.step(lambda i: row[i - 1])
            actions[t], incurred[t] = tr.action, tr.loss
            second[t] = tr.second_moment
            bad += tr.bad_event
            touched += tr.touched
    lv = level_of_switch(actions[1:], actions[:-1])
    movement = np.concatenate([[0.0], np.where(lv > 0, np.exp2(lv) / k, 0.0)])
    col = np.asarray(losses, dtype=float).sum(axis=0)
    best = int(np.argmin(col))
    return BanditRun(
        learner=learner,
        actions=actions,
        losses=incurred,
        movement=movement,
        best_arm=best + 1,
        best_column=np.asarray(losses[:, best], dtype=float),
        second_moment=second,
        bad_events=bad,
        touched=touched,
    )


def _seed_streams(seed: int, n: int):
    return np.random.SeedSequence(seed).spawn(n)


def _trace_path(cfg: ExperimentConfig, seed: int) -> Optional[Path]:
    if not cfg.trace:
        return None
    p = Path(cfg.trace)
    p.parent.mkdir(parents=True, exist_ok=True)
    if len(cfg.seeds) == 1:
        return p
    return p.with_name(f"{p.stem}.seed{seed}{p.suffix}")


def _records(seed, learner, t, loss, move, comparator):
    return {
        "seed": seed,
        "learner": learner,
        "t": t,
        "cum_loss": np.cumsum(loss),
        "cum_movement": np.cumsum(move),
        "cum_regret": np.cumsum(loss + move - comparator),
    }


def _run_seed(cfg: ExperimentConfig, seed: int) -> dict:
    """Everything measured for one seed; plain data so it pickles."""
    if cfg.mode == "bandit":
        loss_ss, *learner_ss = _seed_streams(seed, 1 + len(cfg.learners))
        losses = generate_losses(cfg.adversary, cfg.T, cfg.k, loss_ss)
        D = build_tree(cfg.k).D
        out = {"seed": seed, "learners": {}, "series": []}
        for name, ss in zip(cfg.learners, learner_ss):
            tp = _trace_path(cfg, seed) if name.startswith("smb") else None
            sink = open(tp, "w") if tp else None
            try:
                run = run_bandit(losses, name, cfg.eta, ss, trace_sink=sink)
            finally:
                if sink:
                    sink.close()
            out["learners"][name] = {
                "regret": run.regret,
                "loss": float(run.losses.sum()),
                "movement": float(run.movement.sum()),
                "best_fixed": float(run.best_column.sum()),
                "best_arm": run.best_arm,
                "switches_by_level": switch_counts(run.actions, D),
            }
            if name != "exp3":
                out["learners"][name]["bad_events"] = run.bad_events
            out["series"].append(
                _records(seed, name, np.arange(1, cfg.T + 1), run.losses, run.movement, run.best_column)
            )
        return out

    if cfg.mode == "lipschitz":
        plan = plan_discretization(cfg.L, cfg.T)
        name, args = parse_spec(cfg.adversary)
        period = args[0] if (name == "drifting_sine" and args) else cfg.T
        f = lipschitz_sine(cfg.L, period)
        eta = plan.eta if cfg.eta is None else cfg.eta
        tp = _trace_path(cfg, seed)
        sink = open(tp, "w") if tp else None
        try:
            learner = SparseSMB(plan.tree, eta, seed=_seed_streams(seed, 1)[0], trace_sink=sink)
            points = np.empty(cfg.T)
            for t in range(1, cfg.T + 1):
                tr = learner.step(lambda i: float(f(t, i / plan.k)))
                points[t - 1] = tr.action / plan.k
        finally:
            if sink:
                sink.close()
        rep = movement_regret(points, f, "line", k=plan.k, L=cfg.L)
        ts = np.arange(1, cfg.T + 1)
        loss = f(ts, points)
        move = np.concatenate([[0.0], np.abs(np.diff(points))])
        comp = f(ts, rep.comparator_point)
        return {
            "seed": seed,
            "learners": {
                "smb": {
                    "regret": rep.regret,
                    "loss": rep.loss,
                    "movement": rep.movement,
                    "tree_movement": float(
                        sum(plan.tree.switch_cost(int(round(a * plan.k)), int(round(b * plan.k)))
                            for a, b in zip(points[1:], points[:-1]))
                    ),
                    "best_fixed": rep.comparator,
                    "best_point": rep.comparator_point,
                    "resolution_error": rep.resolution_error,
                    "switches_by_level": switch_counts(np.rint(points * plan.k).astype(int), plan.tree.D),
                }
            },
            "series": [_records(seed, "smb", ts, loss, move, comp)],
            "plan": {"target_k": plan.target_k, "k": plan.k, "eta": eta},
        }

    if cfg.mode == "pricing":
        buyer_ss, run_ss = _seed_streams(seed, 2)
        buyers = generate_buyers(cfg.T, cfg.tau_bar, cfg.values, cfg.patience, buyer_ss)
        # pad to a whole number of double blocks with buyers who never purchase
        buyers += [Buyer(0.0, 0)] * (-len(buyers) % (2 * cfg.tau_bar))
        inst = PricingInstance(buyers, cfg.tau_bar)
        run = run_pricing(inst, seed=run_ss, blocks=cfg.blocks, eta=cfg.eta)
        rho, best = best_fixed_price(inst, run.k)
        tau = cfg.tau_bar
        daily = np.asarray(run.revenue_per_day)
        fixed = np.array([rho if rho <= b.value else 0.0 for b in buyers])
        block_rev = daily.reshape(-1, tau).sum(axis=1)
        block_fixed = fixed.reshape(-1, tau).sum(axis=1)
        prices = np.asarray(run.block_prices)
        move = np.abs(np.diff(prices))[: run.n_blocks]
        return {
            "seed": seed,
            "learners": {
                "smb": {
                    "regret": best - run.revenue,
                    "revenue": run.revenue,
                    "best_fixed": best,
                    "best_price": rho,
                    "movement": float(move.sum()),
                    "switches": int(sum(run.switched)),
                    "updates": int(sum(run.updated)),
                }
            },
            "series": [
                {
                    "seed": seed,
                    "learner": "smb",
                    "t": np.arange(1, run.n_blocks + 1),
                    "cum_loss": np.cumsum(tau - block_rev),
                    "cum_movement": np.cumsum(move),
                    "cum_regret": np.cumsum(block_fixed - block_rev),
                }
            ],
            "plan": {"T_bar": run.T_bar, "k": run.k, "eta": run.eta},
        }
    raise ValueError(f"mode {cfg.mode!r} has no per-seed run")


def _mean_stderr(xs) -> dict:
    xs = np.asarray(xs, dtype=float)
    se = float(xs.std(ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else 0.0
    return {"mean": float(xs.mean()), "stderr": se}


def summarize(cfg: ExperimentConfig, per_seed: list[dict]) -> dict:
    # output locations and worker counts do not change results, so they stay out
    settings = {k: v for k, v in asdict(cfg).items() if k not in ("out", "trace", "jobs", "plot")}
    summary = {"config": settings, "learners": {}}
    names = list(per_seed[0]["learners"])
    for name in names:
        rows = [s["learners"][name] for s in per_seed]
        entry = {}
        for key in rows[0]:
            vals = [r[key] for r in rows]
            if key == "switches_by_level":
                entry[key] = [float(np.mean(col)) for col in zip(*vals)]
            elif isinstance(vals[0], (int, float)):
                entry[key] = _mean_stderr(vals)
        summary["learners"][name] = entry
    if "plan" in per_seed[0]:
        summary["plan"] = per_seed[0]["plan"]
    return summary


def write_records(per_seed: list[dict], fh, stride: int = 1) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for s in per_seed:
        for ser in s["series"]:
            n = len(ser["t"])
            idx = list(range(stride - 1, n, stride))
            if not idx or idx[-1] != n - 1:
                idx.append(n - 1)
            for j in idx:
                w.writerow(
                    [
                        ser["seed"],
                        int(ser["t"][j]),
                        ser["learner"],
                        repr(float(ser["cum_loss"][j])),
                        repr(float(ser["cum_movement"][j])),
                        repr(float(ser["cum_regret"][j])),
                    ]
                )


GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set ylabel 'cumulative regret'
plot '{csv}' using 2:6 every ::1 with lines title 'regret'
"""


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run all seeds, write CSV/summary files if ``cfg.out`` is set, return the summary."""
    if cfg.mode == "verify":
        from .verify import verify_invariants

        return verify_invariants(cfg.scope, cfg.budget)
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            per_seed = list(ex.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        per_seed = [_run_seed(cfg, s) for s in cfg.seeds]
    summary = summarize(cfg, per_seed)
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        try:
            with open(out, "w", newline="") as fh:
                write_records(per_seed, fh, cfg.stride)
            out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
            if cfg.plot:
                out.with_suffix(".gp").write_text(GNUPLOT.format(csv=out.name))
        except OSError as e:
            raise OSError(f"writing experiment output to {out}: {e}") from e
    return summary


def records_csv(cfg: ExperimentConfig) -> str:
    """CSV text of the per-round records, for determinism checks."""
    per_seed = [_run_seed(cfg, s) for s in cfg.seeds]
    buf = io.StringIO()
    write_records(per_seed, buf, cfg.stride)
    return buf.getvalue()
