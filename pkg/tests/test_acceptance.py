"""Acceptance suite: twelve criteria, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` (lines are also repeated in
the terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Thresholds and runtimes are the contract values; nothing here is tuned to the
measurements.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass

import numpy as np
import pytest

from smbandit.bench.experiment import run_bandit, switch_counts
from smbandit.bench.fixtures import fixture_mismatches
from smbandit.bench.generators import generate_buyers, generate_losses, lipschitz_sine
from smbandit.bench.verify import mw_violations, sign_enumeration_error, smb_run_stats, sparse_dense_gap
from smbandit.continuum import movement_regret, plan_discretization, run_lipschitz
from smbandit.pricing import PricingInstance, pricing_regret, run_pricing
from smbandit.smb import SparseSMB, default_eta
from smbandit.tree import build_tree

RESULTS: dict[int, str] = {}


@dataclass
class Outcome:
    passed: bool
    detail: str
    seconds: float = 0.0


def _record(n: int, outcome: Outcome, budget: float) -> Outcome:
    in_time = outcome.seconds < budget
    ok = outcome.passed and in_time
    RESULTS[n] = (
        f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {outcome.detail}"
        f"  [{outcome.seconds:.1f} s of {budget:.0f} s]"
    )
    print(RESULTS[n])
    return Outcome(ok, outcome.detail, outcome.seconds)


def _timed(fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return Outcome(passed, detail, time.perf_counter() - t0)


def _slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


# ----------------------------------------------------------------------------
# criteria 1-3 share the same runs

_SMB_GRID = [(k, eta) for k in (4, 16, 64) for eta in (0.01, 0.1)]
_smb_stats: list = []


def _smb_runs():
    if not _smb_stats:
        _smb_stats.extend(smb_run_stats(k, eta, 10_000, seed=i) for i, (k, eta) in enumerate(_SMB_GRID))
    return _smb_stats


def criterion_1() -> Outcome:
    def body():
        dev = max(s.max_marginal_dev for s in _smb_runs())
        return dev <= 1e-8, f"max marginal change {dev:.2e} <= 1e-8 over 6 x 10^4 rounds"

    return _timed(body)


def criterion_2() -> Outcome:
    def body():
        err, n = sign_enumeration_error(1000, max_D=6, seed=12)
        return err <= 1e-9, f"max |avg estimate - lbar_0| {err:.2e} <= 1e-9 over {n} states"

    return _timed(body)


def criterion_3() -> Outcome:
    def body():
        stats = _smb_runs()
        lb = sum(s.lbar_violations for s in stats)
        fl = sum(s.floor_violations for s in stats)
        worst = min(s.min_estimate_eta for s in stats)
        return lb == 0 and fl == 0, f"lbar bound violations {lb}, floor violations {fl}, min eta*estimate {worst:.3f}"

    return _timed(body)


# ----------------------------------------------------------------------------
# criteria 4-6 share one long run

_long_run: dict = {}


def _long():
    if not _long_run:
        t0 = time.perf_counter()
        k, T = 64, 200_000
        losses = generate_losses("stochastic_gap(0.4, 0.2)", T, k, seed=2024)
        run = run_bandit(losses, "smb", default_eta(k, T), seed=7)
        _long_run.update(k=k, T=T, run=run, seconds=time.perf_counter() - t0)
    return _long_run


def criterion_4() -> Outcome:
    def body():
        r = _long()
        k, T, run = r["k"], r["T"], r["run"]
        D = build_tree(k).D
        counts = switch_counts(run.actions, D)
        worst, ok = -math.inf, True
        parts = []
        for d, c in enumerate(counts):
            freq = c / (T - 1)
            bound = 2 ** -(d + 1) + 3 * math.sqrt(2 ** -(d + 1) / T)
            ok &= freq <= bound
            worst = max(worst, freq - bound)
            parts.append(f"{freq:.4f}/{bound:.4f}")
        return ok, f"level switch freq/bound {' '.join(parts)}"

    out = _timed(body)
    out.seconds += _long_run["seconds"]
    return out


def criterion_5() -> Outcome:
    def body():
        r = _long()
        k, T, run = r["k"], r["T"], r["run"]
        total = float(run.movement.sum())
        mean = total / T
        b_mean = math.log2(k) / (2 * k) + 3 / math.sqrt(T)
        b_total = 1.2 * (T / k) * math.log2(k)
        return mean <= b_mean and total <= b_total, (
            f"mean movement {mean:.5f} <= {b_mean:.5f}; total {total:.0f} <= {b_total:.0f}"
        )

    return _timed(body)


def criterion_6() -> Outcome:
    def body():
        r = _long()
        k, run = r["k"], r["run"]
        m = float(run.second_moment.mean())
        bound = 2 * k * math.log2(k) * 1.1
        return m <= bound, f"mean p.estimate^2 {m:.1f} <= {bound:.1f}"

    return _timed(body)


# ----------------------------------------------------------------------------


def criterion_7() -> Outcome:
    def body():
        bad, margin = mw_violations(100, seed=7)
        return bad == 0, f"{bad} violations in 100 sequences (min margin {margin:.3g})"

    return _timed(body)


def criterion_8() -> Outcome:
    def body():
        k, T = 256, 10_000
        g = sparse_dense_gap(k, default_eta(k, T), T, seed=8)
        ok = g["action_mismatches"] == 0 and g["max_p_gap"] <= 1e-12 and g["mean_touched"] <= 2 * math.log2(k)
        return ok, (
            f"action mismatches {g['action_mismatches']}, max |p gap| {g['max_p_gap']:.1e}, "
            f"mean touched {g['mean_touched']:.2f} <= {2 * math.log2(k):.0f}"
        )

    return _timed(body)


def criterion_9() -> Outcome:
    def body():
        k, seeds, D = 16, 20, 4
        means = {}
        smb_top = exp3_top = 0
        for T in (25_000, 100_000):
            regrets = []
            for s in range(seeds):
                loss_ss, smb_ss, exp3_ss = np.random.SeedSequence([9, s]).spawn(3)
                losses = generate_losses("stochastic_gap(0.4, 0.2)", T, k, loss_ss)
                smb = run_bandit(losses, "smb", default_eta(k, T), smb_ss)
                regrets.append(smb.regret)
                if T == 100_000:
                    exp3 = run_bandit(losses, "exp3", default_eta(k, T), exp3_ss)
                    smb_top += switch_counts(smb.actions, D)[D - 1]
                    exp3_top += switch_counts(exp3.actions, D)[D - 1]
            means[T] = float(np.mean(regrets))
        slope = _slope(list(means), list(means.values()))
        bound = 8 * math.sqrt(k * 100_000) * math.log2(k)
        ratio = smb_top / max(exp3_top, 1)
        ok = slope <= 0.75 and means[100_000] <= bound and ratio <= 0.10
        return ok, (
            f"exponent {slope:.3f} <= 0.75; regret at 1e5 {means[100_000]:.0f} <= {bound:.0f}; "
            f"top-level switches SMB/Exp3 {ratio:.3f} <= 0.10"
        )

    return _timed(body)


def criterion_10() -> Outcome:
    def body():
        Ts, seeds = (2**14, 2**16), 10
        means = []
        for T in Ts:
            plan = plan_discretization(1.0, T)
            # half a cycle of drift over the horizon keeps the best fixed point informative
            f = lipschitz_sine(1.0, period=2 * T)
            regs = []
            for s in range(seeds):
                points, _ = run_lipschitz(plan, f, seed=np.random.SeedSequence([10, s]))
                regs.append(movement_regret(points, f, "line", k=plan.k, L=1.0).regret)
            means.append(float(np.mean(regs)))
        slope = _slope(Ts, means)
        return slope <= 0.8, f"exponent {slope:.3f} <= 0.8 (mean regret {means[0]:.0f}, {means[1]:.0f})"

    return _timed(body)


def criterion_11() -> Outcome:
    def body():
        Ts, seeds, tau = (2**12, 2**14, 2**16), 20, 2
        means = []
        for T in Ts:
            regs = []
            for s in range(seeds):
                buyer_ss, run_ss = np.random.SeedSequence([11, s]).spawn(2)
                inst = PricingInstance(generate_buyers(T, tau, "uniform", "uniform", buyer_ss), tau)
                regs.append(pricing_regret(inst, run_pricing(inst, seed=run_ss)))
            means.append(float(np.mean(regs)))
        slope = _slope(Ts, means)
        mism = fixture_mismatches()
        return slope <= 0.8 and not mism, (
            f"exponent {slope:.3f} <= 0.8 (mean regret {', '.join(f'{m:.0f}' for m in means)}); "
            f"fixture mismatches {mism or 'none'}"
        )

    return _timed(body)


def criterion_12() -> Outcome:
    def body():
        k, t_obs, reps, eta = 8, 20, 20_000, 0.05
        tree = build_tree(k)
        blocks = [b for d in range(tree.D + 1) for b in tree.blocks(d)]
        ratios = np.empty((reps, len(blocks)))
        for r in range(reps):
            learner_ss, loss_ss = np.random.SeedSequence([12, r]).spawn(2)
            learner = SparseSMB(tree, eta, seed=learner_ss)
            losses = generate_losses("stochastic_gap(0.3, 0.4)", t_obs - 1, k, loss_ss)
            for t in range(t_obs - 1):
                row = losses[t]
                learner.step(lambda i: float(row[i - 1]))
            masses = [learner.block_mass(b) for b in blocks]
            arm = learner.select()
            ratios[r] = [(arm in b) / m for b, m in zip(blocks, masses)]
        mean = ratios.mean(axis=0)
        se = ratios.std(axis=0, ddof=1) / math.sqrt(reps)
        # the root block has no spread: its ratio is exactly 1 in every replication
        z = [abs(m - 1) / e if e > 0 else (0.0 if m == 1 else math.inf) for m, e in zip(mean, se)]
        worst = max(z)
        return worst <= 3.0, f"max |mean - 1| / SE {worst:.2f} <= 3 over {len(blocks)} blocks"

    return _timed(body)


BUDGETS = {1: 10, 2: 10, 3: 10, 4: 30, 5: 30, 6: 30, 7: 5, 8: 20, 9: 180, 10: 120, 11: 180, 12: 60}
CRITERIA = {n: globals()[f"criterion_{n}"] for n in BUDGETS}


@pytest.mark.parametrize("n", list(BUDGETS))
def test_criterion(n):
    out = _record(n, CRITERIA[n](), BUDGETS[n])
    assert out.passed, RESULTS[n]


if __name__ == "__main__":
    failed = 0
    for n in BUDGETS:
        failed += not _record(n, CRITERIA[n](), BUDGETS[n]).passed
    sys.exit(1 if failed else 0)
