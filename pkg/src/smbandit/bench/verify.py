"""Invariant suites with measured margins.

Each check returns a :class:`Check`; failures are reported, never raised.
The functions are also used directly by the acceptance tests.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..baselines import verify_second_order_bound
from ..pricing import PricingInstance, run_pricing
from ..smb import SMB, SparseSMB, default_eta, estimate_round, expand_rings, is_bad_event
from ..tree import build_tree
from .fixtures import EXPECTED, fixture_mismatches
from .generators import generate_buyers

SCOPES = ("smb", "mw", "pricing", "all")


@dataclass
class Check:
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.threshold - self.measured

    def as_dict(self) -> dict:
        out = asdict(self)
        out["margin"] = self.margin
        return out


def _upper(name, measured, threshold, detail="") -> Check:
    return Check(name, float(measured), float(threshold), bool(measured <= threshold), detail)


# ----------------------------------------------------------------------------
# smb


@dataclass
class SmbRunStats:
    rounds: int = 0
    max_marginal_dev: float = 0.0
    lbar_violations: int = 0
    floor_violations: int = 0
    min_estimate_eta: float = math.inf  # min over rounds of eta * estimate


def smb_run_stats(k: int, eta: float, rounds: int, seed=0) -> SmbRunStats:
    """Dense SMB on uniform random losses; checks every round.

    * marginals of all blocks at levels ``d >= d_t`` are unchanged,
    * ``0 <= lbar_d <= prod_{h<d}(1 + sigma_h) / p(A_d(i_t))`` on ``A_d(i_t)``,
    * the estimate is at least ``-1/eta`` (skipped rounds count as zero).
    """
    tree = build_tree(k)
    D = tree.D
    learner = SMB(tree, eta, seed=np.random.SeedSequence([seed, 1]))
    losses = np.random.default_rng([seed, 2]).random(rounds)
    st = SmbRunStats(rounds=rounds)

    def level_sums(p):
        out = [p]
        for _ in range(D):
            out.append(out[-1][0::2] + out[-1][1::2])
        return out

    p_obj, before = learner.p, level_sums(learner.p)
    for t in range(rounds):
        tr = learner.step(lambda i: losses[t])
        cap = 1.0
        for d, c in enumerate(tr.balancing):
            bound = cap / tr.masses[d]
            if not (0.0 <= c <= bound * (1 + 1e-12)):
                st.lbar_violations += 1
            cap *= 1 + tr.signs[d]
        est_min = min(tr.rings)
        st.min_estimate_eta = min(st.min_estimate_eta, eta * est_min)
        if est_min < -1.0 / eta - 1e-12:
            st.floor_violations += 1
        if learner.p is p_obj:
            continue  # the dense learner replaces p on every update it applies
        p_obj, after = learner.p, level_sums(learner.p)
        for d in range(tr.rebalance_level, D + 1):
            st.max_marginal_dev = max(st.max_marginal_dev, float(np.abs(after[d] - before[d]).max()))
        before = after
    return st


def sign_enumeration_error(n_states: int, max_D: int = 6, seed=0) -> tuple[float, int]:
    """Largest deviation of the sign-averaged estimate from ``lbar_0``.

    States are random ``(p, i_t, loss, eta)`` with ``i_t`` outside the bad
    event. Returns ``(max_abs_error, states_checked)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < n_states:
        D = int(rng.integers(1, max_D + 1))
        tree = build_tree(1 << D)
        p = rng.dirichlet(np.full(tree.k, 0.5))
        arm = int(rng.integers(1, tree.k + 1))
        masses = [float(p[b.lo - 1 : b.hi].sum()) for b in (tree.subtree(arm, d) for d in range(D + 1))]
        eta = float(10 ** rng.uniform(-3, 0))
        if masses[0] <= 0 or is_bad_event(masses, eta):
            continue
        loss = float(rng.random())
        avg = np.zeros(tree.k)
        for signs in itertools.product((-1, 1), repeat=D):
            est = estimate_round(masses, loss, signs, eta)
            avg += expand_rings(tree, arm, est.rings)
        avg /= 2**D
        target = np.zeros(tree.k)
        target[arm - 1] = loss / masses[0]
        worst = max(worst, float(np.abs(avg - target).max()))
        done += 1
    return worst, done


def sparse_dense_gap(k: int, eta: float, rounds: int, seed=0) -> dict:
    """Run both paths on the same seed and losses; compare actions and ``p``."""
    tree = build_tree(k)
    dense = SMB(tree, eta, seed=seed)
    sparse = SparseSMB(tree, eta, seed=seed)
    losses = np.random.default_rng([seed, 3]).random(rounds)
    mismatched = 0
    touched = 0
    for t in range(rounds):
        a = dense.step(lambda i: losses[t])
        b = sparse.step(lambda i: losses[t])
        mismatched += a.action != b.action
        touched += b.touched
    gap = float(np.abs(dense.probabilities() - sparse.probabilities()).max())
    return {"action_mismatches": mismatched, "max_p_gap": gap, "mean_touched": touched / rounds}


def smb_checks(budget: int) -> list[Check]:
    per_run = max(1, budget // 6)
    stats = [smb_run_stats(k, eta, per_run, seed=i) for i, (k, eta) in enumerate(itertools.product((4, 16, 64), (0.01, 0.1)))]
    dev = max(s.max_marginal_dev for s in stats)
    sign_err, n = sign_enumeration_error(min(1000, max(10, budget // 10)))
    rounds = min(budget, 10_000)
    sd = sparse_dense_gap(256, default_eta(256, rounds), rounds)
    return [
        _upper("smb.marginal_preservation", dev, 1e-8, f"{6 * per_run} rounds"),
        _upper("smb.lbar_bounds_violations", sum(s.lbar_violations for s in stats), 0),
        _upper("smb.estimator_floor_violations", sum(s.floor_violations for s in stats), 0),
        _upper("smb.sign_enumeration", sign_err, 1e-9, f"{n} states"),
        _upper("smb.sparse_dense_actions", sd["action_mismatches"], 0),
        _upper("smb.sparse_dense_p", sd["max_p_gap"], 1e-12),
        _upper("smb.sparse_touched", sd["mean_touched"], 2 * math.log2(256)),
    ]


# ----------------------------------------------------------------------------
# mw


def mw_violations(n_seq: int = 100, seed=0) -> tuple[int, float]:
    """Random admissible cost sequences; returns ``(violations, min_margin)``."""
    rng = np.random.default_rng(seed)
    bad, margin = 0, math.inf
    for _ in range(n_seq):
        k = int(rng.integers(2, 33))
        T = int(rng.integers(1, 1001))
        eta = float(10 ** rng.uniform(-2, 0))
        costs = rng.uniform(-1.0 / eta, 1.0 / eta, size=(T, k))
        chk = verify_second_order_bound(None, costs, eta)
        bad += not chk.holds
        margin = min(margin, chk.margin)
    return bad, margin


def mw_checks(budget: int) -> list[Check]:
    n = max(1, min(100, budget))
    bad, margin = mw_violations(n)
    return [_upper("mw.second_order_bound_violations", bad, 0, f"{n} sequences, min margin {margin:.4g}")]


# ----------------------------------------------------------------------------
# pricing


def pricing_run_invariants(T: int, tau_bar: int, seed=0) -> dict:
    """Counts of violated pricing invariants on one random run."""
    buyers = generate_buyers(T, tau_bar, seed=np.random.SeedSequence([seed, 4]))
    run = run_pricing(PricingInstance(buyers, tau_bar), seed=seed)
    tree = build_tree(run.k)
    n = run.n_blocks
    price_const = sum(
        1 for t in range(n) if run.updated[t] and run.block_prices[t] != run.block_prices[t + 1]
    )
    movement = sum(
        1
        for t in range(n)
        if abs(run.block_prices[t] - run.block_prices[t + 1])
        > tree.switch_cost(run.arms[t], run.arms[t + 1]) + 1e-15
    )
    conservation = abs(sum(r * tau_bar for r in run.block_feedback) - run.revenue)
    return {"feedback_price_changes": price_const, "movement_violations": movement, "conservation_gap": conservation}


def pricing_checks(budget: int) -> list[Check]:
    mism = fixture_mismatches()
    T = max(4, min(budget, 1 << 12) // 4 * 4)
    inv = pricing_run_invariants(T, 2)
    return [
        Check("pricing.fixture_exact", len(mism), 0, not mism, ",".join(mism) or f"regret {EXPECTED['regret']}"),
        _upper("pricing.feedback_blocks_single_price", inv["feedback_price_changes"], 0),
        _upper("pricing.movement_identity", inv["movement_violations"], 0),
        _upper("pricing.revenue_conservation", inv["conservation_gap"], 1e-9),
    ]


def verify_invariants(scope: str = "all", budget: int = 10_000) -> dict:
    """Run the invariant suites in ``scope``; returns a JSON-ready report."""
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}")
    checks: list[Check] = []
    if scope in ("smb", "all"):
        checks += smb_checks(budget)
    if scope in ("mw", "all"):
        checks += mw_checks(budget)
    if scope in ("pricing", "all"):
        checks += pricing_checks(budget)
    return {
        "scope": scope,
        "budget": budget,
        "passed": all(c.passed for c in checks),
        "checks": [c.as_dict() for c in checks],
    }
