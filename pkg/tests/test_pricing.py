import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smbandit.bench.fixtures import (
    BETAS,
    BUYERS,
    EXPECTED,
    K,
    ScriptedLearner,
    fixture_instance,
    fixture_mismatches,
    run_fixture,
)
from smbandit.errors import IndivisibleHorizon, WindowLengthMismatch
from smbandit.pricing import (
    RUN_COLUMNS,
    Buyer,
    PricingInstance,
    best_fixed_price,
    buyer_revenue,
    fixed_price_revenue,
    pricing_parameters,
    pricing_regret,
    read_buyers_csv,
    run_pricing,
    simulate_seller,
    write_buyers_csv,
    write_run_csv,
)
from smbandit.tree import build_tree


def test_buyer_revenue_examples():
    assert buyer_revenue(Buyer(0.5, 0), [0.4]) == 0.4
    assert buyer_revenue(Buyer(0.3, 1), [0.4, 0.25]) == 0.25
    assert buyer_revenue(Buyer(0.2, 1), [0.4, 0.25]) == 0.0
    with pytest.raises(WindowLengthMismatch):
        buyer_revenue(Buyer(0.2, 1), [0.4])


def test_buyer_validation():
    with pytest.raises(ValueError):
        Buyer(1.5, 0)
    with pytest.raises(ValueError):
        PricingInstance([Buyer(0.5, 3)], 2)


def test_all_heads_never_switch():
    learner = ScriptedLearner((3, 1, 1, 1, 1))
    run = simulate_seller([Buyer(0.9, 0)] * 4, 1, 4, [1] * 7, learner)
    assert not any(run.switched) and not any(run.updated)
    assert set(run.daily_prices) == {0.75}
    assert learner.calls == [("select", 3)]


def test_alternating_coins():
    n = 8
    betas = [(t + 1) % 2 for t in range(n + 3)]  # beta_t = 0 for odd t, 1 for even t
    learner = ScriptedLearner(tuple([1, 2] * 10))
    run = simulate_seller([Buyer(0.5, 0)] * (2 * n), 2, 2, betas, learner)
    assert run.switched == [t % 2 == 1 for t in range(1, n + 1)]
    assert run.updated == [t % 2 == 0 for t in range(1, n + 1)]
    assert not any(a and b for a, b in zip(run.switched, run.updated))


def test_full_purchase_feedback():
    betas = [1, 0, 1, 0, 1, 0, 1]
    learner = ScriptedLearner((2, 3, 1, 4))
    run = simulate_seller([Buyer(1.0, 0)] * 4, 1, 4, betas, learner)
    for t in range(run.n_blocks):
        assert run.block_feedback[t] == run.block_prices[t]
    reported = learner.reported_losses
    assert reported == [1 - run.block_feedback[t] for t in range(run.n_blocks) if run.updated[t]]


def test_switch_before_first_feedback_cancels():
    learner = ScriptedLearner((1, 2))
    run = simulate_seller([Buyer(0.5, 0)] * 2, 1, 2, [1, 0, 1, 1, 1], learner)
    assert run.switched == [True, False]
    assert learner.calls == [("select", 1), ("cancel", 0), ("select", 2)]


def test_best_fixed_price_examples():
    inst = PricingInstance([Buyer(0.5, 0)] * 10, 1)
    assert best_fixed_price(inst) == (0.5, 5.0)
    inst = PricingInstance([Buyer(v, 0) for v in [0.3, 0.9] * 5], 1)
    rho, rev = best_fixed_price(inst)
    assert rho == 0.9 and rev == pytest.approx(4.5)
    assert fixed_price_revenue(inst, 0.3) == pytest.approx(3.0)
    assert best_fixed_price(PricingInstance([], 1))[1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.sampled_from([2, 4, 8]))
def test_best_fixed_price_beats_every_grid_price(values, k):
    inst = PricingInstance([Buyer(v, 0) for v in values], 1)
    rho, best = best_fixed_price(inst, k)
    assert best == pytest.approx(fixed_price_revenue(inst, rho))
    for rho2 in list(values) + [i / k for i in range(1, k + 1)]:
        assert fixed_price_revenue(inst, rho2) <= best + 1e-12


def test_regret_of_fixed_strategies():
    buyers = [Buyer(0.5, 0), Buyer(0.75, 1)] * 4
    inst = PricingInstance(buyers, 2)
    rho, best = best_fixed_price(inst, 4)
    arm = int(rho * 4)
    run = simulate_seller(buyers, 2, 4, [0, 1] * 3 + [0], ScriptedLearner((arm,) * 10))
    assert pricing_regret(inst, run) == pytest.approx(0.0)
    run = simulate_seller(buyers, 2, 4, [0, 1] * 3 + [0], ScriptedLearner((4,) * 10))
    assert run.revenue == 0.0 and pricing_regret(inst, run) == best


def test_fixture_matches_hand_oracle():
    assert fixture_mismatches() == []
    run, learner = run_fixture()
    assert run.betas == list(BETAS)
    assert best_fixed_price(fixture_instance(), K)[1] - run.revenue == EXPECTED["regret"]


def test_pricing_parameters():
    T_bar, target, k, eta = pricing_parameters(2**16, 2)
    assert T_bar == 2**14 and target == 25 and k == 32
    assert eta == pytest.approx(2 / np.sqrt(2**14 * 32))
    T_bar, target, k, eta = pricing_parameters(2**16, 2, blocks="prose")
    assert T_bar == 2**15 and target == 32 and k == 32
    with pytest.raises(ValueError):
        pricing_parameters(100, 2, blocks="other")


def test_run_pricing_rejects_bad_horizon():
    with pytest.raises(IndivisibleHorizon):
        run_pricing(PricingInstance([Buyer(0.5, 0)] * 6, 2))
    with pytest.raises(IndivisibleHorizon):
        run_pricing(PricingInstance([], 2))


def _random_instance(seed, T=64, tau=2):
    rng = np.random.default_rng(seed)
    return PricingInstance(
        [Buyer(float(v), int(p)) for v, p in zip(rng.random(T), rng.integers(0, tau + 1, T))], tau
    )


def test_run_pricing_deterministic():
    inst = _random_instance(0, 256)
    a, b = run_pricing(inst, seed=4), run_pricing(inst, seed=4)
    assert a.daily_prices == b.daily_prices and a.revenue_per_day == b.revenue_per_day


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]), st.sampled_from(["box", "prose"]))
def test_seller_invariants(seed, tau, blocks):
    inst = _random_instance(seed, 24 * tau, tau)
    run = run_pricing(inst, seed=seed, blocks=blocks)
    n, T = run.n_blocks, inst.T
    tree = build_tree(run.k)
    # prices are announced one block ahead of every buyer window
    assert len(run.daily_prices) == T + tau
    for u, b in enumerate(inst.buyers):
        window = run.daily_prices[u : u + b.patience + 1]
        assert run.revenue_per_day[u] == buyer_revenue(b, window)
    for t in range(n):
        if run.updated[t]:
            assert run.block_prices[t] == run.block_prices[t + 1]
        gap = abs(run.block_prices[t] - run.block_prices[t + 1])
        assert gap <= tree.switch_cost(run.arms[t], run.arms[t + 1]) + 1e-15
    assert sum(r * tau for r in run.block_feedback) == pytest.approx(run.revenue, abs=1e-9)


@given(st.floats(0, 1), st.integers(1, 5), st.sampled_from([2, 4, 8, 16]))
def test_lowering_price_costs_at_most_one_step(value, i, k):
    i = min(i + 1, k)
    buyer = Buyer(value, 0)
    hi, lo = i / k, (i - 1) / k
    assert buyer_revenue(buyer, [lo]) >= buyer_revenue(buyer, [hi]) - 1 / k


def test_csv_round_trip(tmp_path):
    path = tmp_path / "buyers.csv"
    write_buyers_csv(BUYERS, path)
    assert read_buyers_csv(path) == list(BUYERS)
    (tmp_path / "bad.csv").write_text("price,days\n1,2\n")
    with pytest.raises(ValueError):
        read_buyers_csv(tmp_path / "bad.csv")
    run, _ = run_fixture()
    write_run_csv(run, tmp_path / "run.csv")
    rows = list(csv.reader(open(tmp_path / "run.csv")))
    assert rows[0] == RUN_COLUMNS and len(rows) == 1 + 3
    assert [float(r[5]) for r in rows[1:]] == EXPECTED["block_feedback"]
