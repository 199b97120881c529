"""Hand-checked pricing fixture: three blocks of two days each.

Coins ``beta_0..beta_5 = 1 1 0 1 0 1`` give

* block 1: no switch; feedback (beta_2 = 0, beta_3 = 1),
* block 2: switch (beta_2 = 0, beta_3 = 1) for block 3; no feedback,
* block 3: no switch; feedback (beta_4 = 0, beta_5 = 1).

With k = 4 and the scripted arms 2 then 3, block prices are
0.5, 0.5, 0.75 and the announced block 4 keeps 0.75. Daily prices for
days 1..8: 0.5 0.5 0.5 0.5 0.75 0.75 0.75 0.75.

=====  =========  ========  ===========  =======
 day    value      patience  window min   revenue
=====  =========  ========  ===========  =======
  1     0.625      0         0.5          0.5
  2     0.375      2         0.5          0
  3     0.875      2         0.5          0.5
  4     0.8125     1         0.5          0.5
  5     0.6875     2         0.75         0
  6     1.0        1         0.75         0.75
=====  =========  ========  ===========  =======

Block means r' = 0.25, 0.5, 0.375, so the learner sees losses 0.75 and
0.625. Total revenue 2.25. The best fixed price is 0.625, which sells to
five buyers for 3.125, so the regret is 0.875. All numbers are dyadic and
exact in floating point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..pricing import Buyer, PricingInstance, SellerRun, best_fixed_price, simulate_seller

TAU_BAR = 2
K = 4
BETAS = (1, 1, 0, 1, 0, 1)
ARMS = (2, 3)
BUYERS = (
    Buyer(0.625, 0),
    Buyer(0.375, 2),
    Buyer(0.875, 2),
    Buyer(0.8125, 1),
    Buyer(0.6875, 2),
    Buyer(1.0, 1),
)

EXPECTED = {
    "block_prices": [0.5, 0.5, 0.75, 0.75],
    "daily_prices": [0.5, 0.5, 0.5, 0.5, 0.75, 0.75, 0.75, 0.75],
    "revenue_per_day": [0.5, 0.0, 0.5, 0.5, 0.0, 0.75],
    "block_feedback": [0.25, 0.5, 0.375],
    "switched": [False, True, False],
    "updated": [True, False, True],
    "reported_losses": [0.75, 0.625],
    "revenue": 2.25,
    "best_price": 0.625,
    "best_revenue": 3.125,
    "regret": 0.875,
}


@dataclass
class ScriptedLearner:
    """Plays a fixed list of arms and records every protocol call."""

    arms: tuple[int, ...]
    calls: list[tuple[str, float]] = field(default_factory=list)
    _next: int = 0

    def select(self) -> int:
        arm = self.arms[self._next]
        self._next += 1
        self.calls.append(("select", arm))
        return arm

    def update(self, loss: float) -> None:
        self.calls.append(("update", loss))

    def cancel(self) -> None:
        self.calls.append(("cancel", 0))

    @property
    def reported_losses(self) -> list[float]:
        return [v for name, v in self.calls if name == "update"]


def fixture_instance() -> PricingInstance:
    return PricingInstance(list(BUYERS), TAU_BAR)


def run_fixture() -> tuple[SellerRun, ScriptedLearner]:
    learner = ScriptedLearner(ARMS)
    run = simulate_seller(list(BUYERS), TAU_BAR, K, list(BETAS), learner)
    return run, learner


def fixture_mismatches() -> list[str]:
    """Names of fixture quantities that differ from the hand computation."""
    run, learner = run_fixture()
    rho, best = best_fixed_price(fixture_instance(), K)
    got = {
        "block_prices": run.block_prices,
        "daily_prices": run.daily_prices,
        "revenue_per_day": run.revenue_per_day,
        "block_feedback": run.block_feedback,
        "switched": run.switched,
        "updated": run.updated,
        "reported_losses": learner.reported_losses,
        "revenue": run.revenue,
        "best_price": rho,
        "best_revenue": best,
        "regret": best - run.revenue,
    }
    return [key for key, want in EXPECTED.items() if got[key] != want]
