"""Posted prices against patient buyers, driven by SMB over a price grid.

Days are grouped into blocks of ``tau_bar`` days with one price per block.
A fair coin ``beta_t`` per block decides when SMB is consulted: a new price
is drawn after blocks with ``beta_t = 0, beta_{t+1} = 1`` and feedback
``1 - r'_t`` (one minus the block's mean daily revenue) is reported after
blocks with ``beta_{t+1} = 0, beta_{t+2} = 1``. The two gates never fire on
the same block, and a feedback block always has the same price as the block
after it, so every buyer contributing to the feedback saw a single price.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .errors import IndivisibleHorizon, WindowLengthMismatch
from .smb import SMB, SparseSMB
from .tree import build_tree, pad_action_count


@dataclass(frozen=True)
class Buyer:
    value: float
    patience: int

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"buyer value {self.value!r} outside [0, 1]")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")


@dataclass
class PricingInstance:
    buyers: list[Buyer]
    tau_bar: int

    def __post_init__(self):
        if self.tau_bar < 1:
            raise ValueError("tau_bar must be at least 1")
        for b in self.buyers:
            if b.patience > self.tau_bar:
                raise ValueError(f"buyer patience {b.patience} exceeds tau_bar={self.tau_bar}")

    @property
    def T(self) -> int:
        return len(self.buyers)


def buyer_revenue(buyer: Buyer, window: Sequence[float]) -> float:
    """Lowest price in the buyer's window if she can afford it, else 0."""
    if len(window) != buyer.patience + 1:
        raise WindowLengthMismatch(
            f"window of {len(window)} prices for patience {buyer.patience}"
        )
    m = min(window)
    return m if m <= buyer.value else 0.0


@dataclass
class SellerRun:
    k: int
    eta: float
    T_bar: int
    tau_bar: int
    arms: list[int]  # i_1..i_{n+1}, one per block
    block_prices: list[float]  # rho'_1..rho'_{n+1}
    daily_prices: list[float]  # rho_1..rho_{T+tau_bar}
    betas: list[int]  # beta_0..beta_{n+2}
    switched: list[bool]  # per block t = 1..n: a new arm was drawn for block t+1
    updated: list[bool]  # per block t = 1..n: feedback was reported
    block_feedback: list[float]  # r'_1..r'_n
    revenue_per_day: list[float]  # r_1..r_T

    @property
    def n_blocks(self) -> int:
        return len(self.block_feedback)

    @property
    def revenue(self) -> float:
        return float(sum(self.revenue_per_day))


class Learner(Protocol):
    def select(self) -> int: ...

    def update(self, loss: float): ...


def simulate_seller(
    buyers: Sequence[Buyer],
    tau_bar: int,
    k: int,
    betas: Sequence[int],
    learner: Learner,
    eta: float = float("nan"),
    T_bar: int = 0,
) -> SellerRun:
    """Run the block loop for explicit coins ``betas = (beta_0, ..., beta_{n+2})``.

    ``len(buyers)`` must be a multiple of ``tau_bar``; ``n`` is the block count.
    Arm ``i`` posts price ``i / k``.
    """
    T = len(buyers)
    if T % tau_bar:
        raise IndivisibleHorizon(f"T={T} is not a multiple of tau_bar={tau_bar}")
    n = T // tau_bar
    if len(betas) != n + 3:
        raise ValueError(f"need {n + 3} coins beta_0..beta_{n + 2}, got {len(betas)}")
    for b in buyers:
        if b.patience > tau_bar:
            raise ValueError(f"buyer patience {b.patience} exceeds tau_bar={tau_bar}")

    arm = learner.select()
    awaiting_feedback = True
    arms = [arm]
    block_prices = [arm / k]
    daily = [arm / k] * tau_bar
    switched, updated, feedback, revenue = [], [], [], []
    for t in range(1, n + 1):
        switch = betas[t] == 0 and betas[t + 1] == 1
        if switch:
            if awaiting_feedback:
                # only at t = 1: nothing has been reported for i_1, draw afresh
                getattr(learner, "cancel", lambda: None)()
            arm = learner.select()
            awaiting_feedback = True
        arms.append(arm)
        block_prices.append(arm / k)
        daily.extend([arm / k] * tau_bar)

        block_rev = []
        for u in range((t - 1) * tau_bar, t * tau_bar):
            b = buyers[u]
            m = min(daily[u : u + b.patience + 1])
            block_rev.append(m if m <= b.value else 0.0)
        revenue.extend(block_rev)
        r = sum(block_rev) / tau_bar
        feedback.append(r)

        report = betas[t + 1] == 0 and betas[t + 2] == 1
        if report:
            learner.update(1.0 - r)
            awaiting_feedback = False
        switched.append(switch)
        updated.append(report)

    return SellerRun(
        k=k,
        eta=eta,
        T_bar=T_bar,
        tau_bar=tau_bar,
        arms=arms,
        block_prices=block_prices,
        daily_prices=daily,
        betas=list(betas),
        switched=switched,
        updated=updated,
        block_feedback=feedback,
        revenue_per_day=revenue,
    )


def pricing_parameters(T: int, tau_bar: int, blocks: str = "box") -> tuple[int, int, int, float]:
    """``(T_bar, target_k, k, eta)`` for a horizon of ``T`` days.

    ``blocks="box"`` uses ``T_bar = T / (2 tau_bar)``, ``"prose"`` uses
    ``T / tau_bar``. ``k`` is ``T_bar**(1/3)`` rounded and padded to a power
    of two, ``eta = 2 / sqrt(T_bar k)``.
    """
    if blocks not in ("box", "prose"):
        raise ValueError(f"unknown block convention {blocks!r}")
    T_bar = T // (2 * tau_bar) if blocks == "box" else T // tau_bar
    T_bar = max(T_bar, 1)
    target = max(2, int(round(T_bar ** (1 / 3))))
    k, _ = pad_action_count(target, T_bar)
    return T_bar, target, k, 2.0 / math.sqrt(T_bar * k)


def run_pricing(
    instance: PricingInstance,
    seed=None,
    blocks: str = "box",
    sparse: bool = True,
    eta: Optional[float] = None,
) -> SellerRun:
    """Adaptive pricing on ``instance`` with an SMB learner over prices ``i/k``.

    The horizon must be a multiple of ``2 * tau_bar``. Buyer streams of other
    lengths should be padded with zero-value buyers by the caller.
    """
    T, tau = instance.T, instance.tau_bar
    if T == 0 or T % (2 * tau):
        raise IndivisibleHorizon(f"T={T} is not a positive multiple of 2*tau_bar={2 * tau}")
    T_bar, _, k, eta0 = pricing_parameters(T, tau, blocks)
    eta = eta0 if eta is None else eta
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    smb_seed, coin_seed = ss.spawn(2)
    n = T // tau
    betas = np.random.default_rng(coin_seed).integers(0, 2, size=n + 3).tolist()
    cls = SparseSMB if sparse else SMB
    learner = cls(build_tree(k), eta, seed=smb_seed)
    return simulate_seller(instance.buyers, tau, k, betas, learner, eta=eta, T_bar=T_bar)


def fixed_price_revenue(instance: PricingInstance, price: float) -> float:
    """Total revenue when ``price`` is posted every day."""
    return float(sum(price for b in instance.buyers if price <= b.value))


def best_fixed_price(instance: PricingInstance, k: Optional[int] = None) -> tuple[float, float]:
    """Best single price in hindsight and its revenue.

    A fixed price sells exactly to buyers valuing the item at least that much,
    so revenue is maximised at some buyer value; grid prices ``i/k`` are
    added to the candidates when ``k`` is given.
    """
    values = sorted(b.value for b in instance.buyers)
    if not values:
        return 1.0, 0.0
    candidates = set(values)
    if k is not None:
        candidates.update(i / k for i in range(1, k + 1))
    T = len(values)
    best_rho, best_rev = 1.0, -1.0
    for rho in sorted(candidates):
        rev = rho * (T - bisect.bisect_left(values, rho))
        if rev > best_rev:
            best_rho, best_rev = rho, rev
    return best_rho, float(best_rev)


def pricing_regret(instance: PricingInstance, run: SellerRun) -> float:
    _, best = best_fixed_price(instance, run.k)
    return best - run.revenue


def read_buyers_csv(path) -> list[Buyer]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"value", "patience"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'value,patience'")
        return [Buyer(float(row["value"]), int(row["patience"])) for row in reader]


def write_buyers_csv(buyers: Sequence[Buyer], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "patience"])
        for b in buyers:
            w.writerow([repr(b.value), b.patience])


RUN_COLUMNS = ["block", "price", "beta", "switched", "updated", "block_revenue"]


def write_run_csv(run: SellerRun, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for t in range(1, run.n_blocks + 1):
            w.writerow(
                [
                    t,
                    repr(run.block_prices[t - 1]),
                    run.betas[t],
                    int(run.switched[t - 1]),
                    int(run.updated[t - 1]),
                    repr(run.block_feedback[t - 1]),
                ]
            )
