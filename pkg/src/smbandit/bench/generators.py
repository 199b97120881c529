"""Seeded loss and buyer generators for experiments."""
from __future__ import annotations

import math
import re
from typing import Optional

import numpy as np

from ..errors import UnknownSpec
from ..pricing import Buyer

_SPEC = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_spec(spec: str) -> tuple[str, list[float]]:
    """``"stochastic_gap(0.4, 0.2)"`` -> ``("stochastic_gap", [0.4, 0.2])``."""
    m = _SPEC.match(spec)
    if not m:
        raise UnknownSpec(f"cannot parse {spec!r}")
    name, args = m.group(1), m.group(2)
    try:
        values = [float(a) for a in args.split(",")] if args and args.strip() else []
    except ValueError:
        raise UnknownSpec(f"bad arguments in {spec!r}") from None
    return name, values


def generate_losses(spec: str, T: int, k: int, seed=None) -> np.ndarray:
    """Loss matrix of shape ``(T, k)``; row ``t-1`` is the loss vector of round ``t``.

    stochastic_gap(mu, gap)
        Bernoulli losses, arm 1 has mean ``mu``, every other arm ``mu + gap``.
    drifting_sine(period)
        ``0.5 + 0.5 sin(2 pi (t/period + i/k))``; period defaults to ``T``.
    adversarial_flip(epoch)
        The best arm alternates between 1 and ``k`` every ``epoch`` rounds
        (default ``sqrt(T)``): loss 0 for the best, 1 for the opposite end,
        0.5 for everything else.
    """
    name, args = parse_spec(spec)
    t = np.arange(1, T + 1)[:, None]
    i = np.arange(1, k + 1)[None, :]
    if name == "stochastic_gap":
        mu, gap = (args + [0.4, 0.2][len(args):])[:2]
        means = np.full(k, mu + gap)
        means[0] = mu
        if not np.all((0 <= means) & (means <= 1)):
            raise UnknownSpec(f"means outside [0, 1] in {spec!r}")
        rng = np.random.default_rng(seed)
        return (rng.random((T, k)) < means).astype(np.float32)
    if name == "drifting_sine":
        period = args[0] if args else T
        return np.clip(0.5 + 0.5 * np.sin(2 * np.pi * (t / period + i / k)), 0.0, 1.0)
    if name == "adversarial_flip":
        epoch = int(args[0]) if args else max(1, int(math.isqrt(T)))
        out = np.full((T, k), 0.5)
        even = ((np.arange(T) // epoch) % 2 == 0)
        out[even, 0], out[even, k - 1] = 0.0, 1.0
        out[~even, 0], out[~even, k - 1] = 1.0, 0.0
        return out
    raise UnknownSpec(f"unknown loss generator {name!r}")


def lipschitz_sine(L: float = 1.0, period: Optional[float] = None, T: Optional[int] = None):
    """``f(t, x) = 0.5 + a sin(2 pi (t/period + x))`` with ``a = min(0.5, L / (2 pi))``.

    The amplitude keeps every ``f_t`` L-Lipschitz and inside [0, 1].
    """
    if period is None:
        if T is None:
            raise ValueError("give a period or a horizon")
        period = T
    a = min(0.5, L / (2 * math.pi))

    def f(t, x):
        return 0.5 + a * np.sin(2 * np.pi * (np.asarray(t) / period + np.asarray(x)))

    return f


def _draw(dist: str, n: int, rng: np.random.Generator, hi: float, integer: bool):
    name, args = parse_spec(dist)
    if name == "point":
        if len(args) != 1:
            raise UnknownSpec(f"point() takes one value: {dist!r}")
        return np.full(n, args[0])
    if name == "uniform":
        if integer:
            return rng.integers(0, int(hi) + 1, size=n)
        return rng.random(n) * hi
    if name == "beta" and not integer:
        a, b = (args + [2.0, 2.0][len(args):])[:2]
        return rng.beta(a, b, size=n)
    raise UnknownSpec(f"unknown distribution {dist!r}")


def generate_buyers(
    T: int,
    tau_bar: int,
    value_dist: str = "uniform",
    patience_dist: str = "uniform",
    seed=None,
) -> list[Buyer]:
    """i.i.d. buyers; values on [0, 1], patience on ``{0..tau_bar}``.

    Distributions: ``uniform``, ``point(c)``, and ``beta(a, b)`` for values.
    """
    rng = np.random.default_rng(seed)
    values = _draw(value_dist, T, rng, 1.0, integer=False)
    patience = _draw(patience_dist, T, rng, tau_bar, integer=True)
    return [Buyer(float(v), int(p)) for v, p in zip(values, patience)]
