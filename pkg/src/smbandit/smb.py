"""Slowly Moving Bandit learner.

Every round the learner

1. lazily samples ``i_t`` from ``p_t`` conditioned on the level-``d_{t-1}``
   subtree of the previous action,
2. draws ``D`` fair signs and sets ``d_t`` to the first negative one
   (``d_t = D`` when all are positive),
3. builds the balancing terms, one constant per level on ``A_d(i_t)``,
4. zeroes the estimate if some ancestor block of ``i_t`` is too light
   (``p_t(A_d(i_t)) < 2**d * eta``),
5. applies the multiplicative update.

Because every balancing term is constant on ``A_d(i_t)`` and zero outside,
the whole estimate is described by ``D + 1`` "ring" values: ring ``h`` is
``A_h(i_t) \\ A_{h-1}(i_t)`` (ring 0 is ``{i_t}``) and the estimate is
constant on each ring. Both learners below work with that representation;
:class:`SMB` sweeps the full probability vector each round and serves as the
reference, :class:`SparseSMB` keeps subtree totals in a segment tree and only
touches the ``2**d_t`` arms whose weights move.

Randomness: each learner owns one ``numpy`` seed sequence spawned into two
streams, action uniforms and sign words. ``select`` consumes exactly one
uniform and ``update`` exactly one ``D``-bit word (bit ``d`` set means
``sigma_d = +1``), so two learners built from the same seed replay the same
draws regardless of the update path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateMass,
    InvalidEta,
    LossOutOfRange,
    NumericalUnderflow,
    ProtocolError,
)
from .tree import ArmRange, MetricTree

_BUFFER = 4096


# ----------------------------------------------------------------------------
# per-round arithmetic


def check_loss(loss: float) -> float:
    loss = float(loss)
    if not (0.0 <= loss <= 1.0):
        raise LossOutOfRange(f"loss {loss!r} outside [0, 1]")
    return loss


def signs_from_word(word: int, D: int) -> tuple[int, ...]:
    if D <= _SIGN_TABLE_MAX_D:
        return _sign_table(D)[word]
    return tuple(1 if (word >> d) & 1 else -1 for d in range(D))


_SIGN_TABLE_MAX_D = 12


@lru_cache(maxsize=None)
def _sign_table(D: int) -> list[tuple[int, ...]]:
    return [tuple(1 if (w >> d) & 1 else -1 for d in range(D)) for w in range(1 << D)]


def rebalance_level(signs: Sequence[int]) -> int:
    """Index of the first negative sign; ``len(signs)`` if there is none."""
    for d, s in enumerate(signs):
        if s < 0:
            return d
    return len(signs)


def balancing_constants(
    masses: Sequence[float], loss: float, signs: Sequence[int], eta: float
) -> list[float]:
    """Values ``c_0..c_D`` of the balancing terms on ``A_d(i_t)``.

    ``masses[d]`` is ``p_t(A_d(i_t))`` for ``d = 0..D``. ``c_0 = loss / p_t(i_t)``
    and for ``d >= 1``::

        c_d = -(1/eta) log( sum_{j in A_d} p(j)/p(A_d) exp(-eta (1+s_{d-1}) lbar_{d-1}(j)) )

    where ``lbar_{d-1}`` equals ``c_{d-1}`` on ``A_{d-1}(i_t)`` and 0 on the rest
    of ``A_d(i_t)``, so the sum collapses to ``1 - q + q exp(...)`` with
    ``q = p(A_{d-1}) / p(A_d)``. The last entry, ``c_D``, is not part of the
    estimate; it is the normaliser the sparse path needs when ``d_t = D``.
    """
    D = len(signs)
    c = [0.0] * (D + 1)
    c[0] = loss / masses[0]
    for d in range(1, D + 1):
        a = (1 + signs[d - 1]) * c[d - 1]
        if a == 0.0:
            continue
        q = masses[d - 1] / masses[d]
        c[d] = -math.log1p(q * math.expm1(-eta * a)) / eta
    return c


def is_bad_event(masses: Sequence[float], eta: float) -> bool:
    """True iff ``p(A_d(i_t)) < 2**d * eta`` for some ``0 <= d < D``."""
    return any(masses[d] < (1 << d) * eta for d in range(len(masses) - 1))


def estimator_rings(
    c: Sequence[float], signs: Sequence[int], bad: bool
) -> list[float]:
    """Ring values of ``c_0 1{i_t} + sum_{d<D} sigma_d lbar_d`` (zero if ``bad``)."""
    D = len(signs)
    rings = [0.0] * (D + 1)
    if bad:
        return rings
    acc = 0.0
    for h in range(D - 1, -1, -1):
        acc += signs[h] * c[h]
        rings[h] = acc
    rings[0] += c[0]
    return rings


def expand_rings(tree: MetricTree, action: int, rings: Sequence[float]) -> np.ndarray:
    """Dense vector over arms 1..k from ring values around ``action``."""
    # frexp's exponent of a non-negative integer is its bit length
    levels = np.frexp((action - 1) ^ np.arange(tree.k))[1]
    return np.asarray(rings, dtype=float)[levels]


def ring_masses(masses: Sequence[float]) -> list[float]:
    out = [masses[0]]
    out += [masses[h] - masses[h - 1] for h in range(1, len(masses))]
    return out


@dataclass
class RoundEstimate:
    """Everything computed in steps 2-4 of a round, independent of storage."""

    signs: tuple[int, ...]
    rebalance_level: int
    balancing: list[float]  # c_0..c_{D-1}
    root_balancing: float  # c_D
    bad_event: bool
    rings: list[float]


def estimate_round(
    masses: Sequence[float], loss: float, signs: Sequence[int], eta: float
) -> RoundEstimate:
    signs = tuple(int(s) for s in signs)
    c = balancing_constants(masses, loss, signs, eta)
    bad = is_bad_event(masses, eta)
    return RoundEstimate(
        signs=signs,
        rebalance_level=rebalance_level(signs),
        balancing=c[:-1],
        root_balancing=c[-1],
        bad_event=bad,
        rings=estimator_rings(c, signs, bad),
    )


def balancing_vector(
    tree: MetricTree,
    p: np.ndarray,
    d: int,
    prev: np.ndarray,
    sigma_prev: int,
    eta: float,
) -> np.ndarray:
    """Level-``d`` balancing vector computed block by block from its definition.

    Works on dense vectors and is used to cross-check :func:`balancing_constants`.
    """
    out = np.zeros(tree.k)
    for blk in tree.blocks(d):
        sl = slice(blk.lo - 1, blk.hi)
        w = p[sl] / p[sl].sum()
        val = -np.log(np.sum(w * np.exp(-eta * (1 + sigma_prev) * prev[sl]))) / eta
        out[sl] = val
    return out


# ----------------------------------------------------------------------------
# learners


@dataclass
class RoundTrace:
    t: int
    action: int
    loss: float
    signs: tuple[int, ...]
    rebalance_level: int
    balancing: list[float]
    bad_event: bool
    rings: list[float]
    movement: float
    masses: list[float]  # p_t(A_d(i_t)), d = 0..D
    touched: int = 0

    def estimator(self, tree: MetricTree) -> np.ndarray:
        return expand_rings(tree, self.action, self.rings)

    def balancing_vectors(self, tree: MetricTree) -> list[np.ndarray]:
        out = []
        for d, c in enumerate(self.balancing):
            v = np.zeros(tree.k)
            blk = tree.subtree(self.action, d)
            v[blk.lo - 1 : blk.hi] = c
            out.append(v)
        return out

    @property
    def second_moment(self) -> float:
        """``p_t . estimate**2``."""
        return sum(m * r * r for m, r in zip(ring_masses(self.masses), self.rings))


class _Randomness:
    def __init__(self, seed, D: int):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        a, b = ss.spawn(2)
        self._ugen = np.random.default_rng(a)
        self._sgen = np.random.default_rng(b)
        self._D = D
        self._u: list[float] = []
        self._w: list[int] = []

    def uniform(self) -> float:
        if not self._u:
            self._u = self._ugen.random(_BUFFER).tolist()[::-1]
        return self._u.pop()

    def sign_word(self) -> int:
        if not self._w:
            self._w = self._sgen.integers(0, 1 << self._D, size=_BUFFER).tolist()[::-1]
        return self._w.pop()


class _SmbBase:
    def __init__(self, tree: MetricTree, eta: float, seed=None, trace_sink=None):
        if not (eta > 0 and math.isfinite(eta)):
            raise InvalidEta(f"eta must be positive, got {eta!r}")
        self.tree = tree
        self.eta = float(eta)
        self.prev_action: Optional[int] = None
        self.prev_level = tree.D
        self.t = 0
        self.trace_sink = trace_sink
        self._rand = _Randomness(seed, tree.D)
        self._pending: Optional[int] = None

    # storage-specific primitives -------------------------------------------
    def probabilities(self) -> np.ndarray:
        raise NotImplementedError

    def block_mass(self, block: ArmRange) -> float:
        raise NotImplementedError

    def path_masses(self, arm: int) -> list[float]:
        """``p(A_d(arm))`` for ``d = 0..D``."""
        raise NotImplementedError

    def _draw_in(self, block: ArmRange, u: float) -> int:
        raise NotImplementedError

    def _apply(self, arm: int, est: RoundEstimate) -> int:
        raise NotImplementedError

    # protocol ---------------------------------------------------------------
    @property
    def conditioning_block(self) -> ArmRange:
        if self.prev_action is None:
            return ArmRange(self.tree.D, 1, self.tree.k)
        return self.tree.subtree(self.prev_action, self.prev_level)

    def select(self) -> int:
        """Lazily sample the next action. Consumes one uniform."""
        if self._pending is not None:
            raise ProtocolError("select() called twice without update()")
        u = self._rand.uniform()
        block = self.conditioning_block
        if len(block) == 1:
            arm = block.lo
        else:
            if not self.block_mass(block) > 0.0:
                raise DegenerateMass(f"zero mass on arms {block.lo}..{block.hi}")
            arm = self._draw_in(block, u)
        self._pending = arm
        return arm

    def cancel(self) -> None:
        """Forget a selection that will never receive feedback."""
        self._pending = None

    def update(self, loss: float) -> RoundTrace:
        """Feed back the loss of the selected action and update. Consumes one sign word."""
        if self._pending is None:
            raise ProtocolError("update() called before select()")
        loss = check_loss(loss)
        arm = self._pending
        signs = signs_from_word(self._rand.sign_word(), self.tree.D)
        masses = self.path_masses(arm)
        est = estimate_round(masses, loss, signs, self.eta)
        touched = self._apply(arm, est)
        self.t += 1
        movement = 0.0 if self.prev_action is None else self.tree.switch_cost(arm, self.prev_action)
        trace = RoundTrace(
            t=self.t,
            action=arm,
            loss=loss,
            signs=est.signs,
            rebalance_level=est.rebalance_level,
            balancing=est.balancing,
            bad_event=est.bad_event,
            rings=est.rings,
            movement=movement,
            masses=list(masses),
            touched=touched,
        )
        self.prev_action = arm
        self.prev_level = est.rebalance_level
        self._pending = None
        if self.trace_sink is not None:
            self._emit(trace)
        return trace

    def step(self, loss_oracle: Callable[[int], float]) -> RoundTrace:
        arm = self.select()
        return self.update(loss_oracle(arm))

    def _emit(self, trace: RoundTrace) -> None:
        half = ArmRange(self.tree.D - 1, 1, self.tree.k // 2)
        row = {
            "t": trace.t,
            "action": trace.action,
            "loss": trace.loss,
            "d_t": trace.rebalance_level,
            "bad_event": trace.bad_event,
            "movement": trace.movement,
            "p_top_marginal": self.block_mass(half),
        }
        self.trace_sink.write(json.dumps(row) + "\n")


class SMB(_SmbBase):
    """Reference learner: log-weights over all arms, full sweep per update."""

    def __init__(self, tree: MetricTree, eta: float, seed=None, trace_sink=None):
        super().__init__(tree, eta, seed, trace_sink)
        self.logp = np.full(tree.k, -math.log(tree.k))
        self.p = np.full(tree.k, 1.0 / tree.k)

    def probabilities(self) -> np.ndarray:
        return self.p.copy()

    def load_probabilities(self, p) -> None:
        """Replace the current distribution (must be positive and sum to 1)."""
        self.logp = np.log(_checked_distribution(p, self.tree.k))
        self.p = np.exp(self.logp)

    def block_mass(self, block: ArmRange) -> float:
        return float(self.p[block.lo - 1 : block.hi].sum())

    def path_masses(self, arm: int) -> list[float]:
        return [self.block_mass(self.tree.subtree(arm, d)) for d in range(self.tree.D + 1)]

    def _draw_in(self, block: ArmRange, u: float) -> int:
        cs = np.cumsum(self.p[block.lo - 1 : block.hi])
        j = int(np.searchsorted(cs, u * cs[-1], side="right"))
        return block.lo + min(j, len(block) - 1)

    def apply_update(self, estimate: np.ndarray) -> None:
        logp = self.logp - self.eta * estimate
        logp -= np.logaddexp.reduce(logp)
        if not np.all(np.isfinite(logp)):
            raise NumericalUnderflow("log-weights left the representable range")
        self.logp = logp
        self.p = np.exp(logp)

    def _apply(self, arm: int, est: RoundEstimate) -> int:
        if est.bad_event or est.rebalance_level == 0:
            return 0
        self.apply_update(expand_rings(self.tree, arm, est.rings))
        return self.tree.k


class SparseSMB(_SmbBase):
    """Same learner with subtree log-totals kept in a segment tree.

    Node ``n`` (1-based heap order, leaves at ``k..2k-1``) stores the log of
    the unnormalised weight of its subtree. An update only rewrites the block
    ``A_{d_t}(i_t)``, whose total the balancing terms keep fixed, and then
    refreshes the ``D - d_t`` ancestors.
    """

    def __init__(self, tree: MetricTree, eta: float, seed=None, trace_sink=None):
        super().__init__(tree, eta, seed, trace_sink)
        k = tree.k
        self._node = [0.0] * (2 * k)
        for n in range(k, 2 * k):
            self._node[n] = -math.log(k)
        for n in range(k - 1, 0, -1):
            self._node[n] = _lse(self._node[2 * n], self._node[2 * n + 1])

    def load_probabilities(self, p) -> None:
        """Replace the current distribution (must be positive and sum to 1)."""
        k = self.tree.k
        logp = np.log(_checked_distribution(p, k)).tolist()
        self._node[k:] = logp
        for n in range(k - 1, 0, -1):
            self._node[n] = _lse(self._node[2 * n], self._node[2 * n + 1])

    def _node_of(self, block: ArmRange) -> int:
        return (self.tree.k >> block.level) + block.index

    def probabilities(self) -> np.ndarray:
        k = self.tree.k
        return np.exp(np.asarray(self._node[k:]) - self._node[1])

    def block_mass(self, block: ArmRange) -> float:
        return math.exp(self._node[self._node_of(block)] - self._node[1])

    def path_masses(self, arm: int) -> list[float]:
        node = self._node
        root = node[1]
        n = self.tree.k + arm - 1
        out = []
        while n >= 1:
            out.append(math.exp(node[n] - root))
            n >>= 1
        out[-1] = 1.0
        return out

    def _draw_in(self, block: ArmRange, u: float) -> int:
        node = self._node
        n = self._node_of(block)
        k = self.tree.k
        while n < k:
            left = math.exp(node[2 * n] - node[n])
            if u < left:
                u /= left
                n = 2 * n
            else:
                u = (u - left) / (1.0 - left) if left < 1.0 else 0.0
                n = 2 * n + 1
        return n - k + 1

    def _apply(self, arm: int, est: RoundEstimate) -> int:
        d_t = est.rebalance_level
        if est.bad_event or d_t == 0:
            return 0
        tree = self.tree
        k = tree.k
        node = self._node
        eta = self.eta
        rings = est.rings
        shift = est.root_balancing if d_t == tree.D else 0.0
        lo = (((arm - 1) >> d_t) << d_t)
        a = arm - 1
        for j in range(lo, lo + (1 << d_t)):
            node[k + j] -= eta * (rings[(a ^ j).bit_length()] - shift)
        lo_n, hi_n = (k + lo) >> 1, (k + lo + (1 << d_t) - 1) >> 1
        while lo_n >= 1:
            for n in range(lo_n, hi_n + 1):
                node[n] = _lse(node[2 * n], node[2 * n + 1])
            lo_n >>= 1
            hi_n >>= 1
        if not math.isfinite(node[1]):
            raise NumericalUnderflow("log-weights left the representable range")
        return 1 << d_t


def _checked_distribution(p, k: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (k,) or not np.all(p > 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DegenerateMass(f"need {k} positive probabilities summing to 1")
    return p / p.sum()


def _lse(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    if b == -math.inf:
        return a
    return a + math.log1p(math.exp(b - a))


def default_eta(k: int, T: int) -> float:
    return 1.0 / math.sqrt(k * T)
