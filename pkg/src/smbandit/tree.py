"""Complete binary tree over the arms and the induced movement metric.

Arms are 1-based leaves ``1..k``. Internally everything works on the
0-based index ``i - 1`` so that subtree membership and LCA levels reduce to
bit arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .errors import ArmOutOfRange, LevelOutOfRange, NotPowerOfTwo


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    """Smallest power of two that is >= n (n >= 1)."""
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class ArmRange:
    """Aligned block of ``2**level`` consecutive arms, inclusive bounds."""

    level: int
    lo: int
    hi: int

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, arm: int) -> bool:
        return self.lo <= arm <= self.hi

    def __iter__(self) -> Iterator[int]:
        return iter(range(self.lo, self.hi + 1))

    @property
    def index(self) -> int:
        """Position of the block among the ``k / 2**level`` blocks of its level (0-based)."""
        return (self.lo - 1) >> self.level


@dataclass(frozen=True)
class MetricTree:
    k: int
    D: int

    def _check_arm(self, i: int) -> None:
        if not (1 <= i <= self.k):
            raise ArmOutOfRange(f"arm {i} outside 1..{self.k}")

    def _check_level(self, d: int) -> None:
        if not (0 <= d <= self.D):
            raise LevelOutOfRange(f"level {d} outside 0..{self.D}")

    @property
    def arms(self) -> range:
        return range(1, self.k + 1)

    def lca_level(self, i: int, j: int) -> int:
        self._check_arm(i)
        self._check_arm(j)
        return ((int(i) - 1) ^ (int(j) - 1)).bit_length()

    def movement_cost(self, i: int, j: int) -> float:
        """Tree distance ``2**lca_level(i, j) / k``.

        Note this is ``1/k`` for ``i == j``; movement accounting only charges
        actual switches (see :func:`switch_cost`).
        """
        return (1 << self.lca_level(i, j)) / self.k

    def switch_cost(self, i: int, j: int) -> float:
        """Movement charged when going from ``j`` to ``i``: zero if no move."""
        return 0.0 if i == j else self.movement_cost(i, j)

    def subtree(self, i: int, d: int) -> ArmRange:
        self._check_arm(i)
        self._check_level(d)
        lo = (((i - 1) >> d) << d) + 1
        return ArmRange(d, lo, lo + (1 << d) - 1)

    def blocks(self, d: int) -> list[ArmRange]:
        """All ``k / 2**d`` subtrees at level ``d``, left to right."""
        self._check_level(d)
        w = 1 << d
        return [ArmRange(d, lo, lo + w - 1) for lo in range(1, self.k + 1, w)]

    def same_subtree(self, i: int, j: int, d: int) -> bool:
        return (i - 1) >> d == (j - 1) >> d


def build_tree(k: int) -> MetricTree:
    if not isinstance(k, int) or k < 2 or not is_power_of_two(k):
        raise NotPowerOfTwo(f"k={k!r} is not 2**D for an integer D >= 1")
    return MetricTree(k=k, D=k.bit_length() - 1)


def _cube_root_ceil_pow2(T: int) -> int:
    """Smallest power of two p with p**3 >= T."""
    p = 1
    while p ** 3 < T:
        p <<= 1
    return p


def pad_action_count(k: int, T: int) -> tuple[int, list[int]]:
    """Embed ``k`` actions into the leaves of a complete binary tree.

    Returns the padded leaf count and ``leaf_map`` where ``leaf_map[l - 1]`` is
    the original arm played when leaf ``l`` is chosen.

    When ``k**3 >= T`` the tree is the next power of two and surplus leaves
    repeat the last real arm. Otherwise each original leaf is refined into a
    balanced subtree so the tree has the smallest power of two of leaves that
    is at least ``T**(1/3)``; a refined leaf maps to its ancestor arm,
    ``ceil(l * k / k')``.
    """
    if k < 2:
        raise ValueError("need at least two actions")
    if T < 1:
        raise ValueError("horizon must be positive")
    if k ** 3 >= T:
        kp = next_power_of_two(k)
        return kp, [min(leaf, k) for leaf in range(1, kp + 1)]
    kp = max(_cube_root_ceil_pow2(T), next_power_of_two(k))
    return kp, [-(-leaf * k // kp) for leaf in range(1, kp + 1)]
