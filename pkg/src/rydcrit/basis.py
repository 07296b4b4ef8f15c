"""Blockade-constrained configuration basis for a Rydberg chain.

Configurations are stored as integer bitmasks with site ``j`` on bit ``j``.
The basis is ordered lexicographically by the 0/1 string ``n_0 n_1 ... n_{L-1}``
so that index 0 is always the vacuum.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

PERIODIC = "periodic"
OPEN = "open"
HARD = "hard-blockade"
PENALTY = "penalty"

MAX_LENGTH = 62
MAX_PENALTY_LENGTH = 20
DEFAULT_MAX_DIMENSION = 1 << 24


class CapacityError(RuntimeError):
    """Requested basis exceeds the configured memory budget."""


class ConstraintError(ValueError):
    """A configuration violates the blockade constraint of the basis."""


@dataclass(frozen=True)
class ChainGeometry:
    length: int
    boundary: str = PERIODIC
    constraint_mode: str = HARD

    def __post_init__(self):
        if self.length < 2:
            raise ValueError(f"chain length must be >= 2, got {self.length}")
        if self.length > MAX_LENGTH:
            raise CapacityError(f"chain length {self.length} exceeds word width ({MAX_LENGTH})")
        if self.boundary not in (PERIODIC, OPEN):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.constraint_mode not in (HARD, PENALTY):
            raise ValueError(f"unknown constraint mode {self.constraint_mode!r}")

    @property
    def periodic(self) -> bool:
        return self.boundary == PERIODIC

    @property
    def hard(self) -> bool:
        return self.constraint_mode == HARD

    def bonds(self, k: int = 1) -> list[tuple[int, int]]:
        """Site pairs ``(j, j+k)`` summed once per ``j``, wrapping when periodic."""
        L = self.length
        if self.periodic:
            return [(j, (j + k) % L) for j in range(L)]
        return [(j, j + k) for j in range(L - k)]

    def with_mode(self, constraint_mode: str) -> "ChainGeometry":
        return ChainGeometry(self.length, self.boundary, constraint_mode)


def is_blockaded(config: int, geometry: ChainGeometry) -> bool:
    """True when no two neighbouring sites are both occupied."""
    L = geometry.length
    full = (1 << L) - 1
    if config & (config >> 1):
        return False
    if geometry.periodic and (config & 1) and (config >> (L - 1)) & 1:
        return False
    return 0 <= config <= full


def _blockade_mask(masks: np.ndarray, geometry: ChainGeometry) -> np.ndarray:
    L = geometry.length
    ok = (masks & (masks >> 1)) == 0
    if geometry.periodic:
        ok &= ~(((masks & 1) == 1) & (((masks >> (L - 1)) & 1) == 1))
    return ok


def reverse_bits(values: np.ndarray, length: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros_like(values)
    for j in range(length):
        out |= ((values >> j) & 1) << (length - 1 - j)
    return out


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def lucas(n: int) -> int:
    a, b = 2, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def expected_dimension(geometry: ChainGeometry) -> int:
    if not geometry.hard:
        return 1 << geometry.length
    if geometry.periodic:
        return lucas(geometry.length)
    return fibonacci(geometry.length + 2)


@dataclass(frozen=True, eq=False)
class BlockadedBasis:
    geometry: ChainGeometry
    masks: np.ndarray = field(repr=False)
    keys: np.ndarray = field(repr=False)

    @property
    def dimension(self) -> int:
        return len(self.masks)

    def __len__(self) -> int:
        return self.dimension

    @property
    def length(self) -> int:
        return self.geometry.length

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dimension, L)`` uint8 array of site occupations."""
        L = self.length
        sites = np.arange(L, dtype=np.int64)
        return ((self.masks[:, None] >> sites[None, :]) & 1).astype(np.uint8)

    def index_of(self, config: int | str | Sequence[int]) -> int:
        mask = as_mask(config, self.length)
        if self.geometry.hard and not is_blockaded(mask, self.geometry):
            raise ConstraintError(f"configuration {to_string(mask, self.length)} violates the blockade")
        key = int(reverse_bits(np.array([mask]), self.length)[0])
        i = int(np.searchsorted(self.keys, key))
        if i >= self.dimension or self.keys[i] != key:
            raise ConstraintError(f"configuration {to_string(mask, self.length)} not in basis")
        return i

    def indices_of(self, masks: np.ndarray) -> np.ndarray:
        """Vectorised lookup; returns -1 for masks absent from the basis."""
        keys = reverse_bits(masks, self.length)
        idx = np.searchsorted(self.keys, keys)
        idx = np.minimum(idx, self.dimension - 1)
        return np.where(self.keys[idx] == keys, idx, -1)

    def config_of(self, index: int) -> int:
        if not 0 <= index < self.dimension:
            raise IndexError(f"index {index} out of range for dimension {self.dimension}")
        return int(self.masks[index])

    def string_of(self, index: int) -> str:
        return to_string(self.config_of(index), self.length)

    def dump(self) -> str:
        """One L-character 0/1 string per line, in index order."""
        return "".join(to_string(int(m), self.length) + "\n" for m in self.masks)


def as_mask(config: int | str | Sequence[int], length: int) -> int:
    """Accept a bitmask, a 0/1 string (site 0 first) or a sequence of bits."""
    if isinstance(config, (int, np.integer)):
        return int(config)
    if isinstance(config, str):
        bits = [int(c) for c in config]
    else:
        bits = [int(b) for b in config]
    if len(bits) != length:
        raise ValueError(f"configuration has {len(bits)} sites, expected {length}")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("occupations must be 0 or 1")
    return sum(b << j for j, b in enumerate(bits))


def to_string(mask: int, length: int) -> str:
    return "".join(str((mask >> j) & 1) for j in range(length))


def enumerate_basis(geometry: ChainGeometry, max_dimension: int = DEFAULT_MAX_DIMENSION) -> BlockadedBasis:
    L = geometry.length
    if not geometry.hard:
        if L > MAX_PENALTY_LENGTH:
            raise CapacityError(f"penalty mode is limited to L <= {MAX_PENALTY_LENGTH}, got {L}")
        keys = np.arange(1 << L, dtype=np.int64)
        return BlockadedBasis(geometry, reverse_bits(keys, L), keys)

    dim = expected_dimension(geometry)
    if dim > max_dimension:
        raise CapacityError(f"basis dimension {dim} exceeds budget {max_dimension}")
    # keys hold the string-lex integer: site 0 is the most significant bit
    keys = np.array([0, 1], dtype=np.int64)
    for _ in range(L - 1):
        free = keys[(keys & 1) == 0]
        keys = np.concatenate([keys << 1, (free << 1) | 1])
    keys.sort()
    if geometry.periodic:
        first = (keys >> (L - 1)) & 1
        last = keys & 1
        keys = keys[~((first == 1) & (last == 1))]
    masks = reverse_bits(keys, L)
    return BlockadedBasis(geometry, masks, keys)


def brute_force_configs(geometry: ChainGeometry) -> np.ndarray:
    """All blockade-respecting bitmasks found by filtering every 2^L string."""
    masks = np.arange(1 << geometry.length, dtype=np.int64)
    return masks[_blockade_mask(masks, geometry)]


def blockade_ok(masks: Iterable[int] | np.ndarray, geometry: ChainGeometry) -> np.ndarray:
    return _blockade_mask(np.asarray(masks, dtype=np.int64), geometry)
