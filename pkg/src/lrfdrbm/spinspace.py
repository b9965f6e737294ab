"""Computational basis of L spin-1/2 sites and Pauli-string action.

Encoding: bit ``j-1`` of the integer mask is set iff spin ``j`` is +1.
Sites are 1-based in every public signature.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError

MAX_SITES = 30
MAX_EXACT_SITES = 20

_LABELS = {"i": 0, "x": 1, "y": 2, "z": 3, "0": 0, "1": 1, "2": 2, "3": 3}


def _check_length(L: int) -> None:
    if not 1 <= L <= MAX_SITES:
        raise ValueError(f"site count must be in [1, {MAX_SITES}], got {L}")


@dataclass(frozen=True)
class SpinConfig:
    bits: int
    length: int

    def __post_init__(self):
        _check_length(self.length)
        if not 0 <= self.bits < (1 << self.length):
            raise ValueError(f"bitmask {self.bits} out of range for L={self.length}")

    @classmethod
    def from_spins(cls, spins: Sequence[int]) -> "SpinConfig":
        bits = 0
        for j, s in enumerate(spins):
            if s not in (1, -1):
                raise ValueError(f"spin values must be +1 or -1, got {s}")
            if s == 1:
                bits |= 1 << j
        return cls(bits, len(spins))

    @classmethod
    def all_up(cls, L: int) -> "SpinConfig":
        return cls((1 << L) - 1, L)

    def spin(self, j: int) -> int:
        """Value of spin ``j`` (1-based)."""
        if not 1 <= j <= self.length:
            raise IndexError(f"site {j} outside 1..{self.length}")
        return 1 if (self.bits >> (j - 1)) & 1 else -1

    def spins(self) -> np.ndarray:
        return spins_of(np.array([self.bits]), self.length)[0]

    def flip(self, *sites: int) -> "SpinConfig":
        mask = 0
        for j in sites:
            if not 1 <= j <= self.length:
                raise IndexError(f"site {j} outside 1..{self.length}")
            mask ^= 1 << (j - 1)
        return SpinConfig(self.bits ^ mask, self.length)

    def shift(self, n: int = 1) -> "SpinConfig":
        """Cyclic translation: spin j moves to site j + n."""
        L = self.length
        n %= L
        full = (1 << L) - 1
        return SpinConfig(((self.bits << n) | (self.bits >> (L - n))) & full, L)


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-site Paulis; label 0/1/2/3 = I/x/y/z."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(int(m) for m in self.labels)
        if not labels:
            raise ValueError("Pauli string needs at least one site")
        if any(m not in (0, 1, 2, 3) for m in labels):
            raise ValueError(f"Pauli labels must be in {{0,1,2,3}}, got {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def length(self) -> int:
        return len(self.labels)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Build from a string such as ``"ZZIII"`` or ``"xx000"``."""
        try:
            return cls(tuple(_LABELS[c] for c in text.lower()))
        except KeyError as exc:
            raise ValueError(f"unknown Pauli label in {text!r}") from exc

    @classmethod
    def on_sites(cls, L: int, ops: Mapping[int, str]) -> "PauliString":
        """``PauliString.on_sites(5, {1: "z", 2: "z"})`` gives Z1 Z2."""
        labels = [0] * L
        for j, op in ops.items():
            if not 1 <= j <= L:
                raise ValueError(f"site {j} outside 1..{L}")
            labels[j - 1] = _LABELS[op.lower()]
        return cls(tuple(labels))

    def masks(self) -> tuple[int, int, int]:
        """(flip mask, y mask, z mask) as integer bitmasks."""
        flip = y = z = 0
        for j, m in enumerate(self.labels):
            if m in (1, 2):
                flip |= 1 << j
            if m == 2:
                y |= 1 << j
            if m == 3:
                z |= 1 << j
        return flip, y, z


def circ_distance(j: int, jc: int, L: int) -> int:
    """Distance between sites on a ring of L sites (1-based indices)."""
    if not (1 <= j <= L and 1 <= jc <= L):
        raise ValueError(f"sites ({j}, {jc}) outside 1..{L}")
    m = abs(j - jc)
    return min(m, L - m)


def circ_offsets(L: int) -> np.ndarray:
    """Circular distance of every signed offset 0..L-1 from the origin."""
    r = np.arange(L)
    return np.minimum(r, L - r)


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    parity = np.zeros(x.shape, dtype=np.uint64)
    while np.any(x):
        parity ^= x & np.uint64(1)
        x >>= np.uint64(1)
    return parity.astype(np.int64)


def pauli_action(B: PauliString, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`apply_pauli` on an array of bitmasks.

    Returns ``(new_idx, phase)`` with ``B|idx> = phase |new_idx>``.
    """
    idx = np.asarray(idx, dtype=np.int64)
    flip, ymask, zmask = B.masks()
    n_y = bin(ymask).count("1")
    # every y or z site contributes a factor sigma_j; y also contributes i
    minus = _popcount_parity(~idx & (ymask | zmask))
    sign = 1 - 2 * minus
    phase = (1j ** n_y) * sign
    return idx ^ flip, phase.astype(complex)


def apply_pauli(B: PauliString, s: SpinConfig) -> tuple[SpinConfig, complex]:
    if B.length != s.length:
        raise ValueError(f"Pauli string has {B.length} sites, config has {s.length}")
    new, phase = pauli_action(B, np.array([s.bits]))
    return SpinConfig(int(new[0]), s.length), complex(phase[0])


def enumerate_basis(L: int) -> Iterator[SpinConfig]:
    """All 2^L configurations in ascending bitmask order."""
    if L > MAX_SITES:
        raise CapacityError(f"L={L} exceeds enumeration limit {MAX_SITES}")
    _check_length(L)
    for bits in range(1 << L):
        yield SpinConfig(bits, L)


def spins_of(idx: np.ndarray, L: int, dtype=np.float64) -> np.ndarray:
    """(n, L) array of +-1 spins for an array of n bitmasks."""
    idx = np.asarray(idx, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(L)) & 1
    return (2 * bits - 1).astype(dtype)


def basis_chunks(L: int, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Bitmask ranges covering the full basis, for chunked evaluation."""
    if L > MAX_EXACT_SITES:
        raise CapacityError(f"L={L} exceeds exact-enumeration limit {MAX_EXACT_SITES}")
    n = 1 << L
    for start in range(0, n, chunk):
        yield np.arange(start, min(n, start + chunk), dtype=np.int64)


def shift_bits(idx: np.ndarray, L: int, n: int = 1) -> np.ndarray:
    n %= L
    idx = np.asarray(idx, dtype=np.int64)
    full = (1 << L) - 1
    return ((idx << n) | (idx >> (L - n))) & full
