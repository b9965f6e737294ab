"""Brute-force oracles over the full 2^L basis.

State vectors, both truncation-error measures, Pauli expectations, z
correlations, and Lanczos ground states of the cluster, transverse-field
Ising and XXZ chains (periodic boundaries).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, NormalizationError, NumericalError
from .rbm import RbmParams, TranslationInvariantRbm, expand, level_log_terms, log_psi_batch
from .spinspace import (MAX_EXACT_SITES, PauliString, basis_chunks, circ_offsets, pauli_action,
                        spins_of)

# streaming (non-stored) evaluations may go a little beyond stored states
MAX_STREAM_SITES = 24


@dataclass(eq=False)
class StateVector:
    """Amplitudes indexed by basis bitmask (bit j-1 set means spin j up)."""

    amplitudes: np.ndarray
    L: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.L,):
            raise ValueError(f"expected {1 << self.L} amplitudes, got {self.amplitudes.shape}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if not n > 0 or not np.isfinite(n):
            raise NormalizationError("state has zero or non-finite norm")
        return StateVector(self.amplitudes / n, self.L)

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.amplitudes) ** 2
        return p / p.sum()

    # binary: little-endian uint64 L, then 2^L (re, im) float64 pairs
    def to_bytes(self) -> bytes:
        body = np.ascontiguousarray(self.amplitudes, dtype="<c16").tobytes()
        return struct.pack("<Q", self.L) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "StateVector":
        (L,) = struct.unpack("<Q", data[:8])
        if L > MAX_STREAM_SITES:
            raise CapacityError(f"L={L} too large")
        amps = np.frombuffer(data[8:], dtype="<c16")
        return cls(amps.astype(complex), int(L))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "StateVector":
        return cls.from_bytes(Path(path).read_bytes())

    def to_json(self) -> str:
        if self.L > 12:
            raise CapacityError("JSON export is limited to L <= 12")
        return json.dumps({"L": self.L, "amplitudes": [[z.real, z.imag] for z in self.amplitudes]})

    @classmethod
    def from_json(cls, text: str) -> "StateVector":
        d = json.loads(text)
        a = np.asarray(d["amplitudes"], dtype=float)
        return cls(a[:, 0] + 1j * a[:, 1], int(d["L"]))


def _check_capacity(L: int, limit: int = MAX_EXACT_SITES) -> None:
    if L > limit:
        raise CapacityError(f"exact enumeration supports L <= {limit}, got L={L}")


def _from_log(logs: np.ndarray, L: int) -> StateVector:
    finite = np.isfinite(logs.real)
    if not finite.any():
        raise NormalizationError("all amplitudes vanish")
    shifted = logs - np.max(logs.real[finite])
    amps = np.where(finite, np.exp(np.where(finite, shifted, 0)), 0)
    return StateVector(amps, L)


def log_amplitudes(p) -> np.ndarray:
    """Complex log psi over the whole basis (chunked)."""
    if isinstance(p, TranslationInvariantRbm):
        p = expand(p)
    _check_capacity(p.L)
    out = np.empty(1 << p.L, dtype=complex)
    for idx in basis_chunks(p.L):
        out[idx] = log_psi_batch(p, spins_of(idx, p.L))
    return out


def build_state(p) -> StateVector:
    """Amplitudes exp(log psi - max log|psi|) for every basis state."""
    L = p.L
    return _from_log(log_amplitudes(p), L)


def truncation_states(t: TranslationInvariantRbm, levels: Sequence[int]) -> dict:
    """States of ``t`` truncated to each level count in ``levels``, from one evaluation."""
    _check_capacity(t.L)
    levels = sorted(set(int(n) for n in levels))
    if levels and (levels[0] < 0 or levels[-1] > t.alpha):
        raise ValueError(f"level counts must lie in 0..{t.alpha}")
    N = 1 << t.L
    logs = {n: np.empty(N, dtype=complex) for n in levels}
    for idx in basis_chunks(t.L):
        vis, lv = level_log_terms(t, spins_of(idx, t.L))
        cum = np.concatenate([vis[:, None], vis[:, None] + np.cumsum(lv, axis=1)], axis=1)
        for n in levels:
            logs[n][idx] = cum[:, n]
    return {n: _from_log(v, t.L) for n, v in logs.items()}


# ---------------------------------------------------------------- measures

def _pair(a: StateVector, b: StateVector):
    if a.L != b.L:
        raise ValueError("states have different L")
    return a.normalized().amplitudes, b.normalized().amplitudes


def error_l2(full: StateVector, truncated: StateVector) -> float:
    """Squared distance of the normalized states, summed component-wise."""
    x, y = _pair(full, truncated)
    d = x - y
    return float(np.vdot(d, d).real)


def expectation(state: StateVector, B: PauliString) -> float:
    if B.length != state.L:
        raise ValueError("Pauli string length does not match the state")
    psi = state.normalized().amplitudes
    idx = np.arange(1 << state.L)
    target, phase = pauli_action(B, idx)
    # <psi|B|psi> = sum_s conj(psi(B s)) phase(s) psi(s)
    return float(np.sum(np.conj(psi[target]) * phase * psi).real)


def error_expectation(full: StateVector, truncated: StateVector, B: PauliString) -> float:
    if full.L != truncated.L:
        raise ValueError("states have different L")
    return abs(expectation(full, B) - expectation(truncated, B))


def fidelity(s1: StateVector, s2: StateVector) -> float:
    x, y = _pair(s1, s2)
    return float(abs(np.vdot(x, y)) ** 2)


def subspace_fidelity(s: StateVector, basis: Sequence[StateVector]) -> float:
    """Weight of normalized ``s`` inside the span of ``basis``."""
    x = s.normalized().amplitudes
    Q, _ = np.linalg.qr(np.column_stack([b.amplitudes for b in basis]))
    return float(np.sum(np.abs(Q.conj().T @ x) ** 2))


# ---------------------------------------------------------------- correlations

def _check_r(r: int, L: int) -> None:
    if not 0 <= r <= L // 2:
        raise ValueError(f"distance r={r} outside 0..{L // 2}")


def corr_z(state: StateVector, r: int) -> float:
    """<sigma^z_1 sigma^z_{1+r}> from the bits of each basis index."""
    L = state.L
    _check_r(r, L)
    prob = state.probabilities()
    idx = np.arange(1 << L)
    same = ((idx >> 0) & 1) == ((idx >> r) & 1)
    return float(np.sum(np.where(same, prob, -prob)))


def corr_z_unnorm(p, r: int) -> float:
    """Uniform-measure mean of sigma_1 sigma_{1+r} |psi|^2 (psi unscaled)."""
    if isinstance(p, TranslationInvariantRbm):
        p = expand(p)
    _check_r(r, p.L)
    logs = log_amplitudes(p)
    idx = np.arange(1 << p.L)
    sign = np.where(((idx & 1) == ((idx >> r) & 1)), 1.0, -1.0)
    return float(np.mean(sign * np.exp(2 * logs.real)))


def corr_z_leading(p, r: int) -> float:
    """Small-parameter leading order 2 Re(W W^T)_{1,1+r} + 4 Re a_1 Re a_{1+r}."""
    if isinstance(p, TranslationInvariantRbm):
        p = expand(p)
    if not 1 <= r <= p.L // 2:
        raise ValueError(f"leading-order correlation needs 1 <= r <= {p.L // 2}")
    W = p.W
    return float(2 * np.sum(W[0] * W[r]).real + 4 * p.a[0].real * p.a[r].real)


def max_param(p) -> float:
    """epsilon_1: the largest parameter magnitude."""
    if isinstance(p, TranslationInvariantRbm):
        p = expand(p)
    return float(max(np.max(np.abs(p.a), initial=0), np.max(np.abs(p.b), initial=0),
                     np.max(np.abs(p.W), initial=0)))


def gz_structure_sum(mu, L: int, r: int) -> float:
    """sum_{jc=1}^{L} mu(|1-jc|) mu(|1+r-jc|) with circular distances.

    ``mu`` is a callable on distance arrays or a table indexed by distance.
    """
    _check_r(r, L)
    jc = np.arange(1, L + 1)
    d1 = np.minimum((1 - jc) % L, (jc - 1) % L)
    d2 = np.minimum((1 + r - jc) % L, (jc - 1 - r) % L)
    if callable(mu):
        m1, m2 = mu(d1), mu(d2)
    else:
        # entries past the end of a table count as zero
        tab = np.concatenate([np.asarray(mu, dtype=float), [0.0]])
        m1, m2 = tab[np.minimum(d1, tab.size - 1)], tab[np.minimum(d2, tab.size - 1)]
    return float(np.sum(m1 * m2))


def corr_z_stream(t, rs: Sequence[int], chunk: int = 1 << 16, return_norm: bool = False):
    """Normalized z correlations for several r without storing the state.

    Works up to ``MAX_STREAM_SITES`` spins; weights are accumulated with a
    running log-scale so no amplitude overflows. With ``return_norm`` the
    uniform-measure mean of |psi|^2 is returned as well.
    """
    p = expand(t) if isinstance(t, TranslationInvariantRbm) else t
    L = p.L
    _check_capacity(L, MAX_STREAM_SITES)
    for r in rs:
        _check_r(r, L)
    ref = -np.inf
    total = 0.0
    acc = np.zeros(len(rs))
    for start in range(0, 1 << L, chunk):
        idx = np.arange(start, min(start + chunk, 1 << L), dtype=np.int64)
        lm = 2 * log_psi_batch(p, spins_of(idx, L)).real
        m = np.max(lm)
        if m > ref:
            scale = math.exp(ref - m) if np.isfinite(ref) else 0.0
            total *= scale
            acc *= scale
            ref = m
        w = np.exp(lm - ref)
        total += w.sum()
        for i, r in enumerate(rs):
            same = (idx & 1) == ((idx >> r) & 1)
            acc[i] += np.sum(np.where(same, w, -w))
    corr = {int(r): float(acc[i] / total) for i, r in enumerate(rs)}
    if return_norm:
        # uniform-measure mean of |psi|^2
        return corr, float(total * math.exp(ref) / (1 << L))
    return corr


# ---------------------------------------------------------------- Hamiltonians

@dataclass(frozen=True)
class OffDiagonalTerm:
    """coef * (product of sigma^z over zmask) * [condition] * flip(flip_mask).

    ``cond_pair`` names two sites (0-based) that must be antiparallel.
    """

    flip_mask: int
    coef: float
    zmask: int = 0
    cond_pair: Optional[tuple] = None

    def weights(self, idx: np.ndarray) -> np.ndarray:
        """Matrix element <idx ^ flip|term|idx> / coef as +-1 or 0."""
        w = np.ones(idx.shape, dtype=np.int8)
        if self.zmask:
            down = np.bitwise_and(np.invert(idx), self.zmask).astype(np.uint64)
            parity = np.zeros(idx.shape, dtype=np.uint64)
            m = self.zmask
            while m:
                low = m & -m
                parity ^= (down & np.uint64(low)) != 0
                m ^= low
            w = np.where(parity.astype(bool), -1, 1).astype(np.int8)
        if self.cond_pair is not None:
            i, j = self.cond_pair
            anti = ((idx >> i) & 1) != ((idx >> j) & 1)
            w = np.where(anti, w, 0).astype(np.int8)
        return w


@dataclass(frozen=True)
class HamiltonianSpec:
    """Periodic 1D chain Hamiltonians.

    cluster: -sum Z_{j-1} X_j Z_{j+1}
    tfim:    -sum Z_j Z_{j+1} - Bx sum X_j
    xxz:     sum (-X_j X_{j+1} - Y_j Y_{j+1} + Jz Z_j Z_{j+1})
    """

    kind: str
    L: int
    Bx: float = 1.0
    Jz: float = -0.2

    def __post_init__(self):
        if self.kind not in ("cluster", "tfim", "xxz"):
            raise ConfigError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.L < 3:
            raise ConfigError("periodic chains need L >= 3")

    def diagonal_bonds(self) -> list[tuple[int, int, float]]:
        """(site i, site j, coefficient) of sigma^z_i sigma^z_j, 0-based."""
        L = self.L
        if self.kind == "tfim":
            return [(j, (j + 1) % L, -1.0) for j in range(L)]
        if self.kind == "xxz":
            return [(j, (j + 1) % L, float(self.Jz)) for j in range(L)]
        return []

    def off_diagonal_terms(self) -> list[OffDiagonalTerm]:
        L = self.L
        if self.kind == "cluster":
            return [OffDiagonalTerm(1 << j, -1.0, (1 << ((j - 1) % L)) | (1 << ((j + 1) % L)))
                    for j in range(L)]
        if self.kind == "tfim":
            return [OffDiagonalTerm(1 << j, -float(self.Bx)) for j in range(L)] if self.Bx else []
        return [OffDiagonalTerm((1 << j) | (1 << ((j + 1) % L)), -2.0, 0, (j, (j + 1) % L))
                for j in range(L)]

    def diagonal(self, spins: np.ndarray) -> np.ndarray:
        """Diagonal energy for an (n, L) spin batch."""
        out = np.zeros(spins.shape[0])
        for i, j, c in self.diagonal_bonds():
            out += c * spins[:, i] * spins[:, j]
        return out


class _Operator:
    """Matrix-free real symmetric Hamiltonian on the full basis."""

    def __init__(self, h: HamiltonianSpec):
        _check_capacity(h.L)
        self.h = h
        self.dim = 1 << h.L
        idx = np.arange(self.dim, dtype=np.int64)
        self.diag = h.diagonal(spins_of(idx, h.L))
        self.terms = [(t.flip_mask, t.coef, t.weights(idx)) for t in h.off_diagonal_terms()]
        self.idx = idx

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        for flip, coef, w in self.terms:
            # H is symmetric: (Hv)[t] += coef * w(t) * v[t ^ flip]
            out += coef * w * v[self.idx ^ flip]
        return out

    def dense(self) -> np.ndarray:
        if self.dim > 1 << 12:
            raise CapacityError("dense matrices are limited to L <= 12")
        return np.column_stack([self.matvec(e) for e in np.eye(self.dim)])


def dense_hamiltonian(h: HamiltonianSpec) -> np.ndarray:
    return _Operator(h).dense()


def hamiltonian_matvec(h: HamiltonianSpec, v: np.ndarray) -> np.ndarray:
    return _Operator(h).matvec(np.asarray(v))


def energy(h: HamiltonianSpec, state: StateVector) -> float:
    x = state.normalized().amplitudes
    op = _Operator(h)
    return float(np.vdot(x, op.matvec(x.real) + 1j * op.matvec(x.imag)).real)


def lanczos(matvec, dim: int, v0: np.ndarray, krylov: int = 200, tol: float = 1e-10,
            max_restarts: int = 50, deflate: Sequence[np.ndarray] = ()) -> tuple[float, np.ndarray, float]:
    """Lowest eigenpair of a real symmetric operator.

    Full reorthogonalization, Krylov dimension <= ``krylov`` and explicit
    restarts from the current Ritz vector. Vectors in ``deflate`` are
    projected out at every step. Returns (value, vector, residual norm).
    """
    m = min(krylov, dim)
    defl = [d / np.linalg.norm(d) for d in deflate]

    def project(x):
        for d in defl:
            x = x - np.dot(d, x) * d
        return x

    v = project(np.asarray(v0, dtype=float))
    v /= np.linalg.norm(v)
    prev = np.inf
    for _ in range(max_restarts):
        V = np.zeros((m, dim))
        alpha = np.zeros(m)
        beta = np.zeros(m)
        V[0] = v
        k = m
        for i in range(m):
            w = project(matvec(V[i]))
            alpha[i] = np.dot(V[i], w)
            w -= V[: i + 1].T @ (V[: i + 1] @ w)
            w -= V[: i + 1].T @ (V[: i + 1] @ w)
            if i + 1 == m:
                break
            beta[i] = np.linalg.norm(w)
            if beta[i] < 1e-12:
                k = i + 1
                break
            V[i + 1] = w / beta[i]
        T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        theta = evals[0]
        v = project(V[:k].T @ evecs[:, 0])
        v /= np.linalg.norm(v)
        res = float(np.linalg.norm(project(matvec(v)) - theta * v))
        if res < math.sqrt(tol) or (k < m and res < 1e-6) or abs(theta - prev) < tol * 1e-2:
            return float(theta), v, res
        prev = theta
    raise NumericalError(f"Lanczos did not converge (residual {res:.3e})")


@dataclass
class GroundState:
    energy: float
    state: StateVector
    residual: float
    degenerate: bool
    gap_probe: float
    second: Optional[StateVector] = None


def ground_state(h: HamiltonianSpec, seed: int = 0, krylov: int = 200,
                 tol: float = 1e-10, degeneracy_tol: float = 1e-8) -> GroundState:
    """Lowest eigenpair and a degeneracy probe from a deflated second run.

    The global phase is fixed so the largest-modulus amplitude is real and positive.
    """
    op = _Operator(h)
    rng = np.random.default_rng(seed)
    e0, v, res = lanczos(op.matvec, op.dim, rng.standard_normal(op.dim), krylov, tol)
    v *= np.sign(v[np.argmax(np.abs(v))])
    second = None
    gap = np.inf
    if op.dim > 1:
        e1, v1, _ = lanczos(op.matvec, op.dim, rng.standard_normal(op.dim), krylov, tol, deflate=[v])
        gap = e1 - e0
        if gap < degeneracy_tol:
            second = StateVector(v1, h.L)
    return GroundState(e0, StateVector(v, h.L), res, gap < degeneracy_tol, float(gap), second)


def tfim_exact_energy(L: int, Bx: float) -> float:
    """Free-fermion ground energy of the periodic TFIM (even-parity sector)."""
    k = (2 * np.arange(L) + 1) * np.pi / L
    return float(-np.sum(np.sqrt(1 + Bx * Bx - 2 * Bx * np.cos(k))))


def stabilizer(L: int, j: int) -> PauliString:
    """Z_{j-1} X_j Z_{j+1} for 1-based site j on a ring."""
    return PauliString.on_sites(L, {((j - 2) % L) + 1: "z", j: "x", (j % L) + 1: "z"})
