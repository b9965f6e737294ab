"""RBM amplitudes in the log domain.

The amplitude convention keeps the 2^-Nh prefactor, so each hidden node
contributes exactly ``cosh(theta_k)`` and a node with zero parameters
contributes 1:

    psi(s) = prod_j exp(a_j s_j) * prod_k cosh(b_k + sum_j s_j W_jk)
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AmplitudeZeroError, ConfigError
from .spinspace import SpinConfig, spins_of

BETA1 = 3.0 * np.sqrt(2.0 * np.log(2.0)) / np.pi

# |cosh(theta)| below this counts as an exact zero
ZERO_COSH = 1e-300
_LOG_ZERO = np.log(ZERO_COSH)
_LN2 = np.log(2.0)


def log_cosh(theta):
    """Complex ``log(cosh(theta))`` safe for large ``|Re theta|``.

    The real part is ``ln|cosh theta|`` (``-inf`` at exact zeros); the
    imaginary part is the principal argument of ``cosh theta``.
    """
    theta = np.asarray(theta, dtype=complex)
    u = np.abs(theta.real)
    v = theta.imag
    e = np.exp(-2.0 * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        # |cosh|^2 = e^{2u}/4 * (1 + 2 e^{-2u} cos 2v + e^{-4u})
        inner = 1.0 + 2.0 * e * np.cos(2.0 * v) + e * e
        re = u - _LN2 + 0.5 * np.log(np.maximum(inner, 0.0))
    # cosh(u+iv) = cosh u cos v + i sinh u sin v, and cosh u > 0
    im = np.arctan2(np.tanh(theta.real) * np.sin(v), np.cos(v))
    zero = re < _LOG_ZERO
    re = np.where(zero, -np.inf, re)
    im = np.where(zero, 0.0, im)
    return re + 1j * im


def _as_complex(x, shape, name):
    arr = np.array(x, dtype=complex)
    if arr.shape != shape:
        raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RbmParams:
    """Complex RBM parameters; ``W`` has shape (L, Nh)."""

    a: np.ndarray
    b: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.array(self.a, dtype=complex))
        L = a.shape[0]
        b = np.atleast_1d(np.array(self.b, dtype=complex)) if np.size(self.b) else np.zeros(0, complex)
        Nh = b.shape[0]
        W = np.array(self.W, dtype=complex).reshape(L, Nh)
        if Nh % L:
            raise ValueError(f"Nh={Nh} is not a multiple of L={L}")
        object.__setattr__(self, "a", _as_complex(a, (L,), "a"))
        object.__setattr__(self, "b", _as_complex(b, (Nh,), "b"))
        object.__setattr__(self, "W", _as_complex(W, (L, Nh), "W"))

    @property
    def L(self) -> int:
        return self.a.shape[0]

    @property
    def Nh(self) -> int:
        return self.b.shape[0]

    @property
    def levels(self) -> int:
        return self.Nh // self.L

    @classmethod
    def zeros(cls, L: int, Nh: int = 0) -> "RbmParams":
        return cls(np.zeros(L), np.zeros(Nh), np.zeros((L, Nh)))

    def concat(self, other: "RbmParams") -> "RbmParams":
        """Append the hidden layer of ``other``; visible biases are added."""
        if other.L != self.L:
            raise ValueError("cannot concatenate RBMs of different L")
        return RbmParams(self.a + other.a, np.concatenate([self.b, other.b]),
                         np.concatenate([self.W, other.W], axis=1))

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and np.array_equal(self.W, other.W))

    def __repr__(self):
        return f"RbmParams(L={self.L}, Nh={self.Nh})"


@dataclass(frozen=True, eq=False)
class TranslationInvariantRbm:
    """Shared-filter RBM: one length-L filter and one bias per level.

    ``filters[l, d]`` is the weight between a hidden node of level ``l+1``
    centred on site ``jc`` and the spin at site ``jc + d`` (mod L).
    """

    L: int
    a0: complex
    b_level: np.ndarray
    filters: np.ndarray

    def __post_init__(self):
        L = int(self.L)
        b = np.atleast_1d(np.array(self.b_level, dtype=complex)) if np.size(self.b_level) else np.zeros(0, complex)
        alpha = b.shape[0]
        f = np.array(self.filters, dtype=complex).reshape(alpha, L)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "a0", complex(self.a0))
        object.__setattr__(self, "b_level", _as_complex(b, (alpha,), "b_level"))
        object.__setattr__(self, "filters", _as_complex(f, (alpha, L), "filters"))

    @property
    def alpha(self) -> int:
        return self.b_level.shape[0]

    @property
    def n_params(self) -> int:
        return 1 + self.alpha * (self.L + 1)

    def to_vector(self) -> np.ndarray:
        """Flat parameter vector ``[a0, b_level..., filters row-major...]``."""
        return np.concatenate([[self.a0], self.b_level, self.filters.ravel()])

    @classmethod
    def from_vector(cls, L: int, alpha: int, vec) -> "TranslationInvariantRbm":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (1 + alpha * (L + 1),):
            raise ValueError(f"parameter vector has shape {vec.shape}")
        return cls(L, vec[0], vec[1:1 + alpha], vec[1 + alpha:].reshape(alpha, L))

    def truncate_levels(self, n: int) -> "TranslationInvariantRbm":
        if not 0 <= n <= self.alpha:
            raise ValueError(f"cannot keep {n} of {self.alpha} levels")
        return TranslationInvariantRbm(self.L, self.a0, self.b_level[:n], self.filters[:n])

    def __eq__(self, other):
        if not isinstance(other, TranslationInvariantRbm):
            return NotImplemented
        return (self.L == other.L and self.a0 == other.a0
                and np.array_equal(self.b_level, other.b_level)
                and np.array_equal(self.filters, other.filters))

    def __repr__(self):
        return f"TranslationInvariantRbm(L={self.L}, alpha={self.alpha})"


@dataclass(frozen=True)
class LogAmplitude:
    """``psi = exp(log_mod + i arg)``; ``arg`` is not reduced mod 2 pi."""

    log_mod: float
    arg: float

    @property
    def value(self) -> complex:
        if self.log_mod == -np.inf:
            return 0j
        return complex(np.exp(self.log_mod + 1j * self.arg))

    @property
    def is_zero(self) -> bool:
        return self.log_mod == -np.inf


def _check_config(p: RbmParams, s: SpinConfig) -> None:
    if s.length != p.L:
        raise ValueError(f"config has {s.length} sites, RBM has L={p.L}")


def effective_angle(p: RbmParams, s: SpinConfig, k: int) -> complex:
    """theta_k = b_k + sum_j s_j W_jk for hidden node k (1-based)."""
    _check_config(p, s)
    if not 1 <= k <= p.Nh:
        raise IndexError(f"hidden index {k} outside 1..{p.Nh}")
    return complex(p.b[k - 1] + s.spins() @ p.W[:, k - 1])


def angles(p: RbmParams, spins: np.ndarray) -> np.ndarray:
    """All effective angles for an (n, L) batch of spins -> (n, Nh)."""
    return p.b + spins @ p.W


def log_psi_batch(p: RbmParams, spins: np.ndarray) -> np.ndarray:
    """Complex log-amplitudes ``log_mod + i arg`` for an (n, L) spin batch."""
    spins = np.asarray(spins, dtype=float)
    visible = spins @ p.a
    if p.Nh == 0:
        return visible.astype(complex)
    lc = log_cosh(angles(p, spins))
    return visible + lc.sum(axis=1)


def log_psi(p: RbmParams, s: SpinConfig) -> LogAmplitude:
    _check_config(p, s)
    z = log_psi_batch(p, s.spins()[None, :])[0]
    if z.real == -np.inf:
        return LogAmplitude(-np.inf, 0.0)
    return LogAmplitude(float(z.real), float(z.imag))


def psi_ratio(p: RbmParams, s1: SpinConfig, s2: SpinConfig) -> complex:
    """psi(s1) / psi(s2) evaluated from log amplitudes."""
    l1, l2 = log_psi(p, s1), log_psi(p, s2)
    if l2.is_zero:
        raise AmplitudeZeroError(f"psi vanishes at config {s2.bits}")
    if l1.is_zero:
        return 0j
    return complex(np.exp((l1.log_mod - l2.log_mod) + 1j * (l1.arg - l2.arg)))


def truncate(p: RbmParams, Nh_keep: int) -> RbmParams:
    """Keep the first ``Nh_keep`` hidden nodes."""
    if Nh_keep < 0 or Nh_keep > p.Nh:
        raise ValueError(f"cannot keep {Nh_keep} of {p.Nh} hidden nodes")
    if Nh_keep % p.L:
        raise ValueError(f"Nh_keep={Nh_keep} is not a multiple of L={p.L}")
    return RbmParams(p.a, p.b[:Nh_keep], p.W[:, :Nh_keep])


def expand(t: TranslationInvariantRbm) -> RbmParams:
    """Full parameters: node k = (l-1) L + jc has W_jk = filters[l-1, (j - jc) mod L]."""
    L = t.L
    d = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L  # d[j, jc]
    W = np.concatenate([f[d] for f in t.filters], axis=1) if t.alpha else np.zeros((L, 0))
    b = np.repeat(t.b_level, L)
    return RbmParams(np.full(L, t.a0), b, W)


def node_scores(W: np.ndarray, beta1: float = BETA1) -> np.ndarray:
    """Per-edge importance ``(Re W)^2 + beta1^2 (Im W)^2``."""
    return W.real ** 2 + beta1 ** 2 * W.imag ** 2


def reorder_hidden(p: RbmParams, beta1: float = BETA1) -> RbmParams:
    """Group hidden nodes into levels by descending total edge score.

    Within a level nodes are placed by their centre site (argmax of the
    edge score); ties at any stage keep the original node order.
    """
    score = node_scores(p.W, beta1)
    total = score.sum(axis=0)
    order = np.argsort(-total, kind="stable")
    centers = np.argmax(score, axis=0)
    L = p.L
    final = []
    for lvl in range(p.levels):
        block = order[lvl * L:(lvl + 1) * L]
        final.extend(block[np.argsort(centers[block], kind="stable")])
    final = np.array(final, dtype=int)
    return RbmParams(p.a, p.b[final], p.W[:, final])


def canonicalize_levels(t: TranslationInvariantRbm, beta1: float = BETA1) -> TranslationInvariantRbm:
    """Sort levels by descending score and roll each filter so its peak is at offset 0.

    Rolling a filter only relabels which node sits at which centre, so the
    represented state is unchanged.
    """
    if t.alpha == 0:
        return t
    score = node_scores(t.filters, beta1)
    order = np.argsort(-score.sum(axis=1), kind="stable")
    filters = []
    for lvl in order:
        shift = int(np.argmax(score[lvl]))
        filters.append(np.roll(t.filters[lvl], -shift))
    return TranslationInvariantRbm(t.L, t.a0, t.b_level[order], np.array(filters))


# ---------------------------------------------------------------- file format

def _enc(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _enc_array(arr: np.ndarray):
    if arr.ndim == 0:
        return _enc(arr)
    return [_enc_array(x) for x in arr]


def _dec_array(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.size == 0:
        return np.zeros(arr.shape[:-1] if arr.ndim > 1 else (0,), dtype=complex)
    if arr.shape[-1] != 2:
        raise ConfigError("complex numbers must be encoded as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def params_to_dict(p) -> dict:
    if isinstance(p, TranslationInvariantRbm):
        return {"L": p.L, "alpha": p.alpha, "a0": _enc(p.a0),
                "b_level": _enc_array(p.b_level), "filters": _enc_array(p.filters)}
    return {"L": p.L, "Nh": p.Nh, "a": _enc_array(p.a), "b": _enc_array(p.b),
            "W": _enc_array(p.W)}


def params_from_dict(d: dict):
    try:
        if "filters" in d:
            L, alpha = int(d["L"]), int(d["alpha"])
            filters = _dec_array(d["filters"]).reshape(alpha, L)
            a0 = _dec_array(d["a0"])
            return TranslationInvariantRbm(L, complex(a0), _dec_array(d["b_level"]).reshape(alpha), filters)
        L, Nh = int(d["L"]), int(d["Nh"])
        return RbmParams(_dec_array(d["a"]).reshape(L), _dec_array(d["b"]).reshape(Nh),
                         _dec_array(d["W"]).reshape(L, Nh))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed RBM parameter file: {exc}") from exc


def save_params(p, path) -> None:
    # json writes floats with repr(), which round-trips doubles exactly
    Path(path).write_text(json.dumps(params_to_dict(p)))


def load_params(path):
    return params_from_dict(json.loads(Path(path).read_text()))


def level_log_terms(t: TranslationInvariantRbm, spins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Visible log term (n,) and per-level sums of log cosh (n, alpha).

    A cumulative sum over the level axis gives log psi for every truncation
    ``Nh = m L`` from a single evaluation.
    """
    spins = np.asarray(spins, dtype=float)
    L = t.L
    d = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    visible = t.a0 * spins.sum(axis=1)
    out = np.empty((spins.shape[0], t.alpha), dtype=complex)
    for lvl in range(t.alpha):
        theta = t.b_level[lvl] + spins @ t.filters[lvl][d]
        out[:, lvl] = log_cosh(theta).sum(axis=1)
    return visible, out
