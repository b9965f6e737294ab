"""Closed-form truncation-error bounds for LRFD RBMs.

Everything here is a function of the decay profile alone: the tail sum
P(m) of lambda^2, the orbital sum Q(L), the composite ``x = L Q P`` and the
bound functions F1 (state distance) and F2 (Pauli expectation difference).

Level counts ``n`` are overall level counts of the RBM. ``ks`` is the
number of leading levels that lie outside the LRFD profile (for example the
cluster level of a perturbed cluster state); profile level ``j`` is overall
level ``j + ks``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError
from .lrfd import DecayProfile
from .series import tail_sum_power
from .spinspace import circ_offsets

__all__ = [
    "BETA1", "BETA2", "C1", "C2", "BoundConstants", "constants", "tail_sum_power",
    "P_tail", "Q_val", "x_value", "F1", "F2", "F1_leading", "F2_leading",
    "ratio_bounds", "n_I", "n_theta", "truncation_error_bounds", "nh_star_bound",
    "ManifoldClass", "classify_manifold", "TruncationReport", "truncation_report",
    "level_diagnostics",
]

BETA1 = 3.0 * math.sqrt(2.0 * math.log(2.0)) / math.pi
BETA2 = 3.0 * math.sqrt(3.0) / math.pi
C1 = 4.0 * (1.0 + BETA1 ** 2)
C2 = 4.0 * BETA1 ** 2 + 4.0 * math.sqrt(BETA1 ** 4 + 4.0 * BETA2 ** 2)

V_LIMIT = math.pi / 3
THETA_LIMIT = math.pi / 4
MAX_LEVELS = 10 ** 12


@dataclass(frozen=True)
class BoundConstants:
    beta1: float = BETA1
    beta2: float = BETA2
    c1: float = C1
    c2: float = C2


def constants() -> BoundConstants:
    return BoundConstants()


# ---------------------------------------------------------------- P, Q, x

def P_tail(profile: DecayProfile, m: int, ks: int = 0) -> float:
    """P(m) = sum over levels beyond m of (s lambda)^2.

    ``s`` is the largest real or imaginary part of c_w and c_b, so that
    ``s * lambda`` bounds both the real and the imaginary parameter parts.
    """
    if m < ks:
        raise ValueError(f"P(m) needs m >= ks ({m} < {ks})")
    s = profile.scale
    if s == 0.0:
        return 0.0
    return s * s * profile.lam.sq_tail(m - ks)


def Q_val(profile: DecayProfile, L: int) -> float:
    """(sum_{r=0}^{floor(L/2)} mu(r))^2."""
    if L < 1:
        raise ValueError("L must be positive")
    mu = profile.mu(np.arange(L // 2 + 1))
    return math.fsum(mu) ** 2


def x_value(profile: DecayProfile, L: int, n: int, ks: int = 0) -> float:
    return L * Q_val(profile, L) * P_tail(profile, n, ks)


def F1(x):
    """2 - 2 exp(-2(1+b1^2) x) cos(4 b2 x), evaluated without cancellation."""
    x = np.asarray(x, dtype=float)
    a = 2.0 * (1.0 + BETA1 ** 2) * x
    b = 4.0 * BETA2 * x
    out = 2.0 * (-np.expm1(-a) * np.cos(b) + 2.0 * np.sin(b / 2) ** 2)
    return out if out.ndim else float(out)


def _dist_term(a, b):
    # sqrt(e^{2a} - 2 e^{a} cos(2b) + 1) = sqrt(expm1(a)^2 + 4 e^a sin^2 b)
    return np.sqrt(np.expm1(a) ** 2 + 4.0 * np.exp(a) * np.sin(b) ** 2)


def F2(x):
    x = np.asarray(x, dtype=float)
    up, down = 4.0 * x, -4.0 * BETA1 ** 2 * x
    b = 4.0 * BETA2 * x
    first = np.maximum(np.abs(np.expm1(up)), np.abs(np.expm1(down)))
    second = np.maximum(_dist_term(up, b), _dist_term(down, b))
    out = first + second
    return out if out.ndim else float(out)


def F1_leading(x):
    return C1 * np.asarray(x, dtype=float) if np.ndim(x) else C1 * float(x)


def F2_leading(x):
    return C2 * np.asarray(x, dtype=float) if np.ndim(x) else C2 * float(x)


# ---------------------------------------------------------------- level thresholds

def level_diagnostics(profile: DecayProfile, L: int, levels: int) -> dict:
    """Per-level U_k (real) and V_k (imaginary) angle sums, exact and bounded.

    U_k = |Re b_k| + sum_j |Re W_jk| and V_k likewise with imaginary parts;
    the bound form is ``s lambda (mu(0) + sum_j mu)``.
    """
    k = np.arange(1, levels + 1)
    lam = profile.lam(k)
    mu = profile.mu(circ_offsets(L))
    mu_sum, mu0 = float(mu.sum()), float(profile.mu(0))
    cw, cb = profile.c_w, profile.c_b
    U = lam * (abs(cb.real) * mu0 + abs(cw.real) * mu_sum)
    V = lam * (abs(cb.imag) * mu0 + abs(cw.imag) * mu_sum)
    bound = profile.scale * lam * (mu0 + mu_sum)
    return {"U": U, "V": V, "V_bound": bound}


def _first_level_below(f, limit: float, start: int = 1) -> int:
    """Smallest level j >= start with f(j) <= limit, for nonincreasing f."""
    if f(start) <= limit:
        return start
    lo, hi = start, start + 1
    while f(hi) > limit:
        lo, hi = hi, start + 2 * (hi - start)
        if hi > MAX_LEVELS:
            raise DivergenceError("level threshold not reached")
    # invariant: f(lo) > limit >= f(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) > limit:
            lo = mid
        else:
            hi = mid
    return hi


def n_I(profile: DecayProfile, L: int, ks: int = 0, exact: bool = True) -> int:
    """Smallest n >= ks such that V_k <= pi/3 for every level beyond n.

    ``exact`` evaluates V_k from the constructed parameters; otherwise the
    looser ``s lambda (mu(0) + sum mu)`` bound is used.
    """
    mu = profile.mu(circ_offsets(L))
    mu_sum, mu0 = float(mu.sum()), float(profile.mu(0))
    if exact:
        coef = abs(profile.c_b.imag) * mu0 + abs(profile.c_w.imag) * mu_sum
    else:
        coef = profile.scale * (mu0 + mu_sum)
    if coef == 0.0:
        return ks
    lam_tab = profile.lam.table

    def V(j):
        if lam_tab is not None and j > len(lam_tab):
            return 0.0
        return coef * float(profile.lam(j))

    return ks + _first_level_below(V, V_LIMIT) - 1


def n_theta(profile: DecayProfile, L: int, ks: int = 0) -> int:
    """Smallest n > n_I with 4 beta2 L Q P(n) <= pi/4."""
    start = n_I(profile, L, ks) + 1
    LQ = L * Q_val(profile, L)
    return _first_level_below(lambda n: 4.0 * BETA2 * LQ * P_tail(profile, n, ks), THETA_LIMIT, start)


def _levels(L: int, Nh: int) -> int:
    if Nh % L:
        raise ValueError(f"Nh={Nh} is not a multiple of L={L}")
    return Nh // L


def ratio_bounds(profile: DecayProfile, L: int, Nh: int, ks: int = 0) -> tuple[float, float, float]:
    """(R1, R2, Theta): bounds on the squared ratio modulus and its argument."""
    n = _levels(L, Nh)
    nI = n_I(profile, L, ks)
    if n <= nI:
        raise DomainError(f"ratio bounds need Nh/L > n_I = {nI}", min_nh=(nI + 1) * L)
    x = x_value(profile, L, n, ks)
    return math.exp(4.0 * x), math.exp(-4.0 * BETA1 ** 2 * x), 4.0 * BETA2 * x


def truncation_error_bounds(profile: DecayProfile, L: int, Nh: int, ks: int = 0) -> tuple[float, float]:
    """(F1(x), F2(x)) with x = L Q(L) P(Nh/L)."""
    n = _levels(L, Nh)
    nt = n_theta(profile, L, ks)
    if n <= nt:
        raise DomainError(f"bounds hold for Nh/L > n_theta = {nt}", min_nh=(nt + 1) * L)
    x = x_value(profile, L, n, ks)
    return F1(x), F2(x)


def nh_star_bound(profile: DecayProfile, L: int, eps0: float, error_type: str = "l2",
                  ks: int = 0, leading: bool = False) -> int:
    """Smallest admissible Nh whose bound is <= eps0 (an upper bound on Nh*).

    ``error_type`` is "l2" (F1) or "expectation" (F2); ``leading`` swaps the
    exact F for its linear approximation c x.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    funcs = {("l2", False): F1, ("l2", True): F1_leading,
             ("expectation", False): F2, ("expectation", True): F2_leading}
    try:
        F = funcs[(error_type, bool(leading))]
    except KeyError:
        raise ValueError(f"unknown error type {error_type!r}") from None
    start = n_theta(profile, L, ks) + 1
    LQ = L * Q_val(profile, L)
    n = _first_level_below(lambda m: F(LQ * P_tail(profile, m, ks)), eps0, start)
    return n * L


# ---------------------------------------------------------------- manifolds

_FORMULAS = {
    "S2_1": "O(L ln(L/eps))",
    "S2_2": "O((L^(2 alpha_P)/eps)^(1/(2 alpha_P - 1)))",
    "S2_3": "O(L ln(L/eps))",
    "S2_4": "O((L^(2 alpha_P) (ln L)^2/eps)^(1/(2 alpha_P - 1)))",
    "S2_5": "O(L ln(L/eps))",
    "S2_6": "O((L^(2 alpha_P + 2)/eps)^(1/(2 alpha_P - 1)))",
    "S2_7": "O(L exp(L/eps))",
}
_ROWS = {("converge", "exponential"): "S2_1", ("converge", "power"): "S2_2",
         ("inverse", "exponential"): "S2_3", ("inverse", "power"): "S2_4",
         ("saturate", "exponential"): "S2_5", ("saturate", "power"): "S2_6",
         ("converge", "log"): "S2_7"}


@dataclass(frozen=True)
class ManifoldClass:
    """A complexity class of LRFD states; ``tag`` is None when unclassified."""

    tag: Optional[str]
    complexity_formula: str
    alpha_P: Optional[float] = None
    bound_not_tight: bool = False

    def scale(self, L: float, eps: float) -> float:
        """Complexity formula evaluated with all hidden constants set to 1."""
        a = self.alpha_P
        if self.tag in ("S2_1", "S2_3", "S2_5"):
            return L * math.log(L / eps)
        if self.tag == "S2_2":
            return (L ** (2 * a) / eps) ** (1 / (2 * a - 1))
        if self.tag == "S2_4":
            return (L ** (2 * a) * math.log(L) ** 2 / eps) ** (1 / (2 * a - 1))
        if self.tag == "S2_6":
            return (L ** (2 * a + 2) / eps) ** (1 / (2 * a - 1))
        if self.tag == "S2_7":
            return L * math.exp(L / eps)
        raise ValueError("unclassified profile has no complexity formula")


def _orbital_class(profile: DecayProfile) -> Optional[str]:
    mu = profile.mu
    if mu.kind == "constant":
        return "saturate" if mu.mu0 > 0 else "converge"
    if mu.kind == "power":
        if mu.alpha_Q > 1:
            return "converge"
        if mu.alpha_Q == 1:
            return "inverse"
        return None
    # tables are zero past their end, so check the Cauchy criterion on partial sums
    vals = np.asarray(mu.table + (0.0,) * 2)
    partial = np.cumsum(vals)
    return "converge" if abs(partial[-1] - partial[-2]) <= 1e-12 * max(partial[-1], 1.0) else None


def classify_manifold(profile: DecayProfile) -> ManifoldClass:
    q = _orbital_class(profile)
    lam_kind = profile.lam.kind if profile.lam.convergent else None
    tag = _ROWS.get((q, lam_kind))
    if tag is None:
        return ManifoldClass(None, "unknown")
    alpha_P = profile.lam.alpha_P if lam_kind == "power" else None
    return ManifoldClass(tag, _FORMULAS[tag], alpha_P, bound_not_tight=(tag == "S2_7"))


# ---------------------------------------------------------------- reports

@dataclass
class TruncationReport:
    L: int
    Nh: int
    x: float
    P_tail: float
    Q: float
    bound1: Optional[float]
    bound2: Optional[float]
    exact1: Optional[float]
    exact2: Optional[float]
    R1: Optional[float]
    R2: Optional[float]
    Theta: Optional[float]
    n_theta: int
    n_I: int
    n_I_bound: int = 0
    extra: dict = field(default_factory=dict)

    FIELDS = ("L", "Nh", "x", "P_tail", "Q", "bound1", "bound2", "exact1", "exact2",
              "R1", "R2", "Theta", "n_theta", "n_I")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def write_csv(cls, reports, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cls.FIELDS)
            for r in reports:
                w.writerow(["" if getattr(r, f) is None else
                            (repr(float(getattr(r, f))) if isinstance(getattr(r, f), float) else getattr(r, f))
                            for f in cls.FIELDS])


def truncation_report(profile: DecayProfile, L: int, Nh: int, ks: int = 0,
                      exact1: Optional[float] = None, exact2: Optional[float] = None) -> TruncationReport:
    """All bound quantities for one (L, Nh); bound fields are None outside their domain."""
    n = _levels(L, Nh)
    if n < ks:
        raise ConfigError(f"Nh/L={n} is below ks={ks}")
    P, Q = P_tail(profile, n, ks), Q_val(profile, L)
    x = L * Q * P
    nI, nt = n_I(profile, L, ks), n_theta(profile, L, ks)
    nIb = n_I(profile, L, ks, exact=False)
    R1 = R2 = Th = b1 = b2 = None
    if n > nI:
        R1, R2, Th = ratio_bounds(profile, L, Nh, ks)
    if n > nt:
        b1, b2 = F1(x), F2(x)
    return TruncationReport(L, Nh, x, P, Q, b1, b2, exact1, exact2, R1, R2, Th, nt, nI, nIb)
