"""Constructors for LRFD parameter families and the importance measure.

LRFD weights factorize as ``W_jk = c_w * lambda(level) * mu(r)``, where
``r`` is the circular distance of site ``j`` from the centre of node ``k``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .rbm import BETA1, RbmParams, TranslationInvariantRbm, expand
from .series import tail_sum_log, tail_sum_power
from .spinspace import circ_offsets

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


LEVEL_KINDS = ("exponential", "power", "log", "table")
ORBITAL_KINDS = ("power", "constant", "table")


@dataclass(frozen=True)
class LevelDecay:
    """lambda(k) for levels k = 1, 2, ...

    exponential: ``prefactor * delta_P**-k``
    power:       ``prefactor * k**-alpha_P``
    log:         ``prefactor / (sqrt(k+1) ln(k+1))``, whose squared tail decays like 1/ln m
    table:       explicit values; asking beyond the table is an error
    """

    kind: str
    delta_P: Optional[float] = None
    alpha_P: Optional[float] = None
    prefactor: float = 1.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in LEVEL_KINDS:
            raise ConfigError(f"unknown level-decay kind {self.kind!r}")
        need = {"exponential": "delta_P", "power": "alpha_P", "table": "table"}.get(self.kind)
        if need and getattr(self, need) is None:
            raise ConfigError(f"{self.kind} level decay needs {need}")
        if self.table is not None:
            object.__setattr__(self, "table", tuple(float(x) for x in self.table))
        if self.prefactor < 0:
            raise ConfigError("level prefactor must be nonnegative")

    def __call__(self, k):
        k = np.asarray(k)
        if np.any(k < 1):
            raise ValueError("levels are numbered from 1")
        if self.kind == "exponential":
            return self.prefactor * float(self.delta_P) ** (-k.astype(float))
        if self.kind == "power":
            return self.prefactor * k.astype(float) ** -float(self.alpha_P)
        if self.kind == "log":
            kk = k.astype(float) + 1.0
            return self.prefactor / (np.sqrt(kk) * np.log(kk))
        if np.any(k > len(self.table)):
            raise ConfigError(f"level table has {len(self.table)} entries, level {int(np.max(k))} requested")
        return np.asarray(self.table)[k - 1]

    @property
    def convergent(self) -> bool:
        if self.kind == "exponential":
            return self.delta_P > 1
        if self.kind == "power":
            return self.alpha_P > 0.5
        return True

    def sq_tail(self, m: int) -> float:
        """sum_{k>m} lambda(k)^2; table entries past the end count as 0."""
        m = int(m)
        if m < 0:
            raise ValueError("m must be nonnegative")
        if not self.convergent:
            raise DivergenceError(f"sum of lambda^2 diverges for {self}")
        p2 = self.prefactor ** 2
        if self.kind == "exponential":
            q = self.delta_P ** -2.0
            return p2 * q ** (m + 1) / (1.0 - q)
        if self.kind == "power":
            return p2 * tail_sum_power(m, 2.0 * self.alpha_P)
        if self.kind == "log":
            return p2 * tail_sum_log(m)
        return math.fsum(x * x for x in self.table[m:])

    def validate(self, levels: int) -> None:
        if not self.convergent:
            raise ConfigError(f"level decay {self} is not admissible (need delta_P > 1 or alpha_P > 1/2)")
        vals = self(np.arange(1, levels + 1))
        if np.any(vals < 0) or np.any(np.diff(vals) > 1e-15 * np.abs(vals[:-1])):
            raise ConfigError("lambda must be nonnegative and nonincreasing")


@dataclass(frozen=True)
class OrbitalDecay:
    """mu(r) for circular distances r = 0, 1, ...

    power:    ``mu(0) = delta_Q`` and ``mu(r) = delta_Q / 2 * r**-alpha_Q``
    constant: ``mu(r) = mu0``
    table:    explicit values, zero beyond the table
    """

    kind: str
    delta_Q: Optional[float] = None
    alpha_Q: Optional[float] = None
    mu0: Optional[float] = None
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ORBITAL_KINDS:
            raise ConfigError(f"unknown orbital kind {self.kind!r}")
        need = {"power": ("delta_Q", "alpha_Q"), "constant": ("mu0",), "table": ("table",)}[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise ConfigError(f"{self.kind} orbital needs {name}")
        if self.table is not None:
            object.__setattr__(self, "table", tuple(float(x) for x in self.table))

    def __call__(self, r):
        r = np.asarray(r)
        if np.any(r < 0):
            raise ValueError("distances must be nonnegative")
        if self.kind == "power":
            rf = np.maximum(r, 1).astype(float)
            return np.where(r == 0, self.delta_Q, 0.5 * self.delta_Q * rf ** -self.alpha_Q)
        if self.kind == "constant":
            return np.full(r.shape, float(self.mu0))
        tab = np.asarray(self.table + (0.0,))
        return tab[np.minimum(r, len(self.table))]

    def validate(self, L: int) -> None:
        vals = self(np.arange(L // 2 + 1))
        if np.any(vals < 0) or np.any(np.diff(vals) > 0):
            raise ConfigError("mu must be nonnegative and nonincreasing")


def _cplx(z) -> complex:
    if isinstance(z, (list, tuple)):
        if len(z) != 2:
            raise ConfigError(f"complex value must be [re, im], got {z!r}")
        return complex(float(z[0]), float(z[1]))
    return complex(z)


@dataclass(frozen=True)
class DecayProfile:
    lam: LevelDecay
    mu: OrbitalDecay
    c_w: complex = 1.0
    c_b: complex = 0.0
    a0: complex = 0.0

    def __post_init__(self):
        for name in ("c_w", "c_b", "a0"):
            object.__setattr__(self, name, _cplx(getattr(self, name)))

    @property
    def scale(self) -> float:
        """Largest real or imaginary coefficient; lambda is bounded by scale * lambda."""
        return max(abs(self.c_w.real), abs(self.c_w.imag), abs(self.c_b.real), abs(self.c_b.imag))

    def validate(self, L: int, levels: int) -> None:
        if abs(self.c_b) > abs(self.c_w) + 1e-15:
            raise ConfigError("|c_b| must not exceed |c_w|")
        self.lam.validate(levels)
        self.mu.validate(L)

    def filter(self, L: int, k: int) -> np.ndarray:
        """Level-k filter indexed by signed offset d = (j - jc) mod L."""
        return self.c_w * float(self.lam(k)) * self.mu(circ_offsets(L))

    def with_(self, **changes) -> "DecayProfile":
        return replace(self, **changes)


def build_lrfd(profile: DecayProfile, L: int, alpha: int) -> TranslationInvariantRbm:
    if alpha < 1:
        raise ConfigError("alpha must be at least 1")
    if L < 1:
        raise ConfigError("L must be positive")
    profile.validate(L, alpha)
    lam = profile.lam(np.arange(1, alpha + 1))
    mu = profile.mu(circ_offsets(L))
    filters = profile.c_w * lam[:, None] * mu[None, :]
    b_level = profile.c_b * lam * float(profile.mu(0))
    return TranslationInvariantRbm(L, profile.a0, b_level, filters)


CLUSTER_FILTER = {0: 0.75j * np.pi, 1: 0.25j * np.pi, -1: 0.5j * np.pi}
CLUSTER_BIAS = 0.25j * np.pi


def cluster_filter_rbm(L: int) -> TranslationInvariantRbm:
    if L < 3:
        raise ConfigError("the cluster construction needs L >= 3")
    f = np.zeros(L, dtype=complex)
    for d, w in CLUSTER_FILTER.items():
        f[d % L] = w
    return TranslationInvariantRbm(L, 0.0, [CLUSTER_BIAS], f[None, :])


def build_cluster_rbm(L: int) -> RbmParams:
    """One-level RBM that exactly represents the cluster-state ground state."""
    return expand(cluster_filter_rbm(L))


def build_perturbed_cluster(L: int, profile: DecayProfile, alpha: int) -> RbmParams:
    """Cluster level followed by ``alpha`` LRFD levels; Nh = (alpha+1) L, a = 0."""
    pert = expand(build_lrfd(profile.with_(a0=0.0), L, alpha))
    return build_cluster_rbm(L).concat(pert)


def perturbed_cluster_ti(L: int, profile: DecayProfile, alpha: int) -> TranslationInvariantRbm:
    """Translation-invariant form of :func:`build_perturbed_cluster`."""
    c = cluster_filter_rbm(L)
    p = build_lrfd(profile.with_(a0=0.0), L, alpha)
    return TranslationInvariantRbm(L, 0.0, np.concatenate([c.b_level, p.b_level]),
                                   np.vstack([c.filters, p.filters]))


def _level_values(lam, alpha: Optional[int]) -> np.ndarray:
    if isinstance(lam, LevelDecay):
        if alpha is None:
            raise ValueError("alpha is required for a functional level decay")
        return lam(np.arange(1, alpha + 1))
    vals = np.asarray(lam, dtype=float)
    if alpha is not None:
        if alpha > vals.size:
            raise ConfigError(f"level table has {vals.size} entries, {alpha} requested")
        vals = vals[:alpha]
    return vals


def build_kron_delta(L: int, mu0: float, lam, alpha: Optional[int] = None) -> TranslationInvariantRbm:
    """All-real LRFD RBM peaked at the all-up configuration.

    ``lam`` is a :class:`LevelDecay` or a table of per-level values.
    """
    if mu0 <= 0:
        raise ConfigError("mu0 must be positive")
    vals = _level_values(lam, alpha)
    if np.any(vals < 0):
        raise ConfigError("level values must be nonnegative")
    filters = mu0 * np.repeat(vals[:, None], L, axis=1)
    return TranslationInvariantRbm(L, 0.0, mu0 * vals, filters)


def kron_ratio_exact(L: int, mu0: float, lam, alpha: Optional[int] = None) -> float:
    """|psi(all up) / psi(all up, last spin flipped)| from the closed-form product."""
    vals = _level_values(lam, alpha)
    x = (L - 1) * mu0 * vals
    dx = 2 * mu0 * vals
    # log cosh difference without overflow
    lc = lambda z: np.abs(z) + np.log1p(np.exp(-2 * np.abs(z))) - np.log(2.0)
    return float(np.exp(L * np.sum(lc(x + dx) - lc(x))))


def certify_beta3(x0: float = 0.5, n_grid: int = 400, max_tries: int = 50) -> float:
    """Constant beta3 with cosh(x+dx)/cosh(x) >= exp(beta3 x dx) for 0 < dx < x < x0.

    Starts from tanh(x0)/x0 * (1 - x0^2/6), checks the inequality on a dense
    grid and shrinks by 10% until it holds.
    """
    beta = math.tanh(x0) / x0 * (1 - x0 ** 2 / 6)
    xs = np.linspace(0, x0, n_grid + 2)[1:-1]
    X, D = np.meshgrid(xs, xs, indexing="ij")
    mask = D < X
    X, D = X[mask], D[mask]
    lhs = np.log(np.cosh(X + D)) - np.log(np.cosh(X))
    for _ in range(max_tries):
        if np.all(lhs >= beta * X * D):
            return beta
        beta *= 0.9
    raise ArithmeticError("could not certify beta3")


def kron_ratio_lower_bound(L: int, mu0: float, lam, k0: Optional[int] = None,
                           beta3: Optional[float] = None, x0: float = 0.5,
                           alpha: Optional[int] = None) -> float:
    """Certified lower bound exp(2 beta3 L (L-1) mu0^2 sum_{k>k0} lambda^2).

    With ``alpha`` set the sum stops at level ``alpha`` (finite RBM);
    otherwise the full tail is used. ``k0`` defaults to the smallest level
    after which ``(L-1) mu0 lambda(k) < x0``.
    """
    if beta3 is None:
        beta3 = certify_beta3(x0)
    if not 0 < beta3 < 1:
        raise ConfigError("beta3 must lie in (0, 1)")
    if L < 4:
        raise ConfigError("the bound needs dx < x, i.e. L >= 4")

    def lam_at(k):
        return float(_level_values(lam, k)[k - 1]) if not isinstance(lam, LevelDecay) else float(lam(k))

    n_avail = alpha if alpha is not None else (None if isinstance(lam, LevelDecay) else len(lam))
    if k0 is None:
        k0 = 0
        while (n_avail is None or k0 < n_avail) and (L - 1) * mu0 * lam_at(k0 + 1) >= x0:
            k0 += 1
    elif (n_avail is None or k0 < n_avail) and (L - 1) * mu0 * lam_at(k0 + 1) >= x0:
        raise ConfigError(f"(L-1) mu0 lambda(k) >= x0 at level {k0 + 1}")
    if n_avail is not None:
        vals = _level_values(lam, n_avail)
        tail = math.fsum(v * v for v in vals[k0:])
    else:
        tail = lam.sq_tail(k0)
    return float(np.exp(2 * beta3 * L * (L - 1) * mu0 ** 2 * tail))


# ---------------------------------------------------------------- importance

@dataclass(frozen=True, eq=False)
class EtaSurface:
    """eta[j-1, k-1] for site j and level k, taken at each level's centre node."""

    values: np.ndarray
    L: int
    alpha: int

    def ridge(self) -> np.ndarray:
        return self.values.max(axis=0)

    def fit_ridge(self, first_level: int = 1) -> tuple[float, float]:
        """Least-squares (slope, intercept) of log ridge against log level."""
        ridge = self.ridge()
        k = np.arange(1, self.alpha + 1)
        keep = (k >= first_level) & (ridge > 0)
        if keep.sum() < 2:
            raise ValueError("need at least two nonzero ridge points to fit")
        slope, icpt = np.polyfit(np.log(k[keep]), np.log(ridge[keep]), 1)
        return float(slope), float(icpt)

    def level1_outlier(self, tol: float = 1.0) -> bool:
        """True when level 1 sits more than ``tol`` (natural-log units) off the fit through levels >= 2."""
        if self.alpha < 3:
            return False
        ridge = self.ridge()
        if ridge[0] <= 0:
            return True
        slope, icpt = self.fit_ridge(2)
        return abs(math.log(ridge[0]) - icpt) > tol

    def fitted_alpha_P(self, first_level: int = 1) -> float:
        """eta scales as lambda^2, so the level exponent is -slope/2."""
        return -self.fit_ridge(first_level)[0] / 2


def eta_surface(t: TranslationInvariantRbm, beta1: float = BETA1) -> EtaSurface:
    L = t.L
    if L % 2 == 0:
        raise ValueError("eta is defined at the centre node (L+1)/2, which needs odd L")
    jc = (L + 1) // 2
    d = (np.arange(1, L + 1) - jc) % L
    W = t.filters[:, d].T  # (L, alpha): W[j-1, level-1] at the centre node
    return EtaSurface(W.real ** 2 + beta1 ** 2 * W.imag ** 2, L, t.alpha)


# ---------------------------------------------------------------- presets

@dataclass(frozen=True)
class Preset:
    name: str
    profile: DecayProfile
    L: int
    alpha: int
    construction: str  # "lrfd", "perturbed" or "kron"
    citation: str
    extra: dict = field(default_factory=dict)


def fig2_profile(level: LevelDecay) -> DecayProfile:
    return DecayProfile(level, OrbitalDecay("power", delta_Q=0.1, alpha_Q=3.0), 1 + 1j, 1 + 1j, 0.0)


def fig3_profile(alpha_Q: float = 0.5) -> DecayProfile:
    return DecayProfile(LevelDecay("power", alpha_P=3.5),
                        OrbitalDecay("power", delta_Q=0.2, alpha_Q=alpha_Q), 1.0, 0.0, 0.0)


def fig5_level(delta_P: float) -> LevelDecay:
    # delta_P^(1-k) = delta_P * delta_P^-k
    return LevelDecay("exponential", delta_P=delta_P, prefactor=delta_P)


def fig5_profile(delta_P: float = 1.5, mu0: float = 0.1) -> DecayProfile:
    return DecayProfile(fig5_level(delta_P), OrbitalDecay("constant", mu0=mu0), 1.0, 1.0, 0.0)


PRESETS = {
    "fig1b": Preset(
        "fig1b",
        DecayProfile(LevelDecay("power", alpha_P=0.75),
                     OrbitalDecay("power", delta_Q=0.5, alpha_Q=1.5), 1 + 1j, 0.0, 0.0),
        L=11, alpha=20, construction="lrfd",
        citation="Fig. 1b: lambda=k^-0.75, mu(0)=delta_Q=0.5, mu(r)=delta_Q/2 r^-1.5, c_w=1+i, c_b=0, a0=0, L=11"),
    "fig2a": Preset(
        "fig2a", fig2_profile(LevelDecay("exponential", delta_P=1.5, prefactor=0.2 * 1.5)),
        L=11, alpha=60, construction="perturbed",
        citation="Fig. 2a: cluster state + LRFD perturbation, lambda=0.2*1.5^-(k-1), mu(0)=delta_Q=0.1, alpha_Q=3, c_w=c_b=1+i, a0=0, L=11"),
    "fig2b": Preset(
        "fig2b", fig2_profile(LevelDecay("power", alpha_P=3.0)),
        L=11, alpha=60, construction="perturbed",
        citation="Fig. 2b: cluster state + LRFD perturbation, lambda=k^-3, mu(0)=delta_Q=0.1, alpha_Q=3, c_w=c_b=1+i, a0=0, L=11"),
    "fig3": Preset(
        "fig3", fig3_profile(0.5), L=22, alpha=5, construction="lrfd",
        citation="Fig. 3: lambda=k^-3.5, mu(0)=delta_Q=0.2, mu(r)=delta_Q/2 r^-alpha_Q, c_w=1, c_b=0, a0=0, L=22, Nh=5L",
        extra={"alpha_Q": [0.5, 1.0, 2.0]}),
    "fig5": Preset(
        "fig5", fig5_profile(1.5), L=13, alpha=400, construction="kron",
        citation="Fig. 5: mu(r)=mu0=0.1, c_w=c_b=1, a0=0, lambda=delta_P^(1-k), L=13",
        extra={"delta_P": [3.0, 2.0, 1.5, 1.2, 1.1]}),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------- profile files

def profile_from_dict(d: dict) -> DecayProfile:
    try:
        lam_d = dict(d["lambda"])
        mu_d = dict(d["mu"])
        lam = LevelDecay(**lam_d)
        mu = OrbitalDecay(**mu_d)
        return DecayProfile(lam, mu, _cplx(d.get("c_w", 1.0)), _cplx(d.get("c_b", 0.0)), _cplx(d.get("a0", 0.0)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed profile: {exc}") from exc


def profile_to_dict(p: DecayProfile) -> dict:
    def strip(obj):
        return {k: v for k, v in obj.__dict__.items() if v is not None}

    lam = strip(p.lam)
    if "table" in lam:
        lam["table"] = list(lam["table"])
    mu = strip(p.mu)
    if "table" in mu:
        mu["table"] = list(mu["table"])
    return {"lambda": lam, "mu": mu, "c_w": [p.c_w.real, p.c_w.imag],
            "c_b": [p.c_b.real, p.c_b.imag], "a0": [p.a0.real, p.a0.imag]}


def load_profile(path) -> DecayProfile:
    path = Path(path)
    text = path.read_text()
    try:
        d = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return profile_from_dict(d)


def save_profile(p: DecayProfile, path) -> None:
    Path(path).write_text(json.dumps(profile_to_dict(p), indent=2))
