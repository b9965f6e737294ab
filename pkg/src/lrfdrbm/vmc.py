"""Variational Monte Carlo for translation-invariant RBMs.

Single-flip Metropolis sampling of |psi|^2 (numba kernel), vectorized local
energies and log-derivatives, and stochastic reconfiguration updates.
"""
from __future__ import annotations

import csv
import json
import cmath
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numba
import numpy as np
import scipy.linalg

from .errors import ConditioningError, ConfigError, DivergenceError, SamplingError
from .exact import HamiltonianSpec, build_state, energy as exact_energy
from .lrfd import EtaSurface, eta_surface
from .rbm import (RbmParams, TranslationInvariantRbm, canonicalize_levels, expand, log_cosh,
                  save_params)
from .spinspace import SpinConfig, spins_of

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


@dataclass
class VmcConfig:
    n_chains: int = 16
    sweeps_per_sample: int = 1
    n_samples: int = 4000
    burn_in: int = 20
    learning_rate: float = 0.05
    lr_decay_start: int = 100
    sr_shift: float = 0.01
    sr_shift_min: float = 1e-4
    sr_shift_decay: float = 0.98
    n_iterations: int = 500
    seed: int = 0
    init_scale: float = 0.01
    checkpoint_every: int = 0
    # "joint" trains all levels together; "grow" adds one level per stage,
    # splitting n_iterations evenly and restarting the step-size schedule
    schedule: str = "joint"

    def __post_init__(self):
        for name in ("n_chains", "sweeps_per_sample", "n_samples"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.burn_in < 0 or self.n_iterations < 0:
            raise ConfigError("burn_in and n_iterations must be nonnegative")
        if not (self.learning_rate > 0 and self.sr_shift > 0 and self.sr_shift_min > 0):
            raise ConfigError("learning rate and SR shift must be positive")
        if self.schedule not in ("joint", "grow"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.n_samples < self.n_chains:
            raise ConfigError("need at least one sample per chain")

    def gamma(self, it: int) -> float:
        """Learning rate at 1-based iteration ``it``: constant, then 1/sqrt decay."""
        if it <= self.lr_decay_start:
            return self.learning_rate
        return self.learning_rate * math.sqrt(self.lr_decay_start / it)

    def shift(self, it: int) -> float:
        return max(self.sr_shift_min, self.sr_shift * self.sr_shift_decay ** (it - 1))

    @classmethod
    def from_dict(cls, d: dict) -> "VmcConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown VMC config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------- local quantities

def _theta(p: RbmParams, spins: np.ndarray) -> np.ndarray:
    return p.b + spins @ p.W


def local_energies(p, spins: np.ndarray, h: HamiltonianSpec) -> np.ndarray:
    """E_loc for an (n, L) batch of +-1 spins."""
    if isinstance(p, TranslationInvariantRbm):
        p = expand(p)
    spins = np.asarray(spins, dtype=float)
    if spins.shape[1] != h.L or p.L != h.L:
        raise ValueError("spin batch, RBM and Hamiltonian disagree on L")
    bits = ((spins > 0).astype(np.int64) << np.arange(h.L)).sum(axis=1)
    theta = _theta(p, spins)
    base = log_cosh(theta)
    if np.any(np.isneginf(base.real)):
        raise SamplingError("local energy requested at a zero-amplitude configuration")
    e = h.diagonal(spins).astype(complex)
    for term in h.off_diagonal_terms():
        w = term.weights(bits)
        if not np.any(w):
            continue
        flipped = [j for j in range(h.L) if term.flip_mask >> j & 1]
        dtheta = -2.0 * spins[:, flipped] @ p.W[flipped]
        dvis = -2.0 * spins[:, flipped] @ p.a[flipped]
        logr = dvis + np.sum(log_cosh(theta + dtheta) - base, axis=1)
        ratio = np.where(np.isneginf(logr.real), 0, np.exp(np.where(np.isneginf(logr.real), 0, logr)))
        e += term.coef * w * ratio
    return e


def local_energy(p, s: SpinConfig, h: HamiltonianSpec) -> complex:
    return complex(local_energies(p, s.spins()[None, :], h)[0])


def _term_arrays(h: HamiltonianSpec):
    """Pack the Hamiltonian's bond table into arrays for the compiled kernel."""
    diag = np.array(h.diagonal_bonds(), dtype=float).reshape(-1, 3)
    terms = h.off_diagonal_terms()
    T = len(terms)
    flips = -np.ones((T, 2), dtype=np.int64)
    zs = -np.ones((T, 2), dtype=np.int64)
    conds = -np.ones((T, 2), dtype=np.int64)
    coefs = np.zeros(T)
    for i, term in enumerate(terms):
        f = [j for j in range(h.L) if term.flip_mask >> j & 1]
        z = [j for j in range(h.L) if term.zmask >> j & 1]
        if len(f) > 2 or len(z) > 2:
            raise ValueError("kernel supports at most two flipped and two z sites per term")
        flips[i, :len(f)] = f
        zs[i, :len(z)] = z
        if term.cond_pair is not None:
            conds[i] = term.cond_pair
        coefs[i] = term.coef
    return diag, flips, zs, conds, coefs


@numba.njit(cache=True)
def _local_energy_kernel(spins, W, b, a, diag, flips, zs, conds, coefs):
    # cosh(theta + d) / cosh(theta) = cosh d + tanh(theta) sinh d, with
    # d = -2 s_j W_jk; cosh and sinh of 2W are shared by all samples
    n, L = spins.shape
    Nh = W.shape[1]
    C = np.cosh(2.0 * W)
    S = np.sinh(2.0 * W)
    out = np.zeros(n, dtype=np.complex128)
    tanh_t = np.empty(Nh, dtype=np.complex128)
    for i in range(n):
        e = 0.0 + 0.0j
        for q in range(diag.shape[0]):
            e += diag[q, 2] * spins[i, int(diag[q, 0])] * spins[i, int(diag[q, 1])]
        for k in range(Nh):
            th = b[k]
            for j in range(L):
                th += spins[i, j] * W[j, k]
            tanh_t[k] = cmath.tanh(th)
        for q in range(coefs.shape[0]):
            if conds[q, 0] >= 0 and spins[i, conds[q, 0]] == spins[i, conds[q, 1]]:
                continue
            w = 1.0
            for m in range(2):
                if zs[q, m] >= 0:
                    w *= spins[i, zs[q, m]]
            j1 = flips[q, 0]
            j2 = flips[q, 1]
            vis = -2.0 * spins[i, j1] * a[j1]
            if j2 >= 0:
                vis -= 2.0 * spins[i, j2] * a[j2]
            r = cmath.exp(vis)
            s1 = spins[i, j1]
            for k in range(Nh):
                ch = C[j1, k]
                sh = -s1 * S[j1, k]
                if j2 >= 0:
                    c2 = C[j2, k]
                    s2 = -spins[i, j2] * S[j2, k]
                    ch, sh = ch * c2 + sh * s2, sh * c2 + ch * s2
                r *= ch + tanh_t[k] * sh
            e += coefs[q] * w * r
        out[i] = e
    return out


def local_energies_fast(p: RbmParams, spins: np.ndarray, h: HamiltonianSpec) -> np.ndarray:
    """Compiled equivalent of :func:`local_energies` (same bond table)."""
    spins = np.ascontiguousarray(spins, dtype=float)
    if np.any(np.isneginf(log_cosh(_theta(p, spins)).real)):
        raise SamplingError("local energy requested at a zero-amplitude configuration")
    return _local_energy_kernel(spins, np.ascontiguousarray(p.W), np.ascontiguousarray(p.b),
                                np.ascontiguousarray(p.a), *_term_arrays(h))


def _offset_index(L: int) -> np.ndarray:
    # site index (jc + d) mod L as [d, jc]
    return (np.arange(L)[:, None] + np.arange(L)[None, :]) % L


def log_derivatives_batch(t: TranslationInvariantRbm, spins: np.ndarray) -> np.ndarray:
    """d log psi / d(parameter vector) for an (n, L) batch -> (n, n_params)."""
    spins = np.asarray(spins, dtype=float)
    n, L = spins.shape
    if L != t.L:
        raise ValueError("spin batch does not match the RBM size")
    p = expand(t)
    th = np.tanh(_theta(p, spins)).reshape(n, t.alpha, L)  # node (level, jc)
    o_a = spins.sum(axis=1)[:, None].astype(complex)
    o_b = th.sum(axis=2)
    sig = spins[:, _offset_index(L)]  # (n, d, jc)
    o_f = np.einsum("ndc,nlc->nld", sig, th).reshape(n, t.alpha * L)
    return np.concatenate([o_a, o_b, o_f], axis=1)


def log_derivatives(t: TranslationInvariantRbm, s: SpinConfig) -> np.ndarray:
    return log_derivatives_batch(t, s.spins()[None, :])[0]


def sr_update(O: np.ndarray, E: np.ndarray, gamma: float, lambda_reg: float) -> np.ndarray:
    """Stochastic-reconfiguration step -gamma (S + lambda diag S)^-1 F.

    ``O`` is (n_samples, n_params) of log-derivatives and ``E`` the matching
    local energies.
    """
    O = np.asarray(O, dtype=complex)
    E = np.asarray(E, dtype=complex)
    if O.ndim != 2 or O.shape[0] < 2 or E.shape != (O.shape[0],):
        raise ValueError("sr_update needs at least two samples with matching energies")
    Om = O.mean(axis=0)
    dO = O - Om
    S = dO.conj().T @ dO / O.shape[0]
    F = dO.conj().T @ (E - E.mean()) / O.shape[0]
    if not np.any(F):
        return np.zeros(O.shape[1], dtype=complex)
    A = S + lambda_reg * np.diag(np.diag(S))
    try:
        x = scipy.linalg.solve(A, F, assume_a="her")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ConditioningError(f"regularized S is singular: {exc}",
                                spectrum=np.linalg.eigvalsh(A)) from exc
    if not np.all(np.isfinite(x)):
        raise ConditioningError("SR solve produced non-finite values", spectrum=np.linalg.eigvalsh(A))
    return -gamma * x


# ---------------------------------------------------------------- sampler

@numba.njit(cache=True)
def _metropolis(W, b, a_re, spins, sites, us, burn, every, n_record):
    # |psi'/psi|^2 = exp(-4 Re(a_j) s) prod_k |cosh d + tanh(theta_k) sinh d|^2
    L, Nh = W.shape
    C = np.cosh(2.0 * W)
    S = np.sinh(2.0 * W)
    theta = b.copy()
    for j in range(L):
        for k in range(Nh):
            theta[k] += spins[j] * W[j, k]
    tanh_t = np.tanh(theta)
    out = np.empty((n_record, L), dtype=np.int8)
    accepted = 0
    rec = 0
    total = burn + every * n_record
    for t in range(total):
        j = sites[t]
        s = spins[j]
        p = math.exp(-4.0 * a_re[j] * s)
        for k in range(Nh):
            f = C[j, k] - s * S[j, k] * tanh_t[k]
            p *= f.real * f.real + f.imag * f.imag
        if us[t] < p:
            accepted += 1
            for k in range(Nh):
                theta[k] -= 2.0 * s * W[j, k]
                tanh_t[k] = cmath.tanh(theta[k])
            spins[j] = -s
        if t >= burn and (t - burn + 1) % every == 0:
            for i in range(L):
                out[rec, i] = spins[i]
            rec += 1
    return out, accepted


class ChainSet:
    """Independent Metropolis chains with per-chain random substreams."""

    def __init__(self, L: int, n_chains: int, seed: int):
        self.L = L
        ss = np.random.SeedSequence(seed)
        self.rngs = [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(n_chains)]
        self.spins = [rng.choice(np.array([-1, 1], dtype=np.int8), size=L) for rng in self.rngs]

    def _fix_start(self, p: RbmParams, c: int, max_tries: int = 100) -> None:
        for _ in range(max_tries):
            lc = log_cosh(_theta(p, self.spins[c].astype(float)[None, :]))
            if not np.any(np.isneginf(lc.real)):
                return
            self.spins[c] = self.rngs[c].choice(np.array([-1, 1], dtype=np.int8), size=self.L)
        raise SamplingError("could not find a nonzero-amplitude starting configuration")

    def sample(self, p: RbmParams, per_chain: int, sweeps_per_sample: int, burn_sweeps: int):
        """Returns (spins (n_chains * per_chain, L), acceptance rate)."""
        L = self.L
        burn, every = burn_sweeps * L, sweeps_per_sample * L
        total = burn + every * per_chain
        W = np.ascontiguousarray(p.W)
        b = np.ascontiguousarray(p.b)
        a_re = np.ascontiguousarray(p.a.real)
        batches, acc = [], 0
        for c, rng in enumerate(self.rngs):
            self._fix_start(p, c)
            sites = rng.integers(0, L, size=total)
            us = rng.random(size=total)
            out, a = _metropolis(W, b, a_re, self.spins[c], sites, us, burn, every, per_chain)
            batches.append(out)
            acc += a
        return np.concatenate(batches).astype(float), acc / (total * len(self.rngs))


def metropolis_chain(t, h: HamiltonianSpec, config: VmcConfig, chain: int = 0):
    """Stream (SpinConfig, E_loc, O vector) samples from one chain, one per call of next()."""
    p = expand(t) if isinstance(t, TranslationInvariantRbm) else t
    chains = ChainSet(p.L, config.n_chains, config.seed)
    chains.rngs = [chains.rngs[chain]]
    chains.spins = [chains.spins[chain]]
    burn = config.burn_in
    while True:
        spins, _ = chains.sample(p, 1, config.sweeps_per_sample, burn)
        burn = 0
        s = spins[0]
        bits = int(((s > 0).astype(np.int64) << np.arange(p.L)).sum())
        e = local_energies(p, spins, h)[0]
        o = log_derivatives_batch(t, spins)[0] if isinstance(t, TranslationInvariantRbm) else None
        yield SpinConfig(bits, p.L), complex(e), o


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    final_params: TranslationInvariantRbm
    energy_trace: list = field(default_factory=list)  # (mean, stderr)
    acceptance: list = field(default_factory=list)
    eta: Optional[EtaSurface] = None
    fitted_alpha_P: Optional[float] = None
    fitted_alpha_P_from2: Optional[float] = None
    fitted_alpha_P_all: Optional[float] = None
    energy_exact: Optional[float] = None

    @property
    def final_energy(self) -> float:
        """Exact variational energy when available, else the last sampled mean."""
        if self.energy_exact is not None:
            return self.energy_exact
        return self.energy_trace[-1][0]

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "mean", "stderr", "acceptance"])
            for i, ((m, s), a) in enumerate(zip(self.energy_trace, self.acceptance), 1):
                w.writerow([i, repr(float(m)), repr(float(s)), repr(float(a))])


def initial_params(L: int, alpha: int, config: VmcConfig) -> TranslationInvariantRbm:
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(config.n_chains + 1)[-1])
    n = 1 + alpha * (L + 1)
    vec = config.init_scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return TranslationInvariantRbm.from_vector(L, alpha, vec)


def _block_stderr(E: np.ndarray, n_chains: int) -> float:
    means = E.reshape(n_chains, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(n_chains)) if n_chains > 1 else float(E.std() / math.sqrt(E.size))


def _optimize(h, t, config, chains, result, checkpoint_dir, n_iterations, it0=0):
    L, alpha = t.L, t.alpha
    per_chain = -(-config.n_samples // config.n_chains)
    vec = t.to_vector()
    for it in range(1, n_iterations + 1):
        p = expand(t)
        spins, acc = chains.sample(p, per_chain, config.sweeps_per_sample, config.burn_in)
        E = local_energies_fast(p, spins, h)
        mean = float(E.real.mean())
        if not np.isfinite(mean):
            raise DivergenceError(f"energy diverged at iteration {it0 + it}; "
                                  f"trace so far: {result.energy_trace[-5:]}")
        result.energy_trace.append((mean, _block_stderr(E.real, config.n_chains)))
        result.acceptance.append(acc)
        O = log_derivatives_batch(t, spins)
        vec = vec + sr_update(O, E, config.gamma(it), config.shift(it))
        t = TranslationInvariantRbm.from_vector(L, alpha, vec)
        step = it0 + it
        if checkpoint_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
            save_params(t, Path(checkpoint_dir) / f"checkpoint_{step:06d}.json")
    return t


def _add_level(t: TranslationInvariantRbm, rng, scale: float) -> TranslationInvariantRbm:
    f = scale * (rng.standard_normal(t.L) + 1j * rng.standard_normal(t.L))
    return TranslationInvariantRbm(t.L, t.a0, np.append(t.b_level, 0.0), np.vstack([t.filters, f]))


def train(h: HamiltonianSpec, alpha: int, config: VmcConfig,
          init: Optional[TranslationInvariantRbm] = None,
          checkpoint_dir=None, exact_final: bool = True) -> TrainResult:
    """Optimize a translation-invariant RBM for ``h`` by SR.

    The final energy is the exact variational energy for L <= 16. The eta
    surface and fitted alpha_P are computed after sorting levels by score.
    """
    L = h.L
    chains = ChainSet(L, config.n_chains, config.seed)
    result = TrainResult(init)
    if config.schedule == "grow" and init is None and alpha >= 1:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(config.n_chains + 2)[-1])
        t = initial_params(L, 1, config)
        per_stage = config.n_iterations // alpha
        done = 0
        for m in range(1, alpha + 1):
            if m > 1:
                t = _add_level(t, rng, config.init_scale)
            n_it = per_stage if m < alpha else config.n_iterations - done
            t = _optimize(h, t, config, chains, result, checkpoint_dir, n_it, done)
            done += n_it
    else:
        t = init if init is not None else initial_params(L, alpha, config)
        if t.alpha != alpha or t.L != L:
            raise ConfigError("initial parameters do not match L and alpha")
        t = _optimize(h, t, config, chains, result, checkpoint_dir, config.n_iterations)
    result.final_params = t
    if exact_final and L <= 16:
        result.energy_exact = exact_energy(h, build_state(t))
    if alpha >= 2 and L % 2 == 1:
        canon = canonicalize_levels(t)
        result.eta = eta_surface(canon)
        result.fitted_alpha_P_all = result.eta.fitted_alpha_P(1)
        if alpha >= 3:
            result.fitted_alpha_P_from2 = result.eta.fitted_alpha_P(2)
        result.fitted_alpha_P = result.eta.fitted_alpha_P(2 if result.eta.level1_outlier() else 1)
    return result


# ---------------------------------------------------------------- config files

def load_train_config(path) -> tuple[HamiltonianSpec, int, VmcConfig]:
    """Read ``[hamiltonian]`` (kind, L, Bx, Jz), ``alpha`` and ``[vmc]`` sections."""
    path = Path(path)
    text = path.read_text()
    try:
        d = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return train_config_from_dict(d)


def train_config_from_dict(d: dict) -> tuple[HamiltonianSpec, int, VmcConfig]:
    try:
        h = HamiltonianSpec(**d["hamiltonian"])
        alpha = int(d["alpha"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed training config: {exc}") from exc
    return h, alpha, VmcConfig.from_dict(dict(d.get("vmc", {})))


def train_config_to_dict(h: HamiltonianSpec, alpha: int, config: VmcConfig) -> dict:
    return {"hamiltonian": asdict(h), "alpha": alpha, "vmc": asdict(config)}
