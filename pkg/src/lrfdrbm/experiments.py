"""Figure-data experiments.

Each ``run_*`` function returns a :class:`Table` (or a dict of them) that
the CLI writes as CSV with a JSON metadata sidecar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bounds
from .errors import ConfigError
from .exact import (HamiltonianSpec, corr_z_stream, error_expectation, error_l2, expectation,
                    ground_state, truncation_states)
from .lrfd import (build_kron_delta, build_lrfd, certify_beta3, eta_surface, fig3_profile,
                   fig5_level, get_preset, kron_ratio_exact, kron_ratio_lower_bound,
                   perturbed_cluster_ti)
from .rbm import TranslationInvariantRbm, canonicalize_levels, expand, load_params, save_params
from .spinspace import PauliString, spins_of
from .vmc import VmcConfig, train

PROXY_LEVELS = 60


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _pauli_pair(L: int, op: str) -> PauliString:
    return PauliString.on_sites(L, {1: op, 2: op})


# ---------------------------------------------------------------- Fig. 2a/2b

def run_trunc_sweep(preset: str, L: int = 11, Nh_max: Optional[int] = None,
                    proxy_levels: int = PROXY_LEVELS) -> Table:
    """Exact and bounded truncation errors of a perturbed cluster state.

    The untruncated state is approximated by ``proxy_levels`` perturbation
    levels; ``proxy_bound_l2``/``proxy_bound_exp`` give the Lemma bound on
    that approximation, which the dominance check adds to its tolerance.
    Hidden-node counts include the cluster level, so the profile offset is 1.
    """
    if preset not in ("fig2a", "fig2b"):
        raise ConfigError("trunc-sweep presets are fig2a and fig2b")
    profile = get_preset(preset).profile
    Nh_max = 20 * L if Nh_max is None else Nh_max
    ks = 1
    nt = bounds.n_theta(profile, L, ks)
    n_full = proxy_levels + ks
    x_proxy = bounds.x_value(profile, L, n_full, ks)
    meta = {"preset": preset, "L": L, "Nh_max": Nh_max, "proxy_levels": proxy_levels,
            "ks": ks, "n_theta": nt, "proxy_x": x_proxy,
            "proxy_bound_l2": bounds.F1(x_proxy), "proxy_bound_exp": bounds.F2(x_proxy)}
    cols = ["Nh", "exact_l2", "bound_l2", "exact_CZ", "exact_CX", "bound_exp"]
    levels = list(range(nt + 1, min(Nh_max // L, n_full - 1) + 1))
    if not levels:
        meta["status"] = f"Nh_max below the smallest admissible Nh = {(nt + 1) * L}"
        return Table(cols, [], meta)
    ti = perturbed_cluster_ti(L, profile, proxy_levels)
    states = truncation_states(ti, levels + [n_full])
    full = states[n_full]
    zz, xx = _pauli_pair(L, "z"), _pauli_pair(L, "x")
    rows = []
    for n in levels:
        b1, b2 = bounds.truncation_error_bounds(profile, L, n * L, ks)
        rows.append([n * L, error_l2(full, states[n]), b1,
                     error_expectation(full, states[n], zz),
                     error_expectation(full, states[n], xx), b2])
    meta["status"] = "ok"
    return Table(cols, rows, meta)


# ---------------------------------------------------------------- Fig. 2d

def exact_nh_star(profile, L: int, eps_list: Sequence[float], ks: int = 1,
                  proxy_levels: int = PROXY_LEVELS) -> dict:
    """Smallest Nh whose exact first-type error against the proxy is <= eps."""
    n_full = proxy_levels + ks
    ti = perturbed_cluster_ti(L, profile, proxy_levels)
    states = truncation_states(ti, list(range(1, n_full + 1)))
    errs = [error_l2(states[n_full], states[n]) for n in range(1, n_full)]
    out = {}
    for eps in eps_list:
        n = next((i + 1 for i, e in enumerate(errs) if e <= eps), None)
        out[eps] = None if n is None else n * L
    return out


def run_nh_scaling(eps_list: Sequence[float] = (1e-7, 1e-10), L_range: Sequence[int] = range(5, 16),
                   preset: str = "fig2b", exact_search: bool = True) -> Table:
    profile = get_preset(preset).profile
    ks = 1
    cols = ["L", "eps", "Nh_star_exact_search", "Nh_star_bound_exact_F", "Nh_star_bound_leading"]
    rows = []
    for L in L_range:
        ex = exact_nh_star(profile, L, eps_list, ks) if exact_search else {e: None for e in eps_list}
        for eps in eps_list:
            rows.append([L, eps, ex[eps],
                         bounds.nh_star_bound(profile, L, eps, "l2", ks),
                         bounds.nh_star_bound(profile, L, eps, "l2", ks, leading=True)])
    return Table(cols, rows, {"preset": preset, "ks": ks, "proxy_levels": PROXY_LEVELS,
                              "search": "linear scan over level counts"})


# ---------------------------------------------------------------- Fig. 3

def run_correlations(alpha_Q_list: Sequence[float] = (0.5, 1.0, 2.0),
                     L_list: Sequence[int] = (22,), alpha: int = 5) -> Table:
    """Exact z correlations and their normalized leading-order estimate."""
    cols = ["alpha_Q", "L", "r", "corr_exact", "corr_leading"]
    rows = []
    for aq in alpha_Q_list:
        for L in L_list:
            t = build_lrfd(fig3_profile(aq), L, alpha)
            rs = list(range(L // 2 + 1))
            exact_c, norm = corr_z_stream(t, rs, return_norm=True)
            p = expand(t)
            for r in rs:
                lead = 1.0 if r == 0 else (2 * np.sum(p.W[0] * p.W[r]).real
                                          + 4 * p.a[0].real * p.a[r].real) / norm
                rows.append([aq, L, r, exact_c[r], float(lead)])
    return Table(cols, rows, {"preset": "fig3", "alpha": alpha})


# ---------------------------------------------------------------- Fig. 1b / 4

def run_eta(source: str = "fig1b", alpha: Optional[int] = None) -> dict:
    """eta grid, ridge and fitted slope for a preset or a saved checkpoint."""
    if source in ("fig1b",):
        pre = get_preset(source)
        t = build_lrfd(pre.profile, pre.L, alpha or pre.alpha)
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"eta source {source!r} is neither a preset nor a file")
        t = load_params(path)
        if not isinstance(t, TranslationInvariantRbm):
            raise ConfigError("eta needs a translation-invariant parameter file")
        t = canonicalize_levels(t)
    eta = eta_surface(t)
    grid = Table(["j", "k", "eta"], [[j + 1, k + 1, float(eta.values[j, k])]
                                      for k in range(eta.alpha) for j in range(eta.L)])
    ridge = eta.ridge()
    ridge_t = Table(["k", "max_eta"], [[k + 1, float(v)] for k, v in enumerate(ridge)])
    slope, icpt = eta.fit_ridge()
    ridge_t.meta = {"slope": slope, "intercept": icpt, "fitted_alpha_P": -slope / 2}
    return {"eta": grid, "ridge": ridge_t}


# ---------------------------------------------------------------- Fig. 5

def kron_levels(delta_P: float, rel: float = 1e-17) -> int:
    """Level count after which lambda = delta_P^(1-k) is below ``rel``."""
    return int(math.ceil(math.log(1 / rel) / math.log(delta_P))) + 1


def run_kron(delta_P_list: Sequence[float] = (3.0, 2.0, 1.5, 1.2, 1.1), L: int = 13,
             mu0: float = 0.1) -> dict:
    """Sorted |psi|^2 spectra and the peak ratio with its certified lower bound."""
    beta3 = certify_beta3(0.5)
    spec = Table(["delta_P", "rank", "prob"])
    inset = Table(["delta_P", "inv_delta_P", "ratio_sq_exact", "ratio_sq_closed_form",
                   "lower_bound_sq", "levels"])
    for dp in delta_P_list:
        lam = fig5_level(dp)
        alpha = kron_levels(dp)
        t = build_kron_delta(L, mu0, lam, alpha)
        state = truncation_states(t, [alpha])[alpha]
        prob = np.sort(state.probabilities())[::-1]
        spec.rows.extend([dp, i + 1, float(v)] for i, v in enumerate(prob))
        amps = np.abs(state.amplitudes)
        full = (1 << L) - 1
        sigma1 = full ^ (1 << (L - 1))  # last spin flipped
        ratio_sq = float((amps[full] / amps[sigma1]) ** 2)
        lb = kron_ratio_lower_bound(L, mu0, lam, beta3=beta3, alpha=alpha)
        inset.rows.append([dp, 1 / dp, ratio_sq, kron_ratio_exact(L, mu0, lam, alpha) ** 2,
                           lb ** 2, alpha])
    inset.meta = {"beta3": beta3, "x0": 0.5, "mu0": mu0, "L": L}
    spec.meta = {"mu0": mu0, "L": L}
    return {"spectrum": spec, "ratio": inset}


# ---------------------------------------------------------------- training / Fig. 6b

def run_train(h: HamiltonianSpec, alpha: int, config: VmcConfig, out_dir=None) -> dict:
    """Train, then compare each level truncation of the result against Lanczos."""
    ckpt = None
    if out_dir is not None:
        ckpt = Path(out_dir) / "checkpoints"
        ckpt.mkdir(parents=True, exist_ok=True)
    res = train(h, alpha, config, checkpoint_dir=ckpt)
    gs = ground_state(h, seed=config.seed)
    trace = Table(["iter", "mean", "stderr", "acceptance"],
                  [[i + 1, m, s, a] for i, ((m, s), a) in enumerate(zip(res.energy_trace, res.acceptance))])
    errs = Table(["levels", "Nh", "err_zz", "err_xx"])
    if alpha >= 1:
        canon = canonicalize_levels(res.final_params)
        states = truncation_states(canon, list(range(1, alpha + 1)))
        zz, xx = _pauli_pair(h.L, "z"), _pauli_pair(h.L, "x")
        ez, ex = expectation(gs.state, zz), expectation(gs.state, xx)
        for n in range(1, alpha + 1):
            errs.rows.append([n, n * h.L, abs(expectation(states[n], zz) - ez),
                              abs(expectation(states[n], xx) - ex)])
    if out_dir is not None:
        save_params(res.final_params, Path(out_dir) / "final_params.json")
    summary = {"lanczos_energy": gs.energy, "final_energy": res.final_energy,
               "relative_error": abs(res.final_energy - gs.energy) / abs(gs.energy),
               "fitted_alpha_P": res.fitted_alpha_P, "fitted_alpha_P_from_level2": res.fitted_alpha_P_from2}
    trace.meta = summary
    return {"trace": trace, "truncation_errors": errs, "result": res, "summary": summary}
