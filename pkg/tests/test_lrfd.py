import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrfdrbm.errors import ConfigError, DivergenceError
from lrfdrbm.exact import build_state, fidelity
from lrfdrbm.lrfd import (DecayProfile, LevelDecay, OrbitalDecay, PRESETS, build_cluster_rbm,
                          build_kron_delta, build_lrfd, build_perturbed_cluster, certify_beta3,
                          cluster_filter_rbm, eta_surface, get_preset, kron_ratio_exact,
                          kron_ratio_lower_bound, load_profile, save_profile)
from lrfdrbm.rbm import RbmParams, TranslationInvariantRbm, expand, log_psi_batch
from lrfdrbm.spinspace import SpinConfig, enumerate_basis


def all_spins(L):
    return np.array([s.spins() for s in enumerate_basis(L)], dtype=float)


class TestLevelDecay:
    def test_values(self):
        assert LevelDecay("exponential", delta_P=2.0)(3) == 0.125
        assert LevelDecay("power", alpha_P=2.0, prefactor=3.0)(2) == 0.75

    def test_geometric_tail(self):
        lam = LevelDecay("exponential", delta_P=1.5)
        assert abs(lam.sq_tail(0) - 0.8) < 1e-15

    def test_power_tail_vs_sum(self):
        lam = LevelDecay("power", alpha_P=1.5)
        k = np.arange(4, 2_000_001, dtype=float)
        assert abs(lam.sq_tail(3) - (np.sum(k[::-1] ** -3.0) + 1 / (2 * 2_000_000.5 ** 2))) < 1e-13

    def test_divergent(self):
        with pytest.raises(DivergenceError):
            LevelDecay("power", alpha_P=0.5).sq_tail(1)
        with pytest.raises(ConfigError):
            LevelDecay("exponential", delta_P=1.0).validate(3)

    def test_missing_field(self):
        with pytest.raises(ConfigError):
            LevelDecay("power")
        with pytest.raises(ConfigError):
            LevelDecay("gaussian")

    def test_table(self):
        lam = LevelDecay("table", table=[1.0, 0.5])
        assert lam.sq_tail(1) == 0.25 and lam.sq_tail(5) == 0
        with pytest.raises(ConfigError):
            lam(3)


class TestOrbitalDecay:
    def test_power(self):
        mu = OrbitalDecay("power", delta_Q=0.5, alpha_Q=1.5)
        assert mu(0) == 0.5
        assert abs(mu(4) - 0.25 * 4 ** -1.5) < 1e-16

    def test_nonincreasing_required(self):
        with pytest.raises(ConfigError):
            OrbitalDecay("table", table=[0.1, 0.2]).validate(5)


class TestBuildLrfd:
    def test_fig1b_centre_weight(self):
        pre = get_preset("fig1b")
        p = expand(build_lrfd(pre.profile, 11, pre.alpha))
        # first-level node centred on the middle site, weight to that site
        assert p.W[5, 5] == (1 + 1j) * 0.5

    def test_fig3_size(self):
        pre = get_preset("fig3")
        assert pre.L == 22 and expand(build_lrfd(pre.profile, pre.L, pre.alpha)).Nh == 110

    def test_zero_levels_reduce(self):
        prof = DecayProfile(LevelDecay("table", table=[1.0, 0, 0]), OrbitalDecay("power", delta_Q=0.3, alpha_Q=2),
                            0.5 + 0.2j, 0.1, 0)
        spins = all_spins(5)
        full = log_psi_batch(expand(build_lrfd(prof, 5, 3)), spins)
        one = log_psi_batch(expand(build_lrfd(prof, 5, 1)), spins)
        assert np.allclose(full, one)

    def test_bias_larger_than_weight_rejected(self):
        prof = DecayProfile(LevelDecay("power", alpha_P=2), OrbitalDecay("constant", mu0=0.1), 0.1, 1.0)
        with pytest.raises(ConfigError):
            build_lrfd(prof, 5, 2)

    @given(st.floats(0.6, 4.0), st.floats(0.01, 1.0), st.floats(0.1, 3.0), st.integers(3, 15), st.integers(1, 6))
    def test_factorised_structure(self, aP, dQ, aQ, L, alpha):
        prof = DecayProfile(LevelDecay("power", alpha_P=aP), OrbitalDecay("power", delta_Q=dQ, alpha_Q=aQ), 1 + 1j)
        t = build_lrfd(prof, L, alpha)
        lam = prof.lam(np.arange(1, alpha + 1))
        # every filter is a scalar multiple of the orbital profile
        assert np.allclose(t.filters / lam[:, None], t.filters[0] / lam[0])


class TestCluster:
    def test_filter_offsets(self):
        t = cluster_filter_rbm(5)
        assert t.filters[0, 0] == 0.75j * np.pi
        assert t.filters[0, 1] == 0.25j * np.pi
        assert t.filters[0, 4] == 0.5j * np.pi
        assert t.filters[0, 2] == 0 and t.b_level[0] == 0.25j * np.pi

    def test_zero_perturbation_is_cluster(self):
        prof = get_preset("fig2b").profile.with_(c_w=0, c_b=0)
        a = build_state(build_cluster_rbm(7))
        b = build_state(build_perturbed_cluster(7, prof, 3))
        assert fidelity(a, b) > 1 - 1e-13

    def test_perturbed_layout(self):
        p = build_perturbed_cluster(11, get_preset("fig2a").profile, 4)
        assert p.Nh == 55
        assert np.array_equal(p.W[:, :11], build_cluster_rbm(11).W)


class TestKronecker:
    def test_no_levels_is_uniform(self):
        t = build_kron_delta(6, 0.1, LevelDecay("table", table=[]), alpha=0)
        assert np.ptp(log_psi_batch(expand(t), all_spins(6)).real) == 0
        assert kron_ratio_exact(6, 0.1, [], alpha=0) == 1

    def test_closed_form_matches_amplitudes(self):
        lam = LevelDecay("exponential", delta_P=1.5, prefactor=1.5)
        t = build_kron_delta(7, 0.1, lam, alpha=30)
        p = expand(t)
        s0 = SpinConfig.all_up(7)
        lp = log_psi_batch(p, np.array([s0.spins(), s0.flip(7).spins()], dtype=float))
        assert abs(math.exp(lp[0].real - lp[1].real) - kron_ratio_exact(7, 0.1, lam, alpha=30)) < 1e-10

    def test_peak_at_all_up(self):
        t = build_kron_delta(6, 0.1, LevelDecay("exponential", delta_P=1.2, prefactor=1.2), alpha=40)
        lp = log_psi_batch(expand(t), all_spins(6)).real
        assert np.argmax(lp) == 63

    def test_empty_tail_bound_is_one(self):
        assert kron_ratio_lower_bound(8, 0.1, [1.0, 0.5, 0.0, 0.0], k0=2) == 1.0

    def test_geometric_tail_closed_form(self):
        lam = LevelDecay("exponential", delta_P=2.0)
        L, mu0, k0 = 9, 0.1, 1
        beta3 = certify_beta3()
        tail = 0.25 ** (k0 + 1) / (1 - 0.25)
        ref = math.exp(2 * beta3 * L * (L - 1) * mu0 ** 2 * tail)
        assert abs(kron_ratio_lower_bound(L, mu0, lam, k0=k0, beta3=beta3) - ref) < 1e-14 * ref

    def test_beta3_inequality(self):
        beta3 = certify_beta3(0.5)
        assert 0.8 < beta3 < 0.9
        x = np.linspace(1e-3, 0.5, 200)
        dx = 0.7 * x
        assert np.all(np.log(np.cosh(x + dx) / np.cosh(x)) >= beta3 * x * dx)

    @given(st.sampled_from([3.0, 2.0, 1.5, 1.2]), st.integers(4, 13))
    def test_exact_ratio_dominates_bound(self, dP, L):
        lam = LevelDecay("exponential", delta_P=dP, prefactor=dP)
        exact = kron_ratio_exact(L, 0.1, lam, alpha=300)
        assert exact >= kron_ratio_lower_bound(L, 0.1, lam, alpha=300)


class TestEta:
    def test_real_filters(self):
        t = TranslationInvariantRbm(5, 0, [0, 0], [[1, 2, 0, 0, 3], [0.5, 0, 0, 0, 0]])
        eta = eta_surface(t)
        assert eta.values[2, 0] == 1  # centre site 3, offset 0
        assert eta.values[3, 0] == 4
        assert eta.values[1, 0] == 9

    def test_even_L_rejected(self):
        with pytest.raises(ValueError):
            eta_surface(TranslationInvariantRbm(4, 0, [0], [[1, 0, 0, 0]]))

    def test_zero_levels(self):
        t = TranslationInvariantRbm(5, 0, [0, 0], [[1, 0, 0, 0, 0], [0, 0, 0, 0, 0]])
        assert np.all(eta_surface(t).values[:, 1] == 0)

    def test_fig1b_ridge_slope(self):
        pre = get_preset("fig1b")
        eta = eta_surface(build_lrfd(pre.profile, pre.L, pre.alpha))
        slope, _ = eta.fit_ridge()
        assert abs(slope + 1.5) < 1e-12
        assert abs(eta.fitted_alpha_P() - 0.75) < 1e-12


class TestPresetsAndFiles:
    def test_all_presets_valid(self):
        for pre in PRESETS.values():
            pre.profile.validate(pre.L, min(pre.alpha, 50))

    def test_unknown(self):
        with pytest.raises(ConfigError):
            get_preset("fig9")

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_profile_roundtrip(self, tmp_path, name):
        prof = PRESETS[name].profile
        save_profile(prof, tmp_path / "p.json")
        assert load_profile(tmp_path / "p.json") == prof

    def test_toml(self, tmp_path):
        (tmp_path / "p.toml").write_text(
            'c_w = [1.0, 1.0]\n[lambda]\nkind = "power"\nalpha_P = 3.0\n[mu]\nkind = "constant"\nmu0 = 0.1\n')
        prof = load_profile(tmp_path / "p.toml")
        assert prof.c_w == 1 + 1j and prof.lam.alpha_P == 3.0

    def test_malformed(self, tmp_path):
        (tmp_path / "p.json").write_text('{"lambda": {"kind": "power"}}')
        with pytest.raises(ConfigError):
            load_profile(tmp_path / "p.json")
