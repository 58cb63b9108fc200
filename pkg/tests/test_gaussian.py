"""Gaussian-mode calculus: covariances, functionals, optimization, conductivity."""

import math

import numpy as np
import pytest

from ldchain import ConfigError, ScgfBasinError, riccati
from ldchain.gaussian import (GaussianMeasureSpec, ModeParams, ValidityWarning, K_tau,
                              conductivity_kappa, entropy_production, functional_F,
                              mean_current_gaussian, mode_covariances, omega_k_sq,
                              optimal_mode_coeffs_small_lambda, optimize_scgf,
                              reference_measure, scaled_limit_F, single_oscillator_I,
                              single_oscillator_K, single_oscillator_K_variational,
                              single_oscillator_s, stationary_tilted_params)
from ldchain.gaussian import _mode_coeffs, _mode_grad_hess, _mode_objective

from conftest import covariance_from_spec, dft_matrix, dv_rate_quadratic, signed_mode_arrays


def make_spec(n=5, temperature=1.0, omega0=1.0, omega=1.0, gamma=1.0, entries=()):
    modes = [ModeParams(k=0)]
    by_k = {k: v for k, v in entries}
    for k in range(1, n // 2 + 1):
        a, b, c = by_k.get(k, (0.0, 0.0, 0.0))
        modes.append(ModeParams(k=k, a=a, b=b, c=c))
    if 0 in by_k:
        a0, b0, c0 = by_k[0]
        modes[0] = ModeParams(k=0, a=a0, b=b0, c=c0)
    return GaussianMeasureSpec(n, temperature, omega0, omega, gamma, tuple(modes))


def random_spec(rng, n=5, scale=0.08, temperature=1.0):
    while True:
        entries = [(k, (scale * rng.standard_normal(), scale * rng.standard_normal(),
                        scale * rng.standard_normal())) for k in range(1, n // 2 + 1)]
        entries.append((0, (0.0, scale * rng.standard_normal(),
                            scale * rng.standard_normal())))
        spec = make_spec(n=n, temperature=temperature, entries=entries)
        try:
            for k in range(n // 2 + 1):
                mode_covariances(spec, k)
        except ConfigError:
            continue
        return spec


def fourier_covariances_from_real(spec, k):
    """Mode second moments computed from the reconstructed real-space covariance."""
    n = spec.n_sites
    sig = covariance_from_spec(spec)
    w = dft_matrix(n)
    km = (-k) % n
    pp = np.einsum("j,l,jl->", w[k], w[k].conj(), sig[n:, n:])
    qq = np.einsum("j,l,jl->", w[k], w[k].conj(), sig[:n, :n])
    sqp = sig[n:, :n]
    pkqmk = np.einsum("j,l,jl->", w[k], w[km], sqp)
    pmkqk = np.einsum("j,l,jl->", w[km], w[k], sqp)
    return (pp.real, qq.real, (1j * (pkqmk - pmkqk)).real, (pkqmk + pmkqk).real)


class TestModeCovariances:
    def test_reference_measure(self):
        spec = reference_measure(5, 1.3, 0.9, 1.1, 1.0)
        for k in range(3):
            cov = mode_covariances(spec, k)
            assert cov["PP"] == pytest.approx(1.3)
            assert cov["QQ"] == pytest.approx(1.3 / omega_k_sq(spec, k=k))
            assert cov["antisym_PQ"] == 0.0 and cov["sym_PQ"] == 0.0

    def test_hand_value(self):
        # N=3, omega0=omega=1 puts the k=1 dispersion exactly at 4
        spec = make_spec(n=3, entries=[(1, (0.0, 0.25, 0.0))])
        assert omega_k_sq(spec, k=1) == pytest.approx(4.0)
        cov = mode_covariances(spec, 1)
        assert cov["QQ"] == pytest.approx((1 / 9) * 1.5, rel=1e-14)
        assert cov["PP"] == pytest.approx((1 / 9) * 1.5 * 4.0, rel=1e-14)

    def test_parity_in_a(self):
        up = make_spec(entries=[(1, (0.3, 0.05, -0.02))])
        dn = make_spec(entries=[(1, (-0.3, 0.05, -0.02))])
        cu, cd = mode_covariances(up, 1), mode_covariances(dn, 1)
        assert cu["PP"] == pytest.approx(cd["PP"])
        assert cu["QQ"] == pytest.approx(cd["QQ"])
        assert cu["antisym_PQ"] == pytest.approx(-cd["antisym_PQ"])

    def test_indefinite_mode_rejected(self):
        spec = make_spec(entries=[(1, (0.0, -0.6, 0.0))])
        with pytest.raises(ConfigError):
            mode_covariances(spec, 1)

    def test_against_quadratic_form_reconstruction(self, rng):
        for n in (3, 5):
            spec = random_spec(rng, n=n, scale=0.1, temperature=1.4)
            for k in range(1, n // 2 + 1):
                pp, qq, antis, sym = fourier_covariances_from_real(spec, k)
                cov = mode_covariances(spec, k)
                assert cov["PP"] == pytest.approx(pp, rel=1e-10)
                assert cov["QQ"] == pytest.approx(qq, rel=1e-10)
                assert cov["antisym_PQ"] == pytest.approx(antis, rel=1e-10, abs=1e-12)
                assert abs(sym) < 1e-12


class TestActivityAndEntropy:
    def test_zero_without_drive_or_c(self):
        spec = make_spec(entries=[(1, (0.2, 0.1, 0.0)), (2, (-0.1, 0.0, 0.0))])
        assert K_tau(spec, 0.0) == 0.0

    def test_pure_k0_mode_closed_form(self):
        b, c = 0.05, 0.04
        spec = make_spec(entries=[(0, (0.0, b, c))])
        w0sq = omega_k_sq(spec, k=0)
        delta = 1.0 / ((1 + 2 * b) ** 2 * w0sq - 4 * c**2 * w0sq)
        expected = 4 * delta * c**2 * w0sq**2 / (1 + 2 * (b + c))
        assert K_tau(spec, 0.0) == pytest.approx(expected, rel=1e-13)

    def test_even_in_tau(self, rng):
        spec = random_spec(rng)
        assert K_tau(spec, 0.37) == pytest.approx(K_tau(spec, -0.37), rel=1e-14)

    def test_signed_sum_oracle(self, rng):
        spec = random_spec(rng, n=7, scale=0.06)
        a, b, c = signed_mode_arrays(spec)
        tau, t, g, w2 = 0.21, spec.temperature, spec.gamma, spec.omega**2
        total_k = 0.0
        total_s = 0.0
        total_j = 0.0
        for k in range(spec.n_sites):
            wk2 = omega_k_sq(spec, k=k)
            s = math.sin(2 * math.pi * k / spec.n_sites)
            delta = 1.0 / ((1 + 2 * b[k]) ** 2 * wk2 - 4 * c[k] ** 2 * wk2 - a[k] ** 2)
            u = 1 + 2 * (b[k] + c[k])
            total_k += delta * u * (tau**2 * w2**2 * s**2 / (4 * t**2)
                                    + 4 * c[k] ** 2 * wk2**2 / u**2) / g
            total_s += g * delta * (a[k] ** 2 * (1 - 2 * (b[k] + c[k]))
                                    + 4 * (b[k] + c[k]) ** 2 * wk2 * (1 + 2 * (b[k] - c[k])))
            total_j += w2 * t * s * a[k] * delta / spec.n_sites
        assert K_tau(spec, tau) == pytest.approx(total_k, rel=1e-12)
        assert entropy_production(spec) == pytest.approx(total_s, rel=1e-12)
        assert mean_current_gaussian(spec) == pytest.approx(total_j, rel=1e-12, abs=1e-15)

    def test_entropy_zero_at_reference(self):
        assert entropy_production(reference_measure(5, 1.0, 1.0, 1.0, 1.0)) == 0.0

    def test_entropy_nonnegative_in_advisory_region(self, rng):
        for _ in range(2000):
            spec = random_spec(rng, n=5, scale=0.12)
            if any(1 - 2 * (m.b + m.c) < 0 for m in spec.modes):
                continue
            assert entropy_production(spec) >= -1e-14

    def test_advisory_warning_outside_region(self):
        spec = make_spec(entries=[(1, (0.0, 0.4, 0.2))])
        with pytest.warns(ValidityWarning):
            entropy_production(spec)

    def test_mean_current_examples(self):
        spec = make_spec(n=3, entries=[(1, (0.1, 0.0, 0.0))])
        delta = 1.0 / (4.0 - 0.01)
        expected = (1 / 3) * 2 * math.sin(2 * math.pi / 3) * 0.1 * delta
        assert mean_current_gaussian(spec) == pytest.approx(expected, rel=1e-13)
        flipped = make_spec(n=3, entries=[(1, (-0.1, 0.0, 0.0))])
        assert mean_current_gaussian(flipped) == pytest.approx(-expected, rel=1e-13)
        assert mean_current_gaussian(reference_measure(3, 1, 1, 1, 1)) == 0.0


class TestFunctional:
    def test_reference_measure_is_stationary_at_equilibrium(self):
        rep = functional_F(reference_measure(5, 1.0, 1.0, 1.0, 1.0), 0.3, 0.0)
        assert rep.I == 0.0 and rep.K == 0.0 and rep.s == 0.0 and rep.F == 0.0

    def test_nonnegative_rate(self, rng):
        for _ in range(2000):
            spec = random_spec(rng, n=5, scale=0.1)
            rep = functional_F(spec, 0.0, 0.0)
            assert rep.I >= -1e-13

    def test_decomposition_convention(self, rng):
        spec = random_spec(rng)
        lam, tau = 0.03, 0.08
        rep = functional_F(spec, lam, tau)
        sigma_mean = (tau * spec.n_sites / spec.temperature**2) * rep.mean_J
        assert rep.I == pytest.approx(0.25 * rep.s + rep.K - 0.5 * sigma_mean, rel=1e-12)
        assert rep.F == pytest.approx(spec.n_sites * lam * rep.mean_J - rep.I, rel=1e-12)

    def test_tilted_measure_is_stationary(self):
        for lam, tau in ((0.0, 0.04), (0.02, 0.0), (0.015, 0.03)):
            spec = stationary_tilted_params(5, 1.2, 1.0, 0.9, 1.1, lam, tau)
            rep = functional_F(spec, 0.0, tau + 2 * lam * 1.2**2)
            assert abs(rep.I) < 1e-15

    def test_rate_matches_independent_quadratic_dv_sup(self, rng):
        # K, s, <J> assemble into the same rate as a direct Donsker-Varadhan
        # computation for the actual linear dynamics
        for tau in (0.0, 0.06):
            sysk = riccati.build_linear_system(5, 1.1, 1.0, 0.9, 1.3, tau)
            spec = random_spec(rng, n=5, scale=0.07, temperature=1.1)
            spec = GaussianMeasureSpec(5, 1.1, 1.0, 0.9, 1.3, spec.modes)
            rep = functional_F(spec, 0.0, tau)
            sigma = covariance_from_spec(spec)
            oracle = dv_rate_quadratic(sysk.a, sysk.d, sigma)
            assert rep.I == pytest.approx(oracle, rel=1e-9, abs=1e-12)


class TestOptimizeScgf:
    def test_zero_tilt(self):
        opt = optimize_scgf(5, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0)
        assert opt.F == 0.0
        assert all(m.a == m.b == m.c == 0.0 for m in opt.spec.modes)

    def test_quadratic_coefficient(self):
        for n in (3, 5, 7):
            lam = 1e-3
            target = sum(math.sin(2 * math.pi * k / n) ** 2 / omega_k_sq(n, 1.0, 1.0, k=k)
                         for k in range(1, n + 1))
            opt = optimize_scgf(n, 1.0, 1.0, 1.0, 1.0, lam, 0.0)
            assert abs(opt.F / lam**2 - target) / target < 1e-4
        assert sum(math.sin(2 * math.pi * k / 3) ** 2 / omega_k_sq(3, 1.0, 1.0, k=k)
                   for k in range(1, 4)) == pytest.approx(0.375)

    def test_quartic_coefficient_richardson(self):
        for n in (3, 5):
            lams = np.array([5e-3, 1e-2, 2e-2])
            ys = np.array([optimize_scgf(n, 1, 1, 1, 1, l, 0.0).F / l**2 for l in lams])
            c4_fine = (ys[1] - ys[0]) / (3 * lams[0] ** 2)
            c4_coarse = (ys[2] - ys[1]) / (3 * (2 * lams[0]) ** 2)
            c4 = (4 * c4_fine - c4_coarse) / 3
            target = sum((1 / omega_k_sq(n, 1, 1, k=k) ** 3 + 5 / omega_k_sq(n, 1, 1, k=k) ** 2)
                         * math.sin(2 * math.pi * k / n) ** 4 for k in range(1, n + 1))
            assert abs(c4 - target) / target < 0.01

    def test_value_consistent_with_functional(self):
        lam, tau = 0.025, 0.04
        opt = optimize_scgf(5, 1.0, 1.0, 1.0, 1.0, lam, tau)
        rep = functional_F(opt.spec, lam, tau)
        assert rep.F == pytest.approx(opt.F, rel=1e-10, abs=1e-16)

    def test_driven_normalization_point(self):
        opt = optimize_scgf(5, 1.0, 1.0, 1.0, 1.0, 0.0, 0.05)
        assert abs(opt.F) < 1e-14

    def test_internal_derivatives_match_finite_differences(self, rng):
        s, wk2, A, B, C, E = _mode_coeffs(5, 1.2, 0.8, 1.1, 0.9, 0.07, 0.05, 1)
        x0 = np.array([0.11, 1.07, 0.93])
        grad, hess = _mode_grad_hess(x0, wk2, A, B, C, E)
        eps = 1e-6
        for i in range(3):
            dx = np.zeros(3)
            dx[i] = eps
            fd = (_mode_objective(x0 + dx, wk2, A, B, C, E)
                  - _mode_objective(x0 - dx, wk2, A, B, C, E)) / (2 * eps)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)
            gp, _ = _mode_grad_hess(x0 + dx, wk2, A, B, C, E)
            gm, _ = _mode_grad_hess(x0 - dx, wk2, A, B, C, E)
            assert hess[:, i] == pytest.approx((gp - gm) / (2 * eps), rel=1e-5, abs=1e-7)

    def test_convexity_in_lambda(self):
        lams = np.linspace(-0.05, 0.05, 9)
        vals = [optimize_scgf(5, 1, 1, 1, 1, l, 0.02).F for l in lams]
        second = np.diff(vals, 2)
        assert np.all(second > -1e-12)

    def test_gallavotti_cohen_symmetry(self):
        tau, t = 0.05, 1.0
        for lam in np.linspace(-0.07, 0.02, 7):
            f1 = optimize_scgf(5, t, 1, 1, 1, lam, tau).F
            f2 = optimize_scgf(5, t, 1, 1, 1, -lam - tau / t**2, tau).F
            assert abs(f1 - f2) <= 1e-9 * max(abs(f1), abs(f2), 1e-12)

    def test_basin_exit_raises(self):
        with pytest.raises(ScgfBasinError):
            optimize_scgf(3, 1.0, 1.0, 1.0, 1.0, 3.0, 0.0)

    def test_unpinned_chain_warns_and_runs(self):
        with pytest.warns(ValidityWarning):
            opt = optimize_scgf(5, 1.0, 0.0, 1.0, 1.0, 1e-3, 0.0)
        assert opt.F > 0


class TestSmallLambdaCoefficients:
    def test_zeros(self):
        m = optimal_mode_coeffs_small_lambda(5, 1, 1, 1, 1, 0.0, 2)
        assert m.a == m.b == m.c == 0.0
        m =  optimal_mode_coeffs_small_lambda(5, 1, 1, 1, 1, 0.3, 0)
        assert m.a == m.b == m.c == 0.0

    def test_truncation_order_against_optimizer(self):
        n, k = 5, 1
        lam1, lam2 = 1e-3, 2e-3

        def gaps(lam):
            opt = optimize_scgf(n, 1, 1, 1, 1, lam, 0.0)
            m_opt = opt.spec.modes[k]
            m_form = optimal_mode_coeffs_small_lambda(n, 1, 1, 1, 1, lam, k)
            return (abs(m_opt.a - m_form.a), abs(m_opt.b - m_form.b),
                    abs(m_opt.c - m_form.c))

        g1, g2 = gaps(lam1), gaps(lam2)
        assert 6.0 < g2[0] / g1[0] < 10.0     # a agrees to O(lam^3)
        assert 11.0 < g2[1] / g1[1] < 22.0    # b agrees to O(lam^4)
        assert 11.0 < g2[2] / g1[2] < 22.0


class TestStationaryTiltedParams:
    def test_reference_limit(self):
        spec = stationary_tilted_params(5, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0)
        assert all(m.a == m.b == m.c == 0.0 for m in spec.modes)

    def test_leading_order_matches_optimal_coefficients(self):
        lam = 1e-4
        for temp in (1.0, 1.7):
            spec = stationary_tilted_params(5, temp, 1.0, 1.0, 1.3, lam, 0.0)
            for k in (1, 2):
                target = optimal_mode_coeffs_small_lambda(5, temp, 1.0, 1.0, 1.3, lam, k)
                assert spec.modes[k].a == pytest.approx(target.a, rel=1e-14)
                assert spec.modes[k].b == spec.modes[k].c == 0.0

    def test_current_approaches_conductivity_law(self):
        kappa = conductivity_kappa(1.0, 1.0, 1.0)
        tau_prime = 0.4
        errs = []
        for n in (11, 101, 1001):
            spec = stationary_tilted_params(n, 1.0, 1.0, 1.0, 1.0, 0.0, tau_prime / n)
            errs.append(abs(n * mean_current_gaussian(spec) - kappa * tau_prime))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-3 * kappa * tau_prime

    def test_overdriven_rejected(self):
        with pytest.raises(ConfigError):
            stationary_tilted_params(5, 1.0, 1.0, 1.0, 1.0, 0.0, 3.0)


class TestConductivity:
    def test_methods_agree(self, rng):
        for _ in range(10):
            w0, w, g = rng.uniform(0.3, 2.5, size=3)
            k_closed = conductivity_kappa(w0, w, g, "closed-form")
            k_quad = conductivity_kappa(w0, w, g, "quadrature")
            k_sum = conductivity_kappa(w0, w, g, "discrete-sum", n_sum=1001)
            assert abs(k_closed - k_quad) / k_closed < 1e-12
            assert abs(k_closed - k_sum) / k_closed < 1e-8

    def test_pinned_limit(self):
        assert conductivity_kappa(50.0, 1.0, 1.0) < 1e-3
        assert conductivity_kappa(1.0, 1.0, 1.0) > conductivity_kappa(5.0, 1.0, 1.0)

    def test_unpinned_value(self):
        assert conductivity_kappa(0.0, 1.4, 0.7) == pytest.approx(1.4**2 / (2 * 0.7), rel=1e-12)
        assert conductivity_kappa(0.0, 1.4, 0.7, "quadrature") == pytest.approx(
            1.4**2 / (2 * 0.7), rel=1e-10)

    def test_discrete_sum_converges(self):
        target = conductivity_kappa(0.05, 1.0, 1.0, "quadrature")
        errs = [abs(conductivity_kappa(0.05, 1.0, 1.0, "discrete-sum", n_sum=n) - target)
                for n in (11, 101, 1001)]
        assert errs[0] > errs[1] >= errs[2] - 1e-15
        assert errs[2] < 1e-8

    def test_bad_method(self):
        with pytest.raises(ConfigError):
            conductivity_kappa(1, 1, 1, method="guess")


class TestScaledLimit:
    def test_zeros(self):
        assert scaled_limit_F(0.0, 0.7, 1.0, 1, 1, 1) == 0.0
        t = 1.3
        assert scaled_limit_F(-0.7 / t**2, 0.7, t, 1, 1, 1) == pytest.approx(0.0, abs=1e-15)

    def test_finite_size_convergence(self):
        lamp, taup = 1.0, 0.5
        target = scaled_limit_F(lamp, taup, 1.0, 1.0, 1.0, 1.0)
        errs = []
        for n in (11, 51, 201):
            opt = optimize_scgf(n, 1.0, 1.0, 1.0, 1.0, lamp / n, taup / n)
            errs.append(abs(n * opt.F - target) / target)
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 0.02


class TestSingleOscillator:
    def test_hand_value(self):
        assert single_oscillator_K(1.0, 2.0, 1.0, 1.0, 1.0) == pytest.approx(0.125)

    def test_equipartition_zero(self):
        assert single_oscillator_K(1.7, 1.7, 0.9, 1.2, 2.0) == 0.0

    def test_variational_oracle(self, rng):
        for _ in range(20):
            a, b = rng.uniform(0.3, 3.0, size=2)
            g, t, w = rng.uniform(0.5, 2.0, size=3)
            closed = single_oscillator_K(a, b, g, t, w)
            assert single_oscillator_K_variational(a, b, g, t, w) == pytest.approx(
                closed, rel=1e-9, abs=1e-12)

    def test_entropy_and_rate(self):
        assert single_oscillator_s(1.0, 1.0, 1.3, 0.7) == 0.0
        a, beta, g, t = 1.4, 0.8, 1.1, 0.9
        assert single_oscillator_s(a, beta, g, t) == pytest.approx(g * t * (a - beta) ** 2 / a)
        total = single_oscillator_I(a, 2.0, beta, g, t, 1.2)
        assert total == pytest.approx(0.25 * single_oscillator_s(a, beta, g, t)
                                      + single_oscillator_K(a, 2.0, g, t, 1.2))

    def test_invalid_parameters(self):
        with pytest.raises(ConfigError):
            single_oscillator_K(-1.0, 1.0, 1.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            single_oscillator_s(0.0, 1.0, 1.0, 1.0)


class TestEvenChainExtension:
    # even N is an extension beyond the native odd-length convention: the
    # unpaired half-band mode is real and carries no current
    def test_even_chain_agrees_with_spectral_oracle(self):
        from ldchain import build_linear_system, scgf_riccati
        for n, tau in ((4, 0.0), (6, 0.03)):
            sysk = build_linear_system(n, 1.0, 1.0, 1.0, 1.0, tau)
            for lam in (0.011, -0.017):
                fr = scgf_riccati(sysk, lam)
                fv = optimize_scgf(n, 1.0, 1.0, 1.0, 1.0, lam, tau).F
                assert abs(fr - fv) <= 1e-8 * max(abs(fr), abs(fv))

    def test_half_band_mode_must_be_real(self):
        with pytest.raises(ConfigError):
            GaussianMeasureSpec(4, 1.0, 1.0, 1.0, 1.0,
                                (ModeParams(k=0), ModeParams(k=1), ModeParams(k=2, a=0.1)))

    def test_k0_mode_must_have_zero_a(self):
        with pytest.raises(ConfigError):
            GaussianMeasureSpec(5, 1.0, 1.0, 1.0, 1.0,
                                (ModeParams(k=0, a=0.2), ModeParams(k=1), ModeParams(k=2)))

    def test_mode_count_checked(self):
        with pytest.raises(ConfigError):
            GaussianMeasureSpec(5, 1.0, 1.0, 1.0, 1.0, (ModeParams(k=0), ModeParams(k=1)))
