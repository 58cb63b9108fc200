"""Tilted-generator spectral oracle: system assembly and Riccati SCGF."""

import numpy as np
import pytest
from scipy import linalg as sla
from scipy.stats import ortho_group

from ldchain import (ConfigError, LinearSystem, RiccatiExistenceError, State,
                     build_linear_system, mean_current, scgf_riccati, uniform_chain)
from ldchain.gaussian import (mean_current_gaussian, optimize_scgf,
                              stationary_tilted_params)


class TestBuild:
    def test_untilted_spectrum_sits_at_minus_half_gamma(self):
        gamma = 0.8
        sysk = build_linear_system(7, 1.0, 1.0, 1.0, gamma, 0.0)
        eigs = np.linalg.eigvals(sysk.a)
        # underdamped pinned chain: every mode pair has real part -gamma/2
        assert np.max(np.abs(eigs.real + gamma / 2)) < 1e-12

    def test_tilt_form_matches_chain_current(self, rng):
        n = 6
        cfg = uniform_chain(n, omega0=0.7, omega=1.3, gamma=0.9, temperature=1.1)
        sysk = build_linear_system(n, 1.1, 0.7, 1.3, 0.9, 0.0)
        assert abs(np.trace(sysk.c)) < 1e-14
        for _ in range(1000):
            x = rng.standard_normal(2 * n)
            s = State(q=x[:n], p=x[n:])
            assert x @ sysk.c @ x == pytest.approx(n * mean_current(cfg, s),
                                                   rel=1e-12, abs=1e-13)

    def test_diffusion_rank(self):
        sysk = build_linear_system(5, 1.0, 1.0, 1.0, 1.0, 0.0)
        assert np.linalg.matrix_rank(sysk.d) == 5

    def test_unstable_drift_rejected(self):
        with pytest.raises(ConfigError):
            build_linear_system(5, 1.0, 1.0, 1.0, 0.05, 50.0)


class TestScgf:
    def test_zero_tilt(self):
        sysk = build_linear_system(5, 1.0, 1.0, 1.0, 1.0, 0.02)
        assert scgf_riccati(sysk, 0.0) == 0.0

    def test_quadratic_coefficient(self):
        sysk = build_linear_system(3, 1.0, 1.0, 1.0, 1.0, 0.0)
        lam = 1e-3
        f = scgf_riccati(sysk, lam)
        assert abs(f / lam**2 - 0.375) / 0.375 < 1e-6

    def test_agrees_with_variational_route(self):
        # the two independent derivations must coincide; grids avoid the
        # zeros of F where a relative comparison is vacuous
        grid = np.linspace(-0.043, 0.037, 11)
        for n, tau in ((3, 0.0), (5, 0.05), (11, 0.02)):
            sysk = build_linear_system(n, 1.0, 1.0, 1.0, 1.0, tau)
            for lam in grid:
                fr = scgf_riccati(sysk, lam)
                fv = optimize_scgf(n, 1.0, 1.0, 1.0, 1.0, lam, tau).F
                assert abs(fr - fv) <= 1e-8 * max(abs(fr), abs(fv))

    def test_gallavotti_cohen_symmetry(self):
        tau = 0.05
        sysk = build_linear_system(5, 1.0, 1.0, 1.0, 1.0, tau)
        for lam in np.linspace(-0.075, 0.025, 11):
            f1 = scgf_riccati(sysk, lam)
            f2 = scgf_riccati(sysk, -lam - tau)
            assert abs(f1 - f2) / max(abs(f1), abs(f2), 1e-15) < 1e-9

    def test_derivative_at_zero_is_stationary_current(self):
        n, tau = 5, 0.04
        sysk = build_linear_system(n, 1.0, 1.0, 1.0, 1.0, tau)
        h = 1e-7
        slope = (scgf_riccati(sysk, h) - scgf_riccati(sysk, -h)) / (2 * h)
        spec = stationary_tilted_params(n, 1.0, 1.0, 1.0, 1.0, 0.0, tau)
        assert slope == pytest.approx(n * mean_current_gaussian(spec), rel=1e-6)
        sigma = sla.solve_continuous_lyapunov(sysk.a, -sysk.d)
        assert slope == pytest.approx(float(np.trace(sysk.c @ sigma)), rel=1e-6)

    def test_basis_independence(self, rng):
        n = 4
        sysk = build_linear_system(n, 1.0, 1.0, 1.0, 1.0, 0.03)
        rot = ortho_group.rvs(2 * n, random_state=np.random.default_rng(1))
        rotated = LinearSystem(a=rot @ sysk.a @ rot.T, d=rot @ sysk.d @ rot.T,
                               c=rot @ sysk.c @ rot.T, n_sites=n)
        for lam in (0.01, -0.03):
            assert scgf_riccati(rotated, lam) == pytest.approx(
                scgf_riccati(sysk, lam), rel=1e-10)

    def test_existence_boundary(self):
        sysk = build_linear_system(3, 1.0, 1.0, 1.0, 1.0, 0.0)
        with pytest.raises(RiccatiExistenceError) as err:
            scgf_riccati(sysk, 2.0)
        assert err.value.margin >= 0.0

    def test_convex_and_analytic_region(self):
        sysk = build_linear_system(5, 1.0, 1.0, 1.0, 1.0, 0.0)
        lams = np.linspace(-0.12, 0.12, 13)
        vals = [scgf_riccati(sysk, l) for l in lams]
        assert np.all(np.diff(vals, 2) > -1e-13)
