"""Generalized detailed balance residuals via exact polynomial algebra."""

import numpy as np
import pytest

from ldchain import ChainConfig, ConfigError, ReferenceMeasureSpec, harmonic_potential
from ldchain.gdb import QuadratureSpec, check_gdb, _GaussianMoments
from test_chain import quartic_potential


def open_chain(n, temps, gammas=None, theta=None, omega0=1.0, omega=1.0):
    gammas = np.ones(n) if gammas is None else np.asarray(gammas, dtype=float)
    return ChainConfig(n=n, boundary="open", potential=harmonic_potential(omega0, omega),
                       gamma=gammas, temperature=np.asarray(temps, dtype=float),
                       theta=theta)


class TestResiduals:
    def test_single_site_equilibrium(self):
        cfg = open_chain(1, [1.0])
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=[1.0]))
        assert residual < 1e-12

    def test_two_baths_local_gibbs(self):
        cfg = open_chain(2, [1.0, 2.0])
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=[1.0, 0.5]))
        assert residual < 1e-12

    def test_negative_control_without_sigma(self):
        cfg = open_chain(2, [1.0, 2.0])
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=[1.0, 0.5]),
                             include_sigma=False)
        assert residual > 1e-3

    def test_boundary_thermostats_with_free_bulk_beta(self):
        # only sites 1 and 3 are thermostated; the bulk beta is arbitrary
        cfg = open_chain(3, [1.0, 1.0, 2.0], gammas=[0.7, 0.0, 0.7])
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=[1.0, 0.77, 0.5]))
        assert residual < 1e-12

    def test_mechanical_drive_enters_sigma(self):
        cfg = open_chain(3, [1.0, 1.0, 1.0], theta=np.array([0.3, -0.1, 0.0]))
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=np.ones(3)))
        assert residual < 1e-12
        wrong = check_gdb(cfg, ReferenceMeasureSpec(beta=np.ones(3)), include_sigma=False)
        assert wrong > 1e-3

    def test_uniform_drive_on_ring(self):
        cfg = ChainConfig(n=3, boundary="periodic", potential=harmonic_potential(1, 1),
                          gamma=np.ones(3), temperature=np.ones(3), tau=0.2)
        residual = check_gdb(cfg, ReferenceMeasureSpec(beta=np.ones(3)))
        assert residual < 1e-12


class TestValidation:
    def test_thermostated_site_beta_mismatch_names_site(self):
        cfg = open_chain(2, [1.0, 2.0])
        with pytest.raises(ConfigError, match="site 2"):
            check_gdb(cfg, ReferenceMeasureSpec(beta=[1.0, 1.0]))

    def test_non_harmonic_rejected(self):
        cfg = ChainConfig(n=2, boundary="open", potential=quartic_potential(),
                          gamma=np.ones(2), temperature=np.ones(2))
        with pytest.raises(ConfigError):
            check_gdb(cfg, ReferenceMeasureSpec(beta=np.ones(2)))

    def test_large_chain_rejected(self):
        cfg = open_chain(4, np.ones(4))
        with pytest.raises(ConfigError):
            check_gdb(cfg, ReferenceMeasureSpec(beta=np.ones(4)))

    def test_quadrature_spec_validation(self):
        with pytest.raises(ConfigError):
            QuadratureSpec(max_degree=0)
        with pytest.raises(ConfigError):
            QuadratureSpec(max_degree=3, pure_power_degree=2)


class TestMoments:
    def test_wick_moments_against_direct_covariances(self):
        cfg = open_chain(2, [1.0, 2.0])
        ref = ReferenceMeasureSpec(beta=[1.0, 0.5])
        mom = _GaussianMoments(cfg, ref)
        n = cfg.n
        # momenta are independent with variance 1/beta_i
        for i in range(n):
            key = [0] * (2 * n)
            key[n + i] = 2
            assert mom.moment(tuple(key)) == pytest.approx(1.0 / ref.beta[i])
            key[n + i] = 4
            assert mom.moment(tuple(key)) == pytest.approx(3.0 / ref.beta[i] ** 2)
        # q covariance equals the inverse of the weighted spring form
        cov_q = mom.cov[:n, :n]
        x = np.linspace(-1, 1, 5)
        for i in range(n):
            for j in range(n):
                key = [0] * (2 * n)
                key[i] += 1
                key[j] += 1
                assert mom.moment(tuple(key)) == pytest.approx(cov_q[i, j])
        # odd moments vanish
        key = [0] * (2 * n)
        key[0] = 1
        key[n] = 2
        assert mom.moment(tuple(key)) == 0.0
