"""Shared test oracles.

The helpers here deliberately avoid the code paths they are used to check:
the covariance reconstruction evaluates the measure's exponent through
explicit DFTs and polarization, and the quadratic Donsker-Varadhan supremum
is an independent Sylvester solve.
"""

import numpy as np
import pytest

import ldchain
from ldchain import gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary lattice transform, e^{-i 2 pi k j / N} convention."""
    j = np.arange(n)
    return np.exp(-1j * 2 * np.pi * np.outer(j, j) / n) / np.sqrt(n)


def signed_mode_arrays(spec) -> tuple:
    """(a, b, c) vectors over the full residue system k = 0..N-1."""
    n = spec.n_sites
    a = np.zeros(n)
    b = np.zeros(n)
    c = np.zeros(n)
    for k in range(len(spec.modes)):
        m = spec.modes[k]
        a[k], b[k], c[k] = m.a, m.b, m.c
        if 0 < k and (n - k) % n != k:
            a[n - k], b[n - k], c[n - k] = -m.a, m.b, m.c
    return a, b, c


def covariance_from_spec(spec) -> np.ndarray:
    """Real-space covariance of the mode-parameterized Gaussian measure.

    Builds the quadratic form of the exponent by polarization over basis
    vectors, evaluating the mode functional through explicit DFTs; inverting
    it gives the covariance with no reference to the closed-form moments.
    """
    n = spec.n_sites
    t = spec.temperature
    w = dft_matrix(n)
    wk2 = np.array([gaussian.omega_k_sq(n, spec.omega0, spec.omega, k=k) for k in range(n)])
    a, b, c = signed_mode_arrays(spec)

    def exponent(x):
        q, p = x[:n], x[n:]
        pk = w @ p
        qk = w @ q
        val = 0.0 + 0.0j
        for k in range(n):
            km = (-k) % n
            val += (1j * a[k] * pk[k] * qk[km]
                    + b[k] * (pk[k] * pk[km] + wk2[k] * qk[k] * qk[km])
                    + c[k] * (pk[k] * pk[km] - wk2[k] * qk[k] * qk[km]))
        ref = 0.5 * np.sum(np.abs(pk) ** 2 + wk2 * np.abs(qk) ** 2)
        return (val.real + ref) / t

    m = 2 * n
    prec = np.zeros((m, m))
    basis = np.eye(m)
    e_i = np.array([exponent(basis[i]) for i in range(m)])
    for i in range(m):
        for j in range(i + 1, m):
            prec[i, j] = prec[j, i] = exponent(basis[i] + basis[j]) - e_i[i] - e_i[j]
        prec[i, i] = 2.0 * e_i[i]
    return np.linalg.inv(prec)


def dv_rate_quadratic(a_mat: np.ndarray, d_mat: np.ndarray, sigma: np.ndarray) -> float:
    """sup over Gaussian test functions of -<Lg/g>_mu for the linear diffusion.

    Stationarity in the quadratic exponent G reduces to the Sylvester-type
    equation D G S + S G D = -(S A^T + A S + D); the supremum value follows by
    substitution.  This is the Donsker-Varadhan rate of the empirical measure
    restricted to (and attained on) Gaussian test functions.
    """
    m = a_mat.shape[0]
    rhs = -(sigma @ a_mat.T + a_mat @ sigma + d_mat)
    big = np.kron(sigma.T, d_mat) + np.kron(d_mat.T, sigma)
    gvec, *_ = np.linalg.lstsq(big, rhs.reshape(-1), rcond=None)
    g = gvec.reshape(m, m)
    g = 0.5 * (g + g.T)
    phi = (np.trace(a_mat.T @ g @ sigma) + 0.5 * np.trace(d_mat @ g)
           + 0.5 * np.trace(g @ d_mat @ g @ sigma))
    return float(-phi)


def rk4_step(cfg, state, dt):
    """Classical Runge-Kutta step of the deterministic drift field."""
    def f(x):
        s = ldchain.State(q=x[:cfg.n], p=x[cfg.n:])
        return ldchain.drift(cfg, s)

    x = np.concatenate([state.q, state.p])
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ldchain.State(q=x[:cfg.n], p=x[cfg.n:])
