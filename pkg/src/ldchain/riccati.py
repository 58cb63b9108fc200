"""SCGF of the driven harmonic ring as the principal eigenvalue of the tilted generator.

For the linear diffusion dx = A x dt + B dW with D = B B^T, tilting by
exp(lambda integral x^T C x dt) preserves the quadratic structure: the ansatz
g = exp(x^T M x / 2) is an eigenfunction of the tilted generator iff the
symmetric M solves the algebraic Riccati equation

    M D M + M A + A^T M + 2 lambda C = 0,

and the eigenvalue is tr(D M) / 2.  (With f = x^T M x / 2: grad f = M x,
L g = [x^T A^T M x + tr(D M)/2 + x^T M D M x / 2] g; collecting the quadratic
form and adding the tilt gives the equation above.)  The principal branch is
the stabilizing one, A + D M Hurwitz, obtained from the stable invariant
subspace of the Hamiltonian matrix [[A, D], [-2 lambda C, -A^T]] via an
ordered real Schur decomposition.  Eigenvalues reaching the imaginary axis
signal the boundary of the analyticity strip where the SCGF ceases to exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as _sla

from .errors import ConfigError, RiccatiExistenceError

__all__ = ["LinearSystem", "build_linear_system", "scgf_riccati"]

_HURWITZ_TOL = 1e-9


@dataclass(frozen=True)
class LinearSystem:
    """Drift A, diffusion D and tilt form C (x^T C x = N J) of the harmonic ring."""

    a: np.ndarray
    d: np.ndarray
    c: np.ndarray
    n_sites: int

    def __post_init__(self):
        two_n = 2 * self.n_sites
        for name, m in (("a", self.a), ("d", self.d), ("c", self.c)):
            if m.shape != (two_n, two_n):
                raise ConfigError(f"matrix {name} must be {two_n}x{two_n}")
        if not np.allclose(self.d, self.d.T) or np.any(np.linalg.eigvalsh(self.d) < -1e-12):
            raise ConfigError("diffusion matrix must be symmetric positive semi-definite")
        if not np.allclose(self.c, self.c.T):
            raise ConfigError("tilt form must be symmetric")
        if np.max(np.linalg.eigvals(self.a).real) >= 0.0:
            raise ConfigError("drift matrix is not Hurwitz: no stationary state")


def build_linear_system(n_sites: int, temperature: float, omega0: float, omega: float,
                        gamma: float, tau: float = 0.0) -> LinearSystem:
    """Assembles (A, D, C) for the uniformly thermostated periodic harmonic chain.

    A is the block matrix [[0, I], [-K + tau-skew, -gamma I]] with K the
    harmonic force matrix and the skew part (tau omega^2 / 2T)(q_{i+1} -
    q_{i-1}); D carries 2 gamma T on the momentum block; C is defined by
    x^T C x = N J(q, p).
    """
    if n_sites < 1 or temperature <= 0 or gamma <= 0 or omega <= 0 or omega0 < 0:
        raise ConfigError("require N >= 1, T > 0, gamma > 0, omega > 0, omega0 >= 0")
    n = n_sites
    eye = np.eye(n)
    shift = np.roll(eye, 1, axis=1)           # (shift @ q)_i = q_{i+1}
    force = omega0**2 * eye + omega**2 * (2.0 * eye - shift - shift.T)
    if n == 1:
        force = omega0**2 * eye               # self-bond of a 1-ring carries no force
    skew = shift - shift.T
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = eye
    a[n:, :n] = -force + (tau * omega**2 / (2.0 * temperature)) * skew
    a[n:, n:] = -gamma * eye

    d = np.zeros((2 * n, 2 * n))
    d[n:, n:] = 2.0 * gamma * temperature * eye

    # N J = (omega^2/2) sum_i (q_{i+1} - q_i)(p_i + p_{i+1}) = q^T G p
    g = np.zeros((n, n))
    for i in range(n):
        ip1 = (i + 1) % n
        g[ip1, i] += 0.5 * omega**2
        g[ip1, ip1] += 0.5 * omega**2
        g[i, i] -= 0.5 * omega**2
        g[i, ip1] -= 0.5 * omega**2
    c = np.zeros((2 * n, 2 * n))
    c[:n, n:] = 0.5 * g
    c[n:, :n] = 0.5 * g.T
    return LinearSystem(a=a, d=d, c=c, n_sites=n)


def _riccati_residual(m, a, d, q):
    return m @ d @ m + m @ a + a.T @ m + q


def scgf_riccati(sys: LinearSystem, lam: float) -> float:
    """SCGF at tilt strength lambda via the stable invariant subspace.

    Returns tr(D M)/2 for the stabilizing Riccati solution; raises
    :class:`RiccatiExistenceError` when the Hamiltonian matrix has eigenvalues
    on the imaginary axis or the stable subspace is not a graph over the
    state block (tilt outside the analyticity strip).
    """
    if lam == 0.0:
        return 0.0
    two_n = 2 * sys.n_sites
    q = 2.0 * lam * sys.c
    ham = np.block([[sys.a, sys.d], [-q, -sys.a.T]])

    eigs = np.linalg.eigvals(ham)
    margin = float(np.min(np.abs(eigs.real)))
    ts, zs, sdim = _sla.schur(ham, output="real", sort="lhp")
    if sdim != two_n or margin < _HURWITZ_TOL * max(1.0, float(np.max(np.abs(eigs)))):
        raise RiccatiExistenceError(margin, f"{sdim} of {two_n} stable eigenvalues")

    u11 = zs[:two_n, :two_n]
    u21 = zs[two_n:, :two_n]
    if np.linalg.cond(u11) > 1e12:
        raise RiccatiExistenceError(margin, "stable subspace is not a graph over the state block")
    m = u21 @ np.linalg.inv(u11)
    m = 0.5 * (m + m.T)

    # one defect-correction pass keeps the residual near machine precision
    for _ in range(3):
        res = _riccati_residual(m, sys.a, sys.d, q)
        if np.max(np.abs(res)) < 1e-13 * max(1.0, np.max(np.abs(m))):
            break
        acl = sys.a + sys.d @ m
        delta = _sla.solve_continuous_lyapunov(acl.T, -res)
        m = m + 0.5 * (delta + delta.T)

    return 0.5 * float(np.trace(sys.d @ m))
