"""Generalized detailed balance verified by exact polynomial algebra.

The generator of the harmonic chain maps polynomials in (q, p) to
polynomials, and expectations under the local-Gibbs reference density are
Gaussian moments, so the detailed-balance identity <f L g> = <g (Pi L Pi) f>
+ <g sigma f> can be checked to machine precision on a finite family of
polynomial test functions with no Monte Carlo noise.  Residuals for a
correct sigma sit at 1e-13 and below; a deliberately wrong sigma shows up at
O(0.1).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .chain import ChainConfig, ReferenceMeasureSpec, force_matrix, drive_field, sigma_coefficients
from .errors import ConfigError

__all__ = ["QuadratureSpec", "check_gdb"]

_MAX_SITES = 3


@dataclass(frozen=True)
class QuadratureSpec:
    """Polynomial test-function family for the detailed-balance residual.

    The family is all monomials of total degree 1..``max_degree`` plus the
    pure powers x_i^d for d up to ``pure_power_degree`` (degree <= 4 by
    default).  Expectations are exact Gaussian moments, so there is no
    sampling parameter to tune.
    """

    max_degree: int = 2
    pure_power_degree: int = 4

    def __post_init__(self):
        if self.max_degree < 1 or self.pure_power_degree < self.max_degree:
            raise ConfigError("need max_degree >= 1 and pure_power_degree >= max_degree")


# -- sparse polynomials over (q_1..q_N, p_1..p_N) ------------------------------

def _mono(n_vars: int, idx: int, power: int = 1) -> dict:
    key = [0] * n_vars
    key[idx] = power
    return {tuple(key): 1.0}


def _padd(dst: dict, src: dict, scale: float = 1.0) -> None:
    for k, v in src.items():
        dst[k] = dst.get(k, 0.0) + scale * v


def _pmul(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            out[k] = out.get(k, 0.0) + va * vb
    return out


def _pdiff(a: dict, idx: int) -> dict:
    out: dict = {}
    for k, v in a.items():
        e = k[idx]
        if e:
            kk = list(k)
            kk[idx] = e - 1
            key = tuple(kk)
            out[key] = out.get(key, 0.0) + v * e
    return out


def _pflip(a: dict, n: int) -> dict:
    """Momentum reversal: negate every p variable."""
    out: dict = {}
    for k, v in a.items():
        sign = -1.0 if sum(k[n:]) % 2 else 1.0
        out[k] = out.get(k, 0.0) + sign * v
    return out


class _Generator:
    """Symbolic action of the chain generator on polynomials (harmonic only)."""

    def __init__(self, cfg: ChainConfig):
        n = cfg.n
        self.n = n
        self.gamma = cfg.gamma
        self.temps = cfg.temperature
        force = force_matrix(cfg)
        drive = np.column_stack([drive_field(cfg, e) for e in np.eye(n)])
        self.p_drift = -force + drive  # dp_i/dt = -gamma_i p_i + sum_j p_drift[i,j] q_j

    def apply(self, g: dict) -> dict:
        n = self.n
        out: dict = {}
        for i in range(n):
            dq = _pdiff(g, i)
            if dq:
                _padd(out, _pmul(_mono(2 * n, n + i), dq))          # p_i d/dq_i
            dp = _pdiff(g, n + i)
            if dp:
                _padd(out, _pmul(_mono(2 * n, n + i), dp), -self.gamma[i])
                for j in range(n):
                    cij = self.p_drift[i, j]
                    if cij:
                        _padd(out, _pmul(_mono(2 * n, j), dp), cij)
                d2p = _pdiff(dp, n + i)
                if d2p:
                    _padd(out, d2p, self.gamma[i] * self.temps[i])
        return out

    def apply_reversed(self, g: dict) -> dict:
        """Pi L Pi acting on g."""
        return _pflip(self.apply(_pflip(g, self.n)), self.n)


class _GaussianMoments:
    """Wick moments of the local-Gibbs reference (zero mean, block covariance)."""

    def __init__(self, cfg: ChainConfig, ref: ReferenceMeasureSpec):
        n = cfg.n
        beta = ref.beta
        w0sq = cfg.potential.omega0**2
        wsq = cfg.potential.omega**2
        lam = np.zeros((n, n))
        for i in range(n):
            lam[i, i] += beta[i] * w0sq
            # the 1/2-weighted pair terms of the local energies, ghosts drop out
            for nb in (i - 1, i + 1):
                c = beta[i] * wsq / 4.0
                if cfg.periodic:
                    j = nb % n
                    if j == i:
                        continue  # a 1-ring has no pair interaction with itself
                    lam[i, i] += 2 * c
                    lam[j, j] += 2 * c
                    lam[i, j] -= 2 * c
                    lam[j, i] -= 2 * c
                elif 0 <= nb < n:
                    lam[i, i] += 2 * c
                    lam[nb, nb] += 2 * c
                    lam[i, nb] -= 2 * c
                    lam[nb, i] -= 2 * c
                else:
                    lam[i, i] += 2 * c
        cov = np.zeros((2 * n, 2 * n))
        cov[:n, :n] = np.linalg.inv(lam)
        cov[n:, n:] = np.diag(1.0 / beta)
        self.cov = cov
        self._memo = {(0,) * (2 * n): 1.0}

    def moment(self, key: tuple) -> float:
        val = self._memo.get(key)
        if val is not None:
            return val
        if sum(key) % 2:
            self._memo[key] = 0.0
            return 0.0
        i = next(idx for idx, e in enumerate(key) if e)
        rest = list(key)
        rest[i] -= 1
        total = 0.0
        for j, ej in enumerate(rest):
            if ej and self.cov[i, j]:
                kk = list(rest)
                kk[j] -= 1
                total += self.cov[i, j] * ej * self.moment(tuple(kk))
        self._memo[key] = total
        return total

    def expect(self, poly: dict) -> float:
        return sum(v * self.moment(k) for k, v in poly.items() if v)


def _test_family(n_vars: int, quad: QuadratureSpec) -> list:
    fam = []
    for deg in range(1, quad.max_degree + 1):
        for combo in combinations_with_replacement(range(n_vars), deg):
            key = [0] * n_vars
            for idx in combo:
                key[idx] += 1
            fam.append({tuple(key): 1.0})
    for d in range(quad.max_degree + 1, quad.pure_power_degree + 1):
        for idx in range(n_vars):
            fam.append(_mono(n_vars, idx, d))
    return fam


def _sigma_poly(cfg: ChainConfig, ref: ReferenceMeasureSpec) -> dict:
    n = cfg.n
    wsq = cfg.potential.omega**2
    coefs = sigma_coefficients(cfg, ref)
    out: dict = {}
    for b, coef in enumerate(coefs):
        if coef == 0.0:
            continue
        a, bb = b, (b + 1) % n
        # j_b = -omega^2/2 (q_a - q_b)(p_a + p_b)
        for qi, qs in ((a, 1.0), (bb, -1.0)):
            for pi in (a, bb):
                key = [0] * (2 * n)
                key[qi] += 1
                key[n + pi] += 1
                k = tuple(key)
                out[k] = out.get(k, 0.0) - coef * 0.5 * wsq * qs
    return out


def check_gdb(cfg: ChainConfig, ref: ReferenceMeasureSpec,
              quad: QuadratureSpec | None = None, include_sigma: bool = True) -> float:
    """Maximal residual of the generalized detailed balance identity.

    For every ordered pair (f, g) in the polynomial family, computes
    <f L g> - <g (Pi L Pi) f> - <g sigma f> under the reference density and
    returns the largest absolute value.  ``include_sigma=False`` drops the
    sigma term (negative control: the residual must then be visibly nonzero
    out of equilibrium).

    Requires a harmonic potential (Gaussian reference), N <= 3, and
    beta_i = 1/T_i at every thermostated site.
    """
    if not cfg.potential.is_harmonic:
        raise ConfigError("check_gdb requires a harmonic potential")
    if cfg.n > _MAX_SITES:
        raise ConfigError(f"check_gdb is exact but exhaustive; N <= {_MAX_SITES} required")
    if ref.beta.shape != (cfg.n,):
        raise ConfigError("reference measure dimension mismatch")
    for i in range(cfg.n):
        if cfg.gamma[i] > 0.0:
            expected = 1.0 / cfg.temperature[i]
            if abs(ref.beta[i] - expected) > 1e-12 * expected:
                raise ConfigError(
                    f"site {i + 1} is thermostated but beta={ref.beta[i]} != 1/T={expected}; "
                    "the noise part is then not reversible for this reference")
    quad = quad or QuadratureSpec()

    gen = _Generator(cfg)
    moments = _GaussianMoments(cfg, ref)
    sigma = _sigma_poly(cfg, ref) if include_sigma else {}
    family = _test_family(2 * cfg.n, quad)
    l_of = [gen.apply(g) for g in family]
    lrev_of = [gen.apply_reversed(f) for f in family]

    worst = 0.0
    for fi, f in enumerate(family):
        for gi, g in enumerate(family):
            lhs = moments.expect(_pmul(f, l_of[gi]))
            rhs = moments.expect(_pmul(g, lrev_of[fi]))
            if sigma:
                rhs += moments.expect(_pmul(g, _pmul(sigma, f)))
            worst = max(worst, abs(lhs - rhs))
    return worst
