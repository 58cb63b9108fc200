"""Lyapunov function for the driven chain and its quadratic lower bound.

F = (1/2) sum_i beta_i h_i + b sum_i q_i p_i generates Psi = exp(F - inf F);
the associated Phi = -LF - sum_i gamma_i T_i (dF/dp_i)^2 must diverge at
infinity for the large-deviation machinery to apply.  Phi is evaluated here
in closed form (the generator applied to F term by term), never by numerical
differentiation; the finite-difference route exists only as a test oracle.
All evaluators accept a batch of states as (M, N) position/momentum arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize as _sp_optimize

from .chain import ChainConfig, ReferenceMeasureSpec, State
from .errors import ConfigError

__all__ = [
    "hat_hamiltonian", "lyapunov_F", "lyapunov_phi", "lyapunov_b_threshold",
    "lyapunov_energy_norm", "fit_lyapunov_bound",
]


def _batched(arr) -> tuple:
    a = np.atleast_2d(np.asarray(arr, dtype=float))
    return a, a.ndim


def _ghost(cfg: ChainConfig, q: np.ndarray) -> np.ndarray:
    """Pad (M, N) positions with boundary ghosts along the last axis."""
    if cfg.periodic:
        return np.concatenate([q[:, -1:], q, q[:, :1]], axis=1)
    zeros = np.zeros((q.shape[0], 1))
    return np.concatenate([zeros, q, zeros], axis=1)


def _check(cfg: ChainConfig, ref: ReferenceMeasureSpec) -> None:
    if ref.beta.shape != (cfg.n,):
        raise ConfigError("reference measure dimension mismatch")


def _hat_h_batch(cfg: ChainConfig, ref: ReferenceMeasureSpec, q, p) -> np.ndarray:
    qg = _ghost(cfg, q)
    pot = cfg.potential
    fwd = qg[:, 1:-1] - qg[:, 2:]     # q_i - q_{i+1}
    bwd = qg[:, :-2] - qg[:, 1:-1]    # q_{i-1} - q_i
    h = 0.5 * p**2 + pot.v(q) + 0.5 * (pot.u(fwd) + pot.u(bwd))
    return h @ ref.beta


def hat_hamiltonian(cfg: ChainConfig, ref: ReferenceMeasureSpec, s: State) -> float:
    """Weighted energy sum_i beta_i h_i of the reference density."""
    _check(cfg, ref)
    return float(_hat_h_batch(cfg, ref, s.q[None, :], s.p[None, :])[0])


def lyapunov_F(cfg: ChainConfig, ref: ReferenceMeasureSpec, b: float, s: State) -> float:
    """F(q, p) = (1/2) sum beta_i h_i + b sum q_i p_i."""
    _check(cfg, ref)
    return float(0.5 * hat_hamiltonian(cfg, ref, s) + b * np.dot(s.q, s.p))


def _phi_batch(cfg: ChainConfig, ref: ReferenceMeasureSpec, b: float,
               q: np.ndarray, p: np.ndarray) -> np.ndarray:
    beta = ref.beta
    gamma = cfg.gamma
    temps = cfg.temperature
    theta = cfg.effective_theta()
    pot = cfg.potential

    qg = _ghost(cfg, q)
    du_bwd = pot.du(qg[:, :-2] - qg[:, 1:-1])   # U'(q_{i-1} - q_i)
    du_fwd = pot.du(qg[:, 1:-1] - qg[:, 2:])    # U'(q_i - q_{i+1})

    # noise part: L_S hatH = sum beta_i gamma_i (T_i - p_i^2)
    ls_hat = (beta * gamma * (temps - p**2)).sum(axis=1)

    # Hamiltonian part: L_H hatH = -sum_bonds (beta_{i+1} - beta_i) j_i
    jb = -0.5 * du_fwd * (p + np.roll(p, -1, axis=1))
    if cfg.periodic:
        dbeta = np.roll(beta, -1) - beta
        lh_hat = -(jb * dbeta).sum(axis=1)
    else:
        dbeta = beta[1:] - beta[:-1]
        jb_in = -0.5 * du_fwd[:, :-1] * (p[:, :-1] + p[:, 1:])
        lh_hat = -(jb_in * dbeta).sum(axis=1)

    # drive part of the drift, entering both L hatH and L(q p)
    th_prev = np.roll(theta, 1) if cfg.periodic else np.concatenate(([0.0], theta[:-1]))
    drive = -0.5 * temps * (th_prev * du_bwd + theta * du_fwd)
    lt_hat = (drive * beta * p).sum(axis=1)

    # configurational force with half-weight wall bonds
    w_l = np.ones(cfg.n)
    w_r = np.ones(cfg.n)
    if not cfg.periodic:
        w_l[0] = 0.5
        w_r[-1] = 0.5
    grad_h = pot.dv(q) - w_l * du_bwd + w_r * du_fwd

    l_qp = (p**2 - gamma * q * p - q * grad_h + q * drive).sum(axis=1)
    gamma_part = (gamma * temps * (0.5 * beta * p + b * q) ** 2).sum(axis=1)

    return -0.5 * (ls_hat + lh_hat + lt_hat) - b * l_qp - gamma_part


def lyapunov_phi(cfg: ChainConfig, ref: ReferenceMeasureSpec, b: float, s) -> float | np.ndarray:
    """Phi = -LF - sum gamma_i T_i (dF/dp_i)^2, in closed form.

    Accepts a single :class:`State` or a pair of (M, N) arrays packed as a
    tuple ``(Q, P)`` for batch evaluation.
    """
    _check(cfg, ref)
    if isinstance(s, State):
        return float(_phi_batch(cfg, ref, b, s.q[None, :], s.p[None, :])[0])
    q, p = s
    return _phi_batch(cfg, ref, b, np.asarray(q, dtype=float), np.asarray(p, dtype=float))


def lyapunov_b_threshold(cfg: ChainConfig) -> float:
    """Largest admissible mixing coefficient b for the drift bound.

    inf_i min(delta / (gamma_i T_+ + T_+^2), gamma_i / (8 T_+)) with
    T_+ the hottest bath; b strictly below this makes Phi grow at infinity
    (advisory, as the underlying constants are sufficient not necessary).
    """
    t_plus = float(np.max(cfg.temperature))
    delta = cfg.potential.delta
    vals = np.minimum(delta / (cfg.gamma * t_plus + t_plus**2), cfg.gamma / (8.0 * t_plus))
    return float(np.min(vals))


def lyapunov_energy_norm(cfg: ChainConfig, s) -> float | np.ndarray:
    """Coercive comparison functional G = sum_i (p_i^2 + V(q_i) + U(q_i - q_{i+1}))."""
    if isinstance(s, State):
        q, p = s.q[None, :], s.p[None, :]
        single = True
    else:
        q, p = (np.asarray(a, dtype=float) for a in s)
        single = False
    qg = _ghost(cfg, q)
    pot = cfg.potential
    g = (p**2 + pot.v(q) + pot.u(qg[:, 1:-1] - qg[:, 2:])).sum(axis=1)
    return float(g[0]) if single else g


def fit_lyapunov_bound(phi: np.ndarray, g: np.ndarray, safety: float = 0.9) -> tuple:
    """Fits constants (c1, c2) with Phi >= c1 G - c2 on a probe set, by linear programming.

    Maximizes c1 (with a small penalty on c2) subject to the probe
    constraints, then shrinks c1 by ``safety`` and pads c2 so the frozen
    constants keep holding on states the probe set missed.
    """
    phi = np.asarray(phi, dtype=float)
    g = np.asarray(g, dtype=float)
    if phi.shape != g.shape or phi.ndim != 1 or phi.size < 8:
        raise ConfigError("need matching 1-d probe arrays with at least 8 states")
    a_ub = np.column_stack([g, -np.ones_like(g)])
    res = _sp_optimize.linprog(
        c=[-1.0, 1e-3], A_ub=a_ub, b_ub=phi,
        bounds=[(1e-12, None), (0.0, 1e9)], method="highs",
    )
    if not res.success:
        raise ConfigError(f"Lyapunov bound fit infeasible: {res.message}")
    c1, c2 = res.x
    return float(safety * c1), float(c2 * 1.05 + 1e-9)
