"""Oscillator-chain model: configuration, observables, drift fields, momentum reversal.

Conventions (used consistently everywhere in the package):

* sites are 1-based in the public API, matching the usual lattice notation;
* open boundaries pin ghost sites, ``q_0 = q_{N+1} = 0``, and bonds ``0`` and
  ``N`` carry no current; periodic boundaries identify indices mod N;
* the Hamiltonian splits the pair interaction symmetrically between the two
  sites of a bond, so wall bonds of an open chain enter with weight 1/2;
* the energy bookkeeping (``H = sum h_i``, local conservation) assumes a
  symmetric pair potential ``U(r) = U(-r)``; custom potentials are probed and
  a warning is emitted if they are visibly asymmetric.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

BOUNDARIES = ("periodic", "open")

_PROBE_GRID = np.linspace(-2.0, 2.0, 32)
_PROBE_STEP = 1e-5
_PROBE_RTOL = 1e-5


class PotentialConsistencyWarning(UserWarning):
    """A custom potential looks inconsistent (asymmetric U, convexity deficit)."""


def _check_derivative(f: Callable, df: Callable, name: str) -> None:
    x = _PROBE_GRID
    fd = (np.asarray(f(x + _PROBE_STEP)) - np.asarray(f(x - _PROBE_STEP))) / (2 * _PROBE_STEP)
    exact = np.asarray(df(x), dtype=float)
    err = np.abs(fd - exact)
    tol = _PROBE_RTOL * np.maximum(1.0, np.abs(exact))
    if np.any(err > tol):
        i = int(np.argmax(err - tol))
        raise ConfigError(
            f"custom potential: {name} disagrees with the central difference of its "
            f"antiderivative at x={x[i]:.4f} (|err|={err[i]:.3e})"
        )


@dataclass(frozen=True)
class PotentialSpec:
    """On-site potential V and pair potential U with their derivatives.

    ``kind`` is ``"harmonic"`` (V = omega0^2 q^2/2, U = omega^2 r^2/2) or
    ``"custom"`` with user-supplied vectorized callables.  ``delta`` is the
    convexity constant entering the sufficient conditions for the large
    deviation principle; it is derived for harmonic potentials and
    user-asserted for custom ones (violations are flagged, not rejected).
    """

    kind: str
    omega0: float = 0.0
    omega: float = 0.0
    delta: float = 0.0
    v_fn: Optional[Callable] = None
    u_fn: Optional[Callable] = None
    dv_fn: Optional[Callable] = None
    du_fn: Optional[Callable] = None
    d2v_fn: Optional[Callable] = None
    d2u_fn: Optional[Callable] = None

    @property
    def is_harmonic(self) -> bool:
        return self.kind == "harmonic"

    def v(self, q):
        if self.is_harmonic:
            return 0.5 * self.omega0**2 * np.square(q)
        return self.v_fn(q)

    def u(self, r):
        if self.is_harmonic:
            return 0.5 * self.omega**2 * np.square(r)
        return self.u_fn(r)

    def dv(self, q):
        if self.is_harmonic:
            return self.omega0**2 * np.asarray(q, dtype=float)
        return self.dv_fn(q)

    def du(self, r):
        if self.is_harmonic:
            return self.omega**2 * np.asarray(r, dtype=float)
        return self.du_fn(r)

    def d2v(self, q):
        if self.is_harmonic:
            return np.full_like(np.asarray(q, dtype=float), self.omega0**2)
        return self.d2v_fn(q)

    def d2u(self, r):
        if self.is_harmonic:
            return np.full_like(np.asarray(r, dtype=float), self.omega**2)
        return self.d2u_fn(r)


def harmonic_potential(omega0: float, omega: float, delta: float | None = None) -> PotentialSpec:
    """Pinned harmonic potential; ``delta`` defaults to min(omega0^2, 1/(2 omega^2))."""
    if omega0 < 0 or omega <= 0:
        raise ConfigError("harmonic potential requires omega0 >= 0 and omega > 0")
    if delta is None:
        delta = min(omega0**2, 0.5 / omega**2) if omega0 > 0 else 0.0
    return PotentialSpec(kind="harmonic", omega0=float(omega0), omega=float(omega), delta=float(delta))


def custom_potential(v, u, dv, du, d2v, d2u, delta: float) -> PotentialSpec:
    """Custom potential from vectorized callables; derivative consistency is probed.

    The probe compares each supplied derivative against a central difference of
    the function one order below on 32 points in [-2, 2] (rel. tol 1e-5), so a
    mistyped drift field fails loudly at construction rather than silently in
    the dynamics.
    """
    if delta <= 0:
        raise ConfigError("custom potentials require a positive user-asserted delta")
    _check_derivative(v, dv, "V'")
    _check_derivative(u, du, "U'")
    _check_derivative(dv, d2v, "V''")
    _check_derivative(du, d2u, "U''")
    asym = np.max(np.abs(np.asarray(u(_PROBE_GRID)) - np.asarray(u(-_PROBE_GRID))))
    if asym > 1e-10 * max(1.0, float(np.max(np.abs(u(_PROBE_GRID))))):
        warnings.warn(
            "pair potential U is asymmetric; H = sum of local energies and the local "
            "conservation law hold only for symmetric U",
            PotentialConsistencyWarning,
        )
    return PotentialSpec(
        kind="custom", delta=float(delta),
        v_fn=v, u_fn=u, dv_fn=dv, du_fn=du, d2v_fn=d2v, d2u_fn=d2u,
    )


@dataclass(frozen=True)
class State:
    """Phase-space point (q, p) of an N-site chain."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.ndim != 1 or p.shape != q.shape:
            raise ConfigError("State requires equal-length 1-d position and momentum vectors")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ConfigError("State entries must be finite")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class ReferenceMeasureSpec:
    """Inverse temperatures beta_i of the local-Gibbs reference density.

    The compatibility requirement beta_i = 1/T_i at thermostated sites is a
    property of the detailed-balance check, not of this container, and is
    enforced there.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1 or np.any(beta <= 0) or not np.all(np.isfinite(beta)):
            raise ConfigError("reference measure requires a vector of positive finite beta_i")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class ChainConfig:
    """Chain geometry, potentials, thermostat profile and drive profile.

    ``tau`` (uniform asymmetric drive on a periodic chain at uniform
    temperature) and a non-zero ``theta`` profile are alternative
    parameterizations of the same mechanical force and are mutually exclusive.
    All arrays are frozen after construction; every operation in this module
    is a pure function of its inputs.
    """

    n: int
    boundary: str
    potential: PotentialSpec
    gamma: np.ndarray
    temperature: np.ndarray
    theta: np.ndarray = None
    tau: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("need at least one oscillator")
        if self.boundary not in BOUNDARIES:
            raise ConfigError(f"boundary must be one of {BOUNDARIES}")
        gamma = np.array(self.gamma, dtype=float)
        temperature = np.array(self.temperature, dtype=float)
        theta = np.zeros(self.n) if self.theta is None else np.array(self.theta, dtype=float)
        for name, vec in (("gamma", gamma), ("temperature", temperature), ("theta", theta)):
            if vec.shape != (self.n,):
                raise ConfigError(f"{name} must have length N={self.n}")
            if not np.all(np.isfinite(vec)):
                raise ConfigError(f"{name} entries must be finite")
        if np.any(temperature <= 0):
            raise ConfigError("all temperatures must be positive")
        if np.any(gamma < 0):
            raise ConfigError("frictions must be non-negative")
        if self.boundary == "open" and theta[-1] != 0.0:
            raise ConfigError("open chains require theta_N = 0 (no bond N)")
        if self.tau != 0.0:
            if np.any(theta != 0.0):
                raise ConfigError("tau and a non-zero theta profile are mutually exclusive")
            if self.boundary != "periodic":
                raise ConfigError("the uniform drive tau is defined on periodic chains only")
            if np.ptp(temperature) != 0.0:
                raise ConfigError("the uniform drive tau requires a uniform temperature")
        for vec in (gamma, temperature, theta):
            vec.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "temperature", temperature)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def n_bonds(self) -> int:
        return self.n if self.periodic else self.n - 1

    def effective_theta(self) -> np.ndarray:
        """Drive profile with the uniform tau converted to its theta equivalent.

        Matching the uniform-drive generator against the per-bond one gives
        theta_i = tau / T^2 (this also reproduces sigma = tau N / T^2 * J).
        """
        if self.tau != 0.0:
            return np.full(self.n, self.tau / self.temperature[0] ** 2)
        return self.theta.copy()


def uniform_chain(n: int, boundary: str = "periodic", omega0: float = 1.0, omega: float = 1.0,
                  gamma: float = 1.0, temperature: float = 1.0, tau: float = 0.0,
                  theta=None) -> ChainConfig:
    """Convenience constructor for chains with site-independent parameters."""
    return ChainConfig(
        n=n, boundary=boundary, potential=harmonic_potential(omega0, omega),
        gamma=np.full(n, float(gamma)), temperature=np.full(n, float(temperature)),
        theta=theta, tau=tau,
    )


def _ghosted(cfg: ChainConfig, q: np.ndarray) -> np.ndarray:
    """Positions padded with the boundary convention: ghosts q_0 and q_{N+1}."""
    if cfg.periodic:
        return np.concatenate(([q[-1]], q, [q[0]]))
    return np.concatenate(([0.0], q, [0.0]))


def _check_state(cfg: ChainConfig, s: State) -> None:
    if s.n != cfg.n:
        raise ConfigError(f"state has {s.n} sites, config has {cfg.n}")


def hamiltonian(cfg: ChainConfig, s: State) -> float:
    """Total energy H(q, p)."""
    _check_state(cfg, s)
    qg = _ghosted(cfg, s.q)
    pot = cfg.potential
    fwd = qg[2:] - qg[1:-1]      # q_{i+1} - q_i
    bwd = qg[1:-1] - qg[:-2]     # q_i - q_{i-1}
    return float(np.sum(0.5 * s.p**2 + pot.v(s.q) + 0.5 * (pot.u(fwd) + pot.u(bwd))))


def local_energy(cfg: ChainConfig, s: State, i: int) -> float:
    """Local energy h_i of site i (1-based); H = sum_i h_i."""
    _check_state(cfg, s)
    if not 1 <= i <= cfg.n:
        raise ConfigError(f"site index {i} out of range 1..{cfg.n}")
    qg = _ghosted(cfg, s.q)
    pot = cfg.potential
    q_i, q_prev, q_next = qg[i], qg[i - 1], qg[i + 1]
    return float(0.5 * s.p[i - 1] ** 2 + pot.v(q_i) + 0.5 * (pot.u(q_i - q_next) + pot.u(q_prev - q_i)))


def local_current(cfg: ChainConfig, s: State, i: int) -> float:
    """Energy current j_i = -1/2 U'(q_i - q_{i+1})(p_i + p_{i+1}) through bond i.

    Bonds are 1..N-1 for open chains (wall bonds carry no current) and 1..N
    for periodic ones, bond N joining sites N and 1.
    """
    _check_state(cfg, s)
    if not 1 <= i <= cfg.n_bonds:
        raise ConfigError(f"bond index {i} out of range 1..{cfg.n_bonds}")
    q, p = s.q, s.p
    a = i - 1
    b = i % cfg.n
    return float(-0.5 * cfg.potential.du(q[a] - q[b]) * (p[a] + p[b]))


def bond_currents(cfg: ChainConfig, s: State) -> np.ndarray:
    """All bond currents (j_1 .. j_{n_bonds}) as one vector."""
    _check_state(cfg, s)
    q, p = s.q, s.p
    if cfg.periodic:
        dq = q - np.roll(q, -1)
        psum = p + np.roll(p, -1)
    else:
        dq = q[:-1] - q[1:]
        psum = p[:-1] + p[1:]
    return -0.5 * cfg.potential.du(dq) * psum


def mean_current(cfg: ChainConfig, s: State) -> float:
    """Spatial average J = (1/N) sum_i j_i."""
    return float(np.sum(bond_currents(cfg, s)) / cfg.n)


def grad_potential(cfg: ChainConfig, q: np.ndarray) -> np.ndarray:
    """Configurational force dH/dq; wall bonds of an open chain count with weight 1/2."""
    qg = _ghosted(cfg, np.asarray(q, dtype=float))
    pot = cfg.potential
    left = pot.du(qg[1:-1] - qg[:-2])    # U'(q_i - q_{i-1})
    right = pot.du(qg[2:] - qg[1:-1])    # U'(q_{i+1} - q_i)
    w_left = np.ones(cfg.n)
    w_right = np.ones(cfg.n)
    if not cfg.periodic:
        w_left[0] = 0.5
        w_right[-1] = 0.5
    return pot.dv(qg[1:-1]) + w_left * left - w_right * right


def drive_field(cfg: ChainConfig, q: np.ndarray) -> np.ndarray:
    """Mechanical drive on the momenta: -T_i/2 (theta_{i-1} U'(q_{i-1}-q_i) + theta_i U'(q_i-q_{i+1}))."""
    th = cfg.effective_theta()
    if not cfg.periodic and not np.any(th):
        return np.zeros(cfg.n)
    qg = _ghosted(cfg, np.asarray(q, dtype=float))
    th_prev = np.roll(th, 1) if cfg.periodic else np.concatenate(([0.0], th[:-1]))
    du_prev = cfg.potential.du(qg[:-2] - qg[1:-1])   # U'(q_{i-1} - q_i)
    du_next = cfg.potential.du(qg[1:-1] - qg[2:])    # U'(q_i - q_{i+1})
    return -0.5 * cfg.temperature * (th_prev * du_prev + th * du_next)


def drift(cfg: ChainConfig, s: State) -> np.ndarray:
    """Deterministic drift (dq/dt, dp/dt) of the full dynamics as one 2N vector."""
    _check_state(cfg, s)
    dp = -cfg.gamma * s.p - grad_potential(cfg, s.q) + drive_field(cfg, s.q)
    return np.concatenate([s.p, dp])


def sigma_value(cfg: ChainConfig, ref: ReferenceMeasureSpec, s: State) -> float:
    """Time-reversal breaking function sigma = sum_bonds (beta_i - beta_{i+1} + theta_i) j_i.

    For a periodic chain with uniform temperature and uniform drive tau this
    reduces to (tau N / T^2) J.
    """
    if ref.beta.shape != (cfg.n,):
        raise ConfigError("reference measure dimension mismatch")
    return float(np.dot(sigma_coefficients(cfg, ref), bond_currents(cfg, s)))


def sigma_coefficients(cfg: ChainConfig, ref: ReferenceMeasureSpec) -> np.ndarray:
    """Per-bond coefficients (beta_i - beta_{i+1} + theta_i) of sigma."""
    beta = ref.beta
    th = cfg.effective_theta()
    if cfg.periodic:
        return beta - np.roll(beta, -1) + th
    return beta[:-1] - beta[1:] + th[:-1]


def momentum_reversal(s: State) -> State:
    """Involution (q, p) -> (q, -p)."""
    return State(q=s.q.copy(), p=-s.p)


def force_matrix(cfg: ChainConfig) -> np.ndarray:
    """Hessian K of the configurational potential (harmonic chains only), dH/dq = K q."""
    if not cfg.potential.is_harmonic:
        raise ConfigError("force_matrix is defined for harmonic potentials only")
    n = cfg.n
    w0sq = cfg.potential.omega0**2
    wsq = cfg.potential.omega**2
    k = np.zeros((n, n))
    np.fill_diagonal(k, w0sq + 2.0 * wsq)
    for i in range(n - 1):
        k[i, i + 1] -= wsq
        k[i + 1, i] -= wsq
    if cfg.periodic:
        if n > 1:
            k[0, -1] -= wsq
            k[-1, 0] -= wsq
        else:
            k[0, 0] = w0sq  # single periodic site couples to itself: U terms vanish
    else:
        k[0, 0] -= 0.5 * wsq
        k[-1, -1] -= 0.5 * wsq
    return k


def prop1_advisory(cfg: ChainConfig, n_probe: int = 256, scale: float = 3.0,
                   seed: int = 0) -> dict:
    """Advisory check of the sufficient conditions for the large deviation principle.

    Probes V'' >= delta pointwise and the quadratic-growth inequality
    sum V + U >= delta sum U'^2 on random configurations.  The constants that
    bound the admissible drive and temperature profile are not explicit, so
    only the raw profile extrema are reported.  Advisory: a False flag does
    not mean the principle fails, only that the sufficient conditions were
    not verified.
    """
    rng = np.random.default_rng(seed)
    pot = cfg.potential
    delta = pot.delta
    grid = np.linspace(-scale, scale, 128)
    v_convex = bool(np.all(pot.d2v(grid) >= delta - 1e-12))
    qs = rng.normal(scale=scale, size=(n_probe, cfg.n))
    worst = np.inf
    for q in qs:
        qg = _ghosted(cfg, q)
        fwd = qg[2:] - qg[1:-1]
        lhs = float(np.sum(pot.v(q) + 0.5 * (pot.u(fwd) + pot.u(-fwd))))
        rhs = delta * float(np.sum(pot.du(-fwd) ** 2))
        worst = min(worst, lhs - rhs)
    th = cfg.effective_theta()
    return {
        "v_second_derivative_ok": v_convex,
        "growth_inequality_ok": bool(worst >= -1e-10),
        "growth_margin": float(worst),
        "all_sites_thermostated": bool(np.all(cfg.gamma > 0)),
        "max_abs_theta": float(np.max(np.abs(th))),
        "max_temperature_jump": float(np.max(np.abs(np.diff(cfg.temperature))) if cfg.n > 1 else 0.0),
    }


# -- JSON round trip ---------------------------------------------------------

_CHAIN_FIELDS = {"N", "boundary", "potential", "gamma", "temperature", "theta", "tau"}
_POTENTIAL_FIELDS = {"kind", "omega0", "omega", "delta"}


def chain_config_to_dict(cfg: ChainConfig) -> dict:
    """JSON-ready dict; custom potentials are not serializable (function handles)."""
    if not cfg.potential.is_harmonic:
        raise ConfigError("custom potentials carry function handles and cannot be serialized")
    return {
        "N": cfg.n,
        "boundary": cfg.boundary,
        "potential": {
            "kind": "harmonic",
            "omega0": cfg.potential.omega0,
            "omega": cfg.potential.omega,
            "delta": cfg.potential.delta,
        },
        "gamma": cfg.gamma.tolist(),
        "temperature": cfg.temperature.tolist(),
        "theta": cfg.theta.tolist(),
        "tau": cfg.tau,
    }


def chain_config_from_dict(doc: dict) -> ChainConfig:
    """Inverse of :func:`chain_config_to_dict`; unknown fields are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("chain config document must be a JSON object")
    unknown = set(doc) - _CHAIN_FIELDS
    if unknown:
        raise ConfigError(f"unknown chain config fields: {sorted(unknown)}")
    missing = {"N", "boundary", "potential", "gamma", "temperature"} - set(doc)
    if missing:
        raise ConfigError(f"missing chain config fields: {sorted(missing)}")
    pdoc = doc["potential"]
    if not isinstance(pdoc, dict):
        raise ConfigError("potential must be an object")
    unknown = set(pdoc) - _POTENTIAL_FIELDS
    if unknown:
        raise ConfigError(f"unknown potential fields: {sorted(unknown)}")
    if pdoc.get("kind") != "harmonic":
        raise ConfigError("only harmonic potentials are constructible from JSON")
    pot = harmonic_potential(pdoc.get("omega0", 0.0), pdoc.get("omega", 0.0),
                             delta=pdoc.get("delta"))
    return ChainConfig(
        n=int(doc["N"]),
        boundary=str(doc["boundary"]).lower(),
        potential=pot,
        gamma=doc["gamma"],
        temperature=doc["temperature"],
        theta=doc.get("theta"),
        tau=float(doc.get("tau", 0.0)),
    )


def chain_config_to_json(cfg: ChainConfig) -> str:
    return json.dumps(chain_config_to_dict(cfg), sort_keys=True)


def chain_config_from_json(text: str) -> ChainConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed chain config JSON: {exc}") from exc
    return chain_config_from_dict(doc)
