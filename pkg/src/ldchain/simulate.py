"""Langevin simulation of the thermostated chain with reproducible noise streams.

Every replica draws its noise from one counter-based stream per site, keyed
as SeedSequence(seed, spawn_key=(replica, site)) over the Philox generator,
so results are bit-identical for a fixed (seed, scheme, dt, replica) no
matter how replicas are scheduled.  Replica statistics are merged with
NumPy's pairwise summation to keep the merge order out of the result.

The default integrator splits the dynamics as half kick / half drift /
exact friction-noise update / half drift (BAOA); the exact
Ornstein-Uhlenbeck substep preserves the Gibbs momentum marginal exactly in
the free-particle limit.  Plain Euler-Maruyama is kept as the
low-order reference scheme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chain import (ChainConfig, ReferenceMeasureSpec, State, bond_currents,
                    chain_config_to_dict, drive_field, grad_potential,
                    sigma_coefficients)
from .curves import ScgfCurve, content_hash
from .errors import BlowupError, ConfigError

__all__ = [
    "SimSpec", "TrajectoryStats", "integrate", "evolve_state",
    "current_sign_test", "empirical_scgf", "gc_histogram_check",
]

_SCHEMES = {
    "baoa": "baoa", "splittingbaoa": "baoa", "splitting": "baoa",
    "euler": "euler", "eulermaruyama": "euler", "euler-maruyama": "euler",
}
_CHUNK = 65536


@dataclass(frozen=True)
class SimSpec:
    """Integration window, step size, seed, scheme, and replica count."""

    dt: float
    t_burn: float
    t_sample: float
    seed: int
    scheme: str = "baoa"
    n_replicas: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.t_burn < 0 or self.t_sample <= 0:
            raise ConfigError("t_burn must be >= 0 and t_sample > 0")
        if self.t_sample < 100 * self.dt:
            raise ConfigError("t_sample must cover at least 100 steps")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must fit an unsigned 64-bit integer")
        key = str(self.scheme).lower().replace("_", "")
        if key not in _SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.n_replicas < 1:
            raise ConfigError("need at least one replica")
        object.__setattr__(self, "scheme", _SCHEMES[key])


@dataclass
class TrajectoryStats:
    """Time-averaged observables pooled over replicas, plus per-replica arrays.

    ``integrated_sigma`` is the mean over replicas of the time integral of
    sigma over the sampling window; ``covariance_est`` is the second moment
    of (q, p) about the pooled sample mean.  Standard errors come from
    block means over chunks of ~65k steps, which dwarf the relaxation time
    for any sane friction.
    """

    time_avg_current: float
    kinetic_temps: np.ndarray
    covariance_est: np.ndarray
    integrated_sigma: float
    per_replica_current: np.ndarray
    per_replica_kinetic: np.ndarray
    per_replica_covariance: np.ndarray
    per_replica_sigma: np.ndarray
    stderr_current: float
    stderr_kinetic: np.ndarray
    stderr_sigma: float
    n_steps: int
    t_sample: float

    def to_json_dict(self, cfg: ChainConfig | None = None, sim: SimSpec | None = None) -> dict:
        doc = {
            "kind": "trajectory_stats",
            "time_avg_current": self.time_avg_current,
            "kinetic_temps": self.kinetic_temps.tolist(),
            "covariance_est": self.covariance_est.tolist(),
            "integrated_sigma": self.integrated_sigma,
            "per_replica_current": self.per_replica_current.tolist(),
            "per_replica_sigma": self.per_replica_sigma.tolist(),
            "stderr_current": self.stderr_current,
            "stderr_kinetic": self.stderr_kinetic.tolist(),
            "stderr_sigma": self.stderr_sigma,
            "n_steps": self.n_steps,
            "t_sample": self.t_sample,
        }
        provenance = {}
        if cfg is not None:
            provenance["chain"] = chain_config_to_dict(cfg)
        if sim is not None:
            provenance["sim"] = {
                "dt": sim.dt, "t_burn": sim.t_burn, "t_sample": sim.t_sample,
                "seed": int(sim.seed), "scheme": sim.scheme, "n_replicas": sim.n_replicas,
            }
        doc["provenance"] = provenance
        doc["content_hash"] = content_hash(doc)
        return doc


def _stability_advisory(cfg: ChainConfig, sim: SimSpec) -> None:
    w_max = math.sqrt(cfg.potential.omega0**2 + 4.0 * cfg.potential.omega**2) \
        if cfg.potential.is_harmonic else 0.0
    scale = max(float(np.max(cfg.gamma)), w_max)
    if sim.dt * scale >= 0.5:
        warnings.warn(
            f"dt * max(gamma, omega_k) = {sim.dt * scale:.3g} >= 0.5; "
            "the integrator may be unstable", UserWarning)


def _site_arrays(cfg: ChainConfig):
    n = cfg.n
    idx = np.arange(n)
    if cfg.periodic:
        left = (idx - 1) % n
        right = (idx + 1) % n
        lmask = np.ones(n)
        rmask = np.ones(n)
        wl = np.ones(n)
        wr = np.ones(n)
        bond_a = idx
        bond_b = (idx + 1) % n
    else:
        left = np.maximum(idx - 1, 0)
        right = np.minimum(idx + 1, n - 1)
        lmask = np.ones(n)
        rmask = np.ones(n)
        lmask[0] = 0.0
        rmask[-1] = 0.0
        wl = np.ones(n)
        wr = np.ones(n)
        wl[0] = 0.5
        wr[-1] = 0.5
        bond_a = idx[:-1]
        bond_b = idx[1:]
    th = cfg.effective_theta()
    th_prev = np.roll(th, 1) if cfg.periodic else np.concatenate(([0.0], th[:-1]))
    return (left.astype(np.int64), right.astype(np.int64), lmask, rmask, wl, wr,
            th, th_prev, bond_a.astype(np.int64), bond_b.astype(np.int64))


def _canonical_sigma_coefficients(cfg: ChainConfig) -> np.ndarray:
    ref = ReferenceMeasureSpec(beta=1.0 / cfg.temperature)
    return sigma_coefficients(cfg, ref)


def _py_step_block(cfg, scheme, q, p, noise, dt, c1, c2, sigma_coef, accumulate,
                   acc_p2, acc_x, acc_xx, carry):
    """NumPy fallback with the same semantics as the compiled kernels (any potential)."""
    n = cfg.n
    sum_j = 0.0
    sum_sig = 0.0
    j_prev, sig_prev = carry
    if cfg.periodic:
        bond_a = np.arange(n)
        bond_b = (bond_a + 1) % n
    else:
        bond_a = np.arange(n - 1)
        bond_b = bond_a + 1
    for t in range(noise.shape[0]):
        force = -grad_potential(cfg, q) + drive_field(cfg, q)
        if scheme == "baoa":
            p += 0.5 * dt * force
            q += 0.5 * dt * p
            p_old = p.copy()
            p[:] = c1 * p + c2 * noise[t]
            pm = 0.5 * (p_old + p)
            jb = -0.5 * cfg.potential.du(q[bond_a] - q[bond_b]) * (pm[bond_a] + pm[bond_b])
            sum_j += float(np.sum(jb)) / n
            sum_sig += float(np.dot(sigma_coef, jb))
            q += 0.5 * dt * p
            p += 0.5 * dt * (-grad_potential(cfg, q) + drive_field(cfg, q))
        else:
            qn = q + dt * p
            p += dt * (force - cfg.gamma * p) + c2 * noise[t]
            q[:] = qn
            jb = -0.5 * cfg.potential.du(q[bond_a] - q[bond_b]) * (p[bond_a] + p[bond_b])
            j_new = float(np.sum(jb)) / n
            sig_new = float(np.dot(sigma_coef, jb))
            sum_j += 0.5 * (j_prev + j_new)
            sum_sig += 0.5 * (sig_prev + sig_new)
            j_prev, sig_prev = j_new, sig_new
        if np.max(np.abs(q)) > 1e12 or np.max(np.abs(p)) > 1e12:
            return sum_j, sum_sig, (j_prev, sig_prev), t
        if accumulate:
            acc_p2 += p**2
            x = np.concatenate([q, p])
            acc_x += x
            acc_xx += np.triu(np.outer(x, x))
    return sum_j, sum_sig, (j_prev, sig_prev), -1


def _run_replica(cfg: ChainConfig, sim: SimSpec, init: State, replica: int):
    n = cfg.n
    dt = sim.dt
    n_burn = int(round(sim.t_burn / dt))
    n_samp = int(round(sim.t_sample / dt))
    gens = [np.random.Generator(np.random.Philox(
        np.random.SeedSequence(int(sim.seed), spawn_key=(replica, site))))
        for site in range(n)]

    q = init.q.copy()
    p = init.p.copy()
    c1 = np.exp(-cfg.gamma * dt)
    c2 = np.sqrt(cfg.temperature * (1.0 - c1**2))
    noise_amp = np.sqrt(2.0 * cfg.gamma * cfg.temperature * dt)
    sigma_coef = _canonical_sigma_coefficients(cfg)

    acc_p2 = np.zeros(n)
    acc_x = np.zeros(2 * n)
    acc_xx = np.zeros((2 * n, 2 * n))
    chunk_means_j = []
    chunk_means_sig = []
    chunk_means_p2 = []
    sum_j_tot = 0.0
    sum_sig_tot = 0.0

    use_kernel = cfg.potential.is_harmonic
    if use_kernel:
        om0sq = cfg.potential.omega0**2
        omsq = cfg.potential.omega**2
        (left, right, lmask, rmask, wl, wr, th, th_prev,
         bond_a, bond_b) = _site_arrays(cfg)
    carry = (0.0, 0.0)
    if sim.scheme == "euler":
        jb = bond_currents(cfg, State(q=q, p=p))
        carry = (float(np.sum(jb)) / n, float(np.dot(sigma_coef, jb)))

    done = 0
    total = n_burn + n_samp
    # block length for standard errors: ~32 blocks, each far beyond the
    # relaxation time, capped by the noise-buffer chunk
    block = min(_CHUNK, max(256, n_samp // 32))
    prev_p2 = np.zeros(n)
    while done < total:
        if done < n_burn:
            todo = min(_CHUNK, n_burn - done)
        else:
            todo = min(block, total - done)
        accumulate = done >= n_burn
        noise = np.column_stack([g.standard_normal(todo) for g in gens])
        if use_kernel:
            if sim.scheme == "baoa":
                out = _kernels.baoa_chunk(
                    q, p, noise, dt, om0sq, omsq, c1, c2,
                    left, right, lmask, rmask, wl, wr, th, th_prev, cfg.temperature,
                    bond_a, bond_b, sigma_coef, accumulate, acc_p2, acc_x, acc_xx)
            else:
                out = _kernels.em_chunk(
                    q, p, noise, dt, om0sq, omsq, cfg.gamma, noise_amp,
                    left, right, lmask, rmask, wl, wr, th, th_prev, cfg.temperature,
                    bond_a, bond_b, sigma_coef, accumulate, carry[0], carry[1],
                    acc_p2, acc_x, acc_xx)
            sum_j, sum_sig, j_last, sig_last, blow = out
            carry = (j_last, sig_last)
        else:
            amp = c2 if sim.scheme == "baoa" else noise_amp
            sum_j, sum_sig, carry, blow = _py_step_block(
                cfg, sim.scheme, q, p, noise, dt, c1, amp, sigma_coef, accumulate,
                acc_p2, acc_x, acc_xx, carry)
        if blow >= 0:
            raise BlowupError(step=done + int(blow), replica=replica)
        if accumulate:
            sum_j_tot += sum_j
            sum_sig_tot += sum_sig
            if todo == block:
                chunk_means_j.append(sum_j / todo)
                chunk_means_sig.append(sum_sig / todo)
                chunk_means_p2.append((acc_p2 - prev_p2) / todo)
            prev_p2 = acc_p2.copy()
        done += todo

    mean_x = acc_x / n_samp
    second = acc_xx / n_samp
    second = second + np.triu(second, 1).T
    cov = second - np.outer(mean_x, mean_x)
    cov = 0.5 * (cov + cov.T)
    return {
        "current": sum_j_tot / n_samp,
        "kinetic": acc_p2 / n_samp,
        "cov": cov,
        "sigma_integral": sum_sig_tot * dt,
        "chunk_j": chunk_means_j,
        "chunk_sig": chunk_means_sig,
        "chunk_p2": chunk_means_p2,
        "final_state": State(q=q, p=p),
    }


def integrate(cfg: ChainConfig, sim: SimSpec, init: State | None = None) -> TrajectoryStats:
    """Evolves the chain and accumulates time-averaged observables.

    The burn-in window is discarded; statistics cover exactly
    round(t_sample/dt) steps.  Bit-reproducible for fixed
    (seed, scheme, dt, replica index).  Aborts with :class:`BlowupError`
    naming the failing step if any coordinate exceeds 1e12.
    """
    if init is None:
        init = State(q=np.zeros(cfg.n), p=np.zeros(cfg.n))
    if init.n != cfg.n:
        raise ConfigError("initial state dimension mismatch")
    _stability_advisory(cfg, sim)

    reps = [_run_replica(cfg, sim, init, r) for r in range(sim.n_replicas)]
    cur = np.array([r["current"] for r in reps])
    kin = np.array([r["kinetic"] for r in reps])
    cov = np.array([r["cov"] for r in reps])
    sig = np.array([r["sigma_integral"] for r in reps])

    chunk_j = np.concatenate([r["chunk_j"] for r in reps]) if reps[0]["chunk_j"] \
        else cur.copy()
    chunk_sig = np.concatenate([r["chunk_sig"] for r in reps]) if reps[0]["chunk_sig"] \
        else sig / sim.t_sample
    chunk_p2 = np.concatenate([np.asarray(r["chunk_p2"]).reshape(-1, cfg.n)
                               for r in reps]) if reps[0]["chunk_p2"] \
        else kin.copy()

    def block_stderr(blocks):
        m = blocks.shape[0]
        if m < 2:
            return np.full(blocks.shape[1:], np.inf) if blocks.ndim > 1 else float("inf")
        return np.std(blocks, axis=0, ddof=1) / math.sqrt(m)

    n_steps = int(round(sim.t_sample / sim.dt))
    return TrajectoryStats(
        time_avg_current=float(np.mean(cur)),
        kinetic_temps=np.mean(kin, axis=0),
        covariance_est=np.mean(cov, axis=0),
        integrated_sigma=float(np.mean(sig)),
        per_replica_current=cur,
        per_replica_kinetic=kin,
        per_replica_covariance=cov,
        per_replica_sigma=sig,
        stderr_current=float(block_stderr(chunk_j)),
        stderr_kinetic=np.atleast_1d(block_stderr(chunk_p2)),
        stderr_sigma=float(block_stderr(chunk_sig) * sim.t_sample),
        n_steps=n_steps,
        t_sample=sim.t_sample,
    )


def evolve_state(cfg: ChainConfig, dt: float, n_steps: int, init: State,
                 scheme: str = "baoa", seed: int = 0) -> State:
    """Advances a single trajectory for exactly n_steps and returns the final state."""
    key = _SCHEMES.get(str(scheme).lower().replace("_", ""))
    if key is None:
        raise ConfigError(f"unknown scheme {scheme!r}")
    q = init.q.copy()
    p = init.p.copy()
    c1 = np.exp(-cfg.gamma * dt)
    c2 = np.sqrt(cfg.temperature * (1.0 - c1**2))
    amp = c2 if key == "baoa" else np.sqrt(2.0 * cfg.gamma * cfg.temperature * dt)
    gens = [np.random.Generator(np.random.Philox(
        np.random.SeedSequence(int(seed), spawn_key=(0, site))))
        for site in range(cfg.n)]
    sigma_coef = _canonical_sigma_coefficients(cfg)
    acc = (np.zeros(cfg.n), np.zeros(2 * cfg.n), np.zeros((2 * cfg.n, 2 * cfg.n)))
    done = 0
    carry = (0.0, 0.0)
    while done < n_steps:
        todo = min(_CHUNK, n_steps - done)
        noise = np.column_stack([g.standard_normal(todo) for g in gens])
        _, _, carry, blow = _py_step_block(cfg, key, q, p, noise, dt, c1, amp,
                                           sigma_coef, False, *acc, carry)
        if blow >= 0:
            raise BlowupError(step=done + int(blow))
        done += todo
    return State(q=q, p=p)


def current_sign_test(cfg: ChainConfig, sim: SimSpec) -> dict:
    """Sign of the stationary current against the drive: tau <J> > 0.

    Returns {"mean", "stderr", "pass"}; the test passes when tau * mean > 0
    and |mean| clears 3 standard errors.
    """
    if cfg.tau == 0.0:
        raise ConfigError("current_sign_test requires a non-zero drive tau")
    if not cfg.periodic or np.ptp(cfg.temperature) != 0.0:
        raise ConfigError("current_sign_test is defined for periodic chains at uniform T")
    if cfg.potential.is_harmonic and cfg.potential.omega == 0.0:
        raise ConfigError("need a genuine pair interaction (omega != 0)")
    stats = integrate(cfg, sim)
    mean = stats.time_avg_current
    stderr = stats.stderr_current
    passed = bool(cfg.tau * mean > 0.0 and abs(mean) > 3.0 * stderr)
    return {"mean": mean, "stderr": stderr, "pass": passed}


def empirical_scgf(cfg: ChainConfig, sim: SimSpec, lambda_grid) -> ScgfCurve:
    """Naive replica estimator of the SCGF, with jackknife errors and ESS flags.

    F(lambda) ~ (1/t) log mean_r exp(lambda W_r) with W_r = N integral of J
    over the sampling window of replica r.  The estimator degenerates when a
    handful of replicas dominates the exponential average; entries with an
    effective sample size below 10 are flagged rather than hidden.  Deep
    tails are out of reach by construction (variance grows exponentially in
    lambda^2 t); this is documented behaviour, not a bug to tune away.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ConfigError("lambda_grid must be a non-empty 1-d array")
    if sim.n_replicas < 2:
        raise ConfigError("empirical_scgf needs at least 2 replicas")
    if sim.n_replicas < 100:
        warnings.warn("fewer than 100 replicas: exponential averages will be noisy",
                      UserWarning)
    adv = 0.2 * float(np.min(cfg.gamma)) / float(np.max(cfg.temperature)) \
        if np.min(cfg.gamma) > 0 else np.inf
    if np.max(np.abs(cfg.n * lam)) > adv:
        warnings.warn(
            f"|N lambda| exceeds the advisory bound {adv:.3g} (heuristic validity "
            "range of the naive estimator)", UserWarning)

    stats = integrate(cfg, sim)
    t = sim.t_sample
    w = cfg.n * t * stats.per_replica_current
    r = w.size

    values = np.empty(lam.size)
    stderrs = np.empty(lam.size)
    esses = np.empty(lam.size)
    flags = np.zeros(lam.size, dtype=bool)
    for i, l in enumerate(lam):
        x = l * w
        shift = np.max(x)
        if not np.isfinite(shift):
            values[i] = math.inf
            stderrs[i] = math.inf
            esses[i] = 0.0
            flags[i] = True
            continue
        expx = np.exp(x - shift)
        total = float(np.sum(expx))
        values[i] = (shift + math.log(total / r)) / t
        esses[i] = total**2 / float(np.sum(expx**2))
        loo = (shift + np.log(np.maximum(total - expx, 1e-300) / (r - 1))) / t
        stderrs[i] = math.sqrt((r - 1) / r * float(np.sum((loo - np.mean(loo)) ** 2)))
        flags[i] = esses[i] < 10.0
    return ScgfCurve(
        lam=lam, value=values, method="empirical", n_sites=cfg.n, tau=cfg.tau,
        stderr=stderrs, ess=esses, flagged=flags,
        params={"chain": chain_config_to_dict(cfg),
                "sim": {"dt": sim.dt, "t_burn": sim.t_burn, "t_sample": sim.t_sample,
                        "seed": int(sim.seed), "scheme": sim.scheme,
                        "n_replicas": sim.n_replicas}},
    )


def gc_histogram_check(cfg: ChainConfig, sim: SimSpec, bins: int = 12) -> dict:
    """Finite-time fluctuation-symmetry check on the histogram of time-averaged sigma.

    Builds the replica histogram of w = (1/t) integral of sigma, and for
    every symmetric bin pair with at least 30 samples on each side computes
    d = (1/t) log(P(w ~ +s)/P(w ~ -s)) - s.  The symmetry is exact only as
    t -> infinity, so max |d| carries an O(1/t) finite-time correction plus
    sampling noise; it is a consistency indicator, not a sharp test.
    """
    if cfg.tau == 0.0:
        raise ConfigError("gc_histogram_check requires a non-zero drive tau "
                          "(sigma vanishes identically at equilibrium)")
    if not cfg.periodic or np.ptp(cfg.temperature) != 0.0:
        raise ConfigError("gc_histogram_check is defined for periodic chains at uniform T")
    if bins < 4 or bins % 2:
        raise ConfigError("bins must be an even integer >= 4")
    stats = integrate(cfg, sim)
    t = sim.t_sample
    w = stats.per_replica_sigma / t
    # a quantile edge keeps a stray replica from stretching the bins and
    # starving their mirrors of samples
    edge = float(np.quantile(np.abs(w), 0.98))
    if edge == 0.0:
        raise ConfigError("sigma samples are identically zero")
    edges = np.linspace(-edge, edge, bins + 1)
    counts, _ = np.histogram(w, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    half = bins // 2
    d_values = []
    s_values = []
    for k in range(half, bins):
        mirror = bins - 1 - k
        n_plus, n_minus = counts[k], counts[mirror]
        if n_plus >= 30 and n_minus >= 30:
            s = centers[k]
            d_values.append(math.log(n_plus / n_minus) / t - s)
            s_values.append(s)
    if len(d_values) < 2:
        raise ConfigError("fewer than 2 usable symmetric bin pairs; "
                          "increase replicas or reduce bins")
    return {
        "max_deviation": float(np.max(np.abs(d_values))),
        "sigma_values": np.array(s_values),
        "d_values": np.array(d_values),
        "n_pairs": len(d_values),
    }
