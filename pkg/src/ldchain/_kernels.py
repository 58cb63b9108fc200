"""Compiled inner loops of the Langevin integrators (harmonic chains).

Both kernels advance one chunk of steps in place and accumulate running
statistics.  They return ``(sum_J, sum_sigma, j_last, sigma_last, blow_step)``
where the sums are per-step samples of the spatially averaged current and of
sigma (midpoint samples for BAOA, trapezoid for Euler-Maruyama), and
``blow_step`` is the in-chunk step index at which |q| or |p| crossed the
1e12 safety bound (-1 if it never did).  Custom potentials use the plain
NumPy fallback in :mod:`ldchain.simulate` with identical semantics.
"""

import numba
import numpy as np

_BLOW = 1.0e12


@numba.njit(cache=True)
def _force_drive(q, om0sq, omsq, left, right, lmask, rmask, wl, wr, th, th_prev, temps, out):
    n = q.shape[0]
    for i in range(n):
        q_im1 = lmask[i] * q[left[i]]
        q_ip1 = rmask[i] * q[right[i]]
        du_bwd = omsq * (q_im1 - q[i])      # U'(q_{i-1} - q_i)
        du_fwd = omsq * (q[i] - q_ip1)      # U'(q_i - q_{i+1})
        grad = om0sq * q[i] - wl[i] * du_bwd + wr[i] * du_fwd
        drive = -0.5 * temps[i] * (th_prev[i] * du_bwd + th[i] * du_fwd)
        out[i] = -grad + drive


@numba.njit(cache=True)
def baoa_chunk(q, p, noise, dt, om0sq, omsq, c1, c2,
               left, right, lmask, rmask, wl, wr, th, th_prev, temps,
               bond_a, bond_b, sigma_coef, accumulate,
               acc_p2, acc_x, acc_xx):
    # symmetric splitting B(dt/2) A(dt/2) O(dt) A(dt/2) B(dt/2); the closing
    # half kick reuses the force of the next step's opening one, so each step
    # costs one fresh force evaluation and (q, p) stay time-synchronized
    # (velocity Verlet in the frictionless limit)
    n = q.shape[0]
    steps = noise.shape[0]
    n_bonds = bond_a.shape[0]
    force = np.empty(n)
    p_old = np.empty(n)
    sum_j = 0.0
    sum_sig = 0.0
    _force_drive(q, om0sq, omsq, left, right, lmask, rmask, wl, wr, th, th_prev,
                 temps, force)
    for t in range(steps):
        for i in range(n):
            p[i] += 0.5 * dt * force[i]
        for i in range(n):
            q[i] += 0.5 * dt * p[i]
        for i in range(n):
            p_old[i] = p[i]
            p[i] = c1[i] * p[i] + c2[i] * noise[t, i]
        # midpoint current sample: positions at mid-step, momenta averaged over
        # the exact friction/noise update
        j_step = 0.0
        sig_step = 0.0
        for b in range(n_bonds):
            a = bond_a[b]
            bb = bond_b[b]
            pm = 0.5 * (p_old[a] + p[a] + p_old[bb] + p[bb])
            jb = -0.5 * omsq * (q[a] - q[bb]) * pm
            j_step += jb
            sig_step += sigma_coef[b] * jb
        sum_j += j_step / n
        sum_sig += sig_step
        for i in range(n):
            q[i] += 0.5 * dt * p[i]
        _force_drive(q, om0sq, omsq, left, right, lmask, rmask, wl, wr, th, th_prev,
                     temps, force)
        for i in range(n):
            p[i] += 0.5 * dt * force[i]
        bad = False
        for i in range(n):
            if abs(q[i]) > _BLOW or abs(p[i]) > _BLOW:
                bad = True
        if bad:
            return sum_j, sum_sig, 0.0, 0.0, t
        if accumulate:
            for i in range(n):
                acc_p2[i] += p[i] * p[i]
                acc_x[i] += q[i]
                acc_x[n + i] += p[i]
            for i in range(n):
                for j in range(i, n):
                    acc_xx[i, j] += q[i] * q[j]
                    acc_xx[i, n + j] += q[i] * p[j]
                    acc_xx[n + i, n + j] += p[i] * p[j]
                for j in range(i):
                    acc_xx[i, n + j] += q[i] * p[j]
    return sum_j, sum_sig, 0.0, 0.0, -1


@numba.njit(cache=True)
def em_chunk(q, p, noise, dt, om0sq, omsq, gamma, noise_amp,
             left, right, lmask, rmask, wl, wr, th, th_prev, temps,
             bond_a, bond_b, sigma_coef, accumulate,
             j_prev, sig_prev,
             acc_p2, acc_x, acc_xx):
    n = q.shape[0]
    steps = noise.shape[0]
    n_bonds = bond_a.shape[0]
    force = np.empty(n)
    sum_j = 0.0
    sum_sig = 0.0
    for t in range(steps):
        _force_drive(q, om0sq, omsq, left, right, lmask, rmask, wl, wr, th, th_prev,
                     temps, force)
        for i in range(n):
            qn = q[i] + dt * p[i]
            p[i] += dt * (force[i] - gamma[i] * p[i]) + noise_amp[i] * noise[t, i]
            q[i] = qn
        j_new = 0.0
        sig_new = 0.0
        for b in range(n_bonds):
            a = bond_a[b]
            bb = bond_b[b]
            jb = -0.5 * omsq * (q[a] - q[bb]) * (p[a] + p[bb])
            j_new += jb
            sig_new += sigma_coef[b] * jb
        j_new /= n
        sum_j += 0.5 * (j_prev + j_new)
        sum_sig += 0.5 * (sig_prev + sig_new)
        j_prev = j_new
        sig_prev = sig_new
        bad = False
        for i in range(n):
            if abs(q[i]) > _BLOW or abs(p[i]) > _BLOW:
                bad = True
        if bad:
            return sum_j, sum_sig, j_prev, sig_prev, t
        if accumulate:
            for i in range(n):
                acc_p2[i] += p[i] * p[i]
                acc_x[i] += q[i]
                acc_x[n + i] += p[i]
            for i in range(n):
                for j in range(i, n):
                    acc_xx[i, j] += q[i] * q[j]
                    acc_xx[i, n + j] += q[i] * p[j]
                    acc_xx[n + i, n + j] += p[i] * p[j]
                for j in range(i):
                    acc_xx[i, n + j] += q[i] * p[j]
    return sum_j, sum_sig, j_prev, sig_prev, -1
