"""Fixed-step fourth-order integrator for the essential-states amplitudes.

The compiled extension ``foxli._kernels`` is used when available; the
numpy implementation below is the behavioral reference and the fallback.
``foxli.integrate.BACKEND`` reports which one is active.
"""

from __future__ import annotations

import numpy as np

try:
    from . import _kernels

    BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    _kernels = None
    BACKEND = "python"


def evolve_rk4_numpy(g_a, g_b, delta, dt, n_steps, save_every):
    """Reference integrator.

    Amplitude equations (interaction picture, hbar = 1):

        d(ce)/dt   =  i * sum_n (g_a exp(i d t) ca + g_b exp(i d t) cb)
        d(ca_n)/dt = -i * g_b_n exp(-i d_n t) ce
        d(cb_n)/dt = -i * g_a_n exp(-i d_n t) ce

    Phases are advanced multiplicatively per step; saves every
    ``save_every`` steps including t = 0.
    """
    g_a = np.asarray(g_a, dtype=np.complex128)
    g_b = np.asarray(g_b, dtype=np.complex128)
    delta = np.asarray(delta, dtype=np.float64)
    n = len(g_a)
    if n_steps % save_every != 0:
        raise ValueError("n_steps must be a multiple of save_every")
    n_save = n_steps // save_every + 1

    ce_out = np.empty(n_save, dtype=np.complex128)
    ca_out = np.empty((n_save, n), dtype=np.complex128)
    cb_out = np.empty((n_save, n), dtype=np.complex128)

    ce = 1.0 + 0.0j
    ca = np.zeros(n, dtype=np.complex128)
    cb = np.zeros(n, dtype=np.complex128)
    ph = np.ones(n, dtype=np.complex128)
    f_half = np.exp(0.5j * dt * delta)
    f_full = np.exp(1j * dt * delta)

    ce_out[0] = ce
    ca_out[0] = ca
    cb_out[0] = cb
    s_idx = 1

    def rhs(phase, ce_s, ca_s, cb_s):
        dce = 1j * np.sum(g_a * phase * ca_s + g_b * phase * cb_s)
        w = np.conj(phase) * ce_s
        return dce, -1j * g_b * w, -1j * g_a * w

    for step in range(n_steps):
        ph_h = ph * f_half
        ph_f = ph * f_full
        ke1, ka1, kb1 = rhs(ph, ce, ca, cb)
        ke2, ka2, kb2 = rhs(ph_h, ce + 0.5 * dt * ke1, ca + 0.5 * dt * ka1, cb + 0.5 * dt * kb1)
        ke3, ka3, kb3 = rhs(ph_h, ce + 0.5 * dt * ke2, ca + 0.5 * dt * ka2, cb + 0.5 * dt * kb2)
        ke4, ka4, kb4 = rhs(ph_f, ce + dt * ke3, ca + dt * ka3, cb + dt * kb3)
        ce = ce + dt / 6.0 * (ke1 + 2 * ke2 + 2 * ke3 + ke4)
        ca = ca + dt / 6.0 * (ka1 + 2 * ka2 + 2 * ka3 + ka4)
        cb = cb + dt / 6.0 * (kb1 + 2 * kb2 + 2 * kb3 + kb4)
        ph = ph_f
        if (step + 1) % save_every == 0:
            ce_out[s_idx] = ce
            ca_out[s_idx] = ca
            cb_out[s_idx] = cb
            s_idx += 1
    return ce_out, ca_out, cb_out


def evolve_rk4(g_a, g_b, delta, dt, n_steps, save_every, backend=None):
    """Dispatch to the compiled kernel when present (or when forced)."""
    chosen = backend or BACKEND
    if chosen == "compiled" and _kernels is not None:
        return _kernels.evolve_rk4(
            np.ascontiguousarray(g_a, dtype=np.complex128),
            np.ascontiguousarray(g_b, dtype=np.complex128),
            np.ascontiguousarray(delta, dtype=np.float64),
            float(dt),
            int(n_steps),
            int(save_every),
        )
    return evolve_rk4_numpy(g_a, g_b, delta, dt, n_steps, save_every)
