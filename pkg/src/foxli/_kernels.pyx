# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for the essential-states amplitude integrator.

Same fixed-step fourth-order scheme as the numpy fallback in
``foxli.integrate``; selected automatically at import when built.
"""

import numpy as np


def evolve_rk4(
    double complex[::1] g_a,
    double complex[::1] g_b,
    double[::1] delta,
    double dt,
    Py_ssize_t n_steps,
    Py_ssize_t save_every,
):
    cdef Py_ssize_t n = g_a.shape[0]
    if n_steps % save_every != 0:
        raise ValueError("n_steps must be a multiple of save_every")
    cdef Py_ssize_t n_save = n_steps // save_every + 1

    ce_out = np.empty(n_save, dtype=np.complex128)
    ca_out = np.empty((n_save, n), dtype=np.complex128)
    cb_out = np.empty((n_save, n), dtype=np.complex128)
    cdef double complex[::1] ce_v = ce_out
    cdef double complex[:, ::1] ca_v = ca_out
    cdef double complex[:, ::1] cb_v = cb_out

    cdef double complex[::1] ca = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] cb = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] ph = np.ones(n, dtype=np.complex128)
    cdef double complex[::1] f_half = np.exp(0.5j * dt * np.asarray(delta))
    cdef double complex[::1] f_full = np.exp(1j * dt * np.asarray(delta))

    cdef double complex[::1] ka1 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] kb1 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] ka2 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] kb2 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] ka3 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] kb3 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] ka4 = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] kb4 = np.empty(n, dtype=np.complex128)

    cdef double complex ce = 1.0
    cdef double complex ke1, ke2, ke3, ke4
    cdef double complex acc, w, p
    cdef double complex minus_i = -1.0j
    cdef double complex plus_i = 1.0j
    cdef double half_dt = 0.5 * dt
    cdef double sixth_dt = dt / 6.0
    cdef Py_ssize_t step, i, s_idx

    ce_v[0] = ce
    for i in range(n):
        ca_v[0, i] = 0.0
        cb_v[0, i] = 0.0
    s_idx = 1

    for step in range(n_steps):
        # stage 1 at phase ph
        acc = 0.0
        for i in range(n):
            p = ph[i]
            acc = acc + g_a[i] * p * ca[i] + g_b[i] * p * cb[i]
            w = p.conjugate() * ce
            ka1[i] = minus_i * g_b[i] * w
            kb1[i] = minus_i * g_a[i] * w
        ke1 = plus_i * acc

        # stages 2 and 3 at phase ph * f_half
        acc = 0.0
        for i in range(n):
            p = ph[i] * f_half[i]
            acc = acc + g_a[i] * p * (ca[i] + half_dt * ka1[i]) \
                      + g_b[i] * p * (cb[i] + half_dt * kb1[i])
            w = p.conjugate() * (ce + half_dt * ke1)
            ka2[i] = minus_i * g_b[i] * w
            kb2[i] = minus_i * g_a[i] * w
        ke2 = plus_i * acc

        acc = 0.0
        for i in range(n):
            p = ph[i] * f_half[i]
            acc = acc + g_a[i] * p * (ca[i] + half_dt * ka2[i]) \
                      + g_b[i] * p * (cb[i] + half_dt * kb2[i])
            w = p.conjugate() * (ce + half_dt * ke2)
            ka3[i] = minus_i * g_b[i] * w
            kb3[i] = minus_i * g_a[i] * w
        ke3 = plus_i * acc

        # stage 4 at phase ph * f_full
        acc = 0.0
        for i in range(n):
            p = ph[i] * f_full[i]
            acc = acc + g_a[i] * p * (ca[i] + dt * ka3[i]) \
                      + g_b[i] * p * (cb[i] + dt * kb3[i])
            w = p.conjugate() * (ce + dt * ke3)
            ka4[i] = minus_i * g_b[i] * w
            kb4[i] = minus_i * g_a[i] * w
        ke4 = plus_i * acc

        ce = ce + sixth_dt * (ke1 + 2.0 * ke2 + 2.0 * ke3 + ke4)
        for i in range(n):
            ca[i] = ca[i] + sixth_dt * (ka1[i] + 2.0 * ka2[i] + 2.0 * ka3[i] + ka4[i])
            cb[i] = cb[i] + sixth_dt * (kb1[i] + 2.0 * kb2[i] + 2.0 * kb3[i] + kb4[i])
            ph[i] = ph[i] * f_full[i]

        if (step + 1) % save_every == 0:
            ce_v[s_idx] = ce
            for i in range(n):
                ca_v[s_idx, i] = ca[i]
                cb_v[s_idx, i] = cb[i]
            s_idx += 1

    return ce_out, ca_out, cb_out
