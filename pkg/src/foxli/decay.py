"""Spontaneous decay of a two-level atom into the cavity mode family.

Essential states: excited atom with no photons, or ground atom with one
photon in a right- or left-travelling mode.  Because absorption and
emission carry different coupling constants for biorthogonal modes, the
memory kernel involves the product of both, and the Markov rate picks up
the excess factors from the v-set Gram matrix.  The conserved norm is
Gram weighted: the plain sum of squared amplitudes is not conserved when
the overlap matrices differ from the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .biortho import OverlapMatrices
from .errors import (
    ConsistencyError,
    PhysicalityError,
    PositionError,
    StepSizeError,
    ValidationError,
)
from .integrate import BACKEND, evolve_rk4
from .modes import ModeBasis
from .optics import fresnel_propagate


@dataclass(frozen=True)
class TwoLevelAtom:
    """Transition frequency, transverse dipole vector, and position.

    The dipole phase convention is real-up-to-a-common-factor; the
    emission/absorption coupling relation assumes an effectively real
    dipole matrix element.
    """

    omega0: float
    dipole: tuple
    position: tuple

    def __post_init__(self):
        if self.omega0 <= 0:
            raise ValidationError("omega0 must be positive")
        if len(self.dipole) != 2:
            raise ValidationError("dipole must be a transverse 2-vector")
        if len(self.position) != 3:
            raise ValidationError("position must be (x, y, z)")


@dataclass
class CouplingSet:
    """Per-mode couplings plus the Gram blocks needed for the dynamics.

    ``g_absorb`` couples upward transitions (photon absorption),
    ``g_emit`` downward ones; they are interrelated through the v-set
    Gram matrix, enforced at construction.  ``blocks`` lists index arrays
    of modes sharing (frequency, polarization); ``u_gram_blocks`` and
    ``v_gram_blocks`` hold the per-block Gram matrices.  ``rho`` is the
    mode density per transverse family near the atomic frequency.
    """

    omega0: float
    omegas: np.ndarray
    thetas: np.ndarray
    polarizations: list
    g_absorb: np.ndarray
    g_emit: np.ndarray
    blocks: list
    u_gram_blocks: list
    v_gram_blocks: list
    rho: float
    relation_residual: float = field(default=0.0)
    field_relation_residual: float | None = field(default=None)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.g_absorb = np.asarray(self.g_absorb, dtype=np.complex128)
        self.g_emit = np.asarray(self.g_emit, dtype=np.complex128)
        expected = np.zeros_like(self.g_emit)
        for idx, dmat in zip(self.blocks, self.v_gram_blocks):
            expected[idx] = -dmat @ np.conj(self.g_absorb[idx])
        num = float(np.linalg.norm(self.g_emit - expected))
        den = float(np.linalg.norm(self.g_emit))
        self.relation_residual = num / den if den > 0 else num
        if self.relation_residual > 1e-6:
            raise ValidationError(
                f"emission couplings inconsistent with Gram blocks "
                f"(residual {self.relation_residual:.3e})"
            )

    @property
    def n_modes(self) -> int:
        return len(self.omegas)

    def detunings(self) -> np.ndarray:
        return self.omega0 - self.omegas

    def bandwidth(self) -> float:
        return float(self.omegas.max() - self.omegas.min())

    def correlation_time(self) -> float:
        b = self.bandwidth()
        return 2.0 * math.pi / b if b > 0 else math.inf

    def recurrence_time(self) -> float:
        distinct = np.unique(np.round(self.omegas, 12))
        if len(distinct) < 2:
            return math.inf
        spacing = np.min(np.diff(distinct))
        return 2.0 * math.pi / spacing


def _bilinear_sample(fieldvals, grid, x, y):
    xs, ys = grid.x_coords(), grid.y_coords()
    if not (xs[0] <= x <= xs[-1]):
        raise PositionError(f"x = {x} outside grid range [{xs[0]}, {xs[-1]}]")
    ix = min(int(np.searchsorted(xs, x)), grid.nx - 1)
    ix0 = max(ix - 1, 0)
    tx = 0.0 if xs[ix] == xs[ix0] else (x - xs[ix0]) / (xs[ix] - xs[ix0])
    if grid.ny == 1:
        row = fieldvals[0]
        return (1 - tx) * row[ix0] + tx * row[ix]
    if not (ys[0] <= y <= ys[-1]):
        raise PositionError(f"y = {y} outside grid range [{ys[0]}, {ys[-1]}]")
    iy = min(int(np.searchsorted(ys, y)), grid.ny - 1)
    iy0 = max(iy - 1, 0)
    ty = 0.0 if ys[iy] == ys[iy0] else (y - ys[iy0]) / (ys[iy] - ys[iy0])
    f00 = fieldvals[iy0, ix0]
    f01 = fieldvals[iy0, ix]
    f10 = fieldvals[iy, ix0]
    f11 = fieldvals[iy, ix]
    return (1 - ty) * ((1 - tx) * f00 + tx * f01) + ty * ((1 - tx) * f10 + tx * f11)


def coupling_constants(
    basis: ModeBasis,
    atom: TwoLevelAtom,
    mats: OverlapMatrices,
    rho: float | None = None,
    emission_source: str = "gram",
) -> CouplingSet:
    """Atom-mode couplings from a labeled biorthonormalized basis.

    Absorption coupling: ``-i sqrt(omega/2) (d . pol) u_n(R)``
    (hbar = eps0 = 1, with the remaining physical prefactor absorbed
    into the dipole normalization).  The emission coupling is taken from
    the Gram relation ``g_emit = -(v_gram) conj(g_absorb)`` by default,
    which the directly sampled ``conj(v_n(R))`` value reproduces exactly
    for a complete mode family; for a truncated basis of a strongly
    non-normal resonator the sampled value can deviate badly, so the
    deviation is reported as ``field_relation_residual`` instead of
    silently breaking the type invariant.  ``emission_source="field"``
    forces the sampled value.  Default mode density: one transverse
    family per axial spacing, ``l / (pi c)``.
    """
    x, y, z = atom.position
    g_abs = np.empty(len(basis), dtype=np.complex128)
    g_emi_field = np.empty(len(basis), dtype=np.complex128)
    omegas = np.empty(len(basis))
    thetas = np.empty(len(basis), dtype=int)
    pols = []
    for i, m in enumerate(basis.modes):
        if m.omega is None:
            raise ValidationError("basis must be labeled before computing couplings")
        k_n = m.omega / SPEED_OF_LIGHT
        dz = z - m.u.z_label
        u_f = fresnel_propagate(m.u, dz, k_n) if dz != 0.0 else m.u
        v_f = fresnel_propagate(m.v, dz, k_n) if dz != 0.0 else m.v
        d_comp = atom.dipole[0] if m.polarization == "x" else atom.dipole[1]
        pref = -1j * math.sqrt(m.omega / 2.0) * d_comp
        g_abs[i] = pref * _bilinear_sample(u_f.values, basis.grid, x, y)
        g_emi_field[i] = pref * np.conj(_bilinear_sample(v_f.values, basis.grid, x, y))
        omegas[i] = m.omega
        thetas[i] = m.transverse_index if m.transverse_index is not None else i
        pols.append(m.polarization)

    blocks, ug, vg = [], [], []
    keys = {}
    for i, (om, p) in enumerate(zip(omegas, pols)):
        keys.setdefault((om, p), []).append(i)
    for idx in keys.values():
        sel = np.array(idx)
        blocks.append(sel)
        ug.append(mats.u_gram[np.ix_(sel, sel)])
        vg.append(mats.v_gram[np.ix_(sel, sel)])

    g_emi_gram = np.zeros_like(g_emi_field)
    for sel, dmat in zip(blocks, vg):
        g_emi_gram[sel] = -dmat @ np.conj(g_abs[sel])
    num = float(np.linalg.norm(g_emi_field - g_emi_gram))
    den = float(np.linalg.norm(g_emi_field))
    field_residual = num / den if den > 0 else num

    if emission_source not in ("gram", "field"):
        raise ValidationError("emission_source must be 'gram' or 'field'")
    g_emi = g_emi_field if emission_source == "field" else g_emi_gram

    if rho is None:
        if basis.spec is None:
            raise ValidationError("rho must be given for a basis without a resonator")
        rho = basis.spec.cavity_length / (math.pi * SPEED_OF_LIGHT)

    cs = CouplingSet(
        omega0=atom.omega0,
        omegas=omegas,
        thetas=thetas,
        polarizations=pols,
        g_absorb=g_abs,
        g_emit=g_emi,
        blocks=blocks,
        u_gram_blocks=ug,
        v_gram_blocks=vg,
        rho=rho,
    )
    cs.field_relation_residual = field_residual
    return cs


def synthetic_flat_comb(
    excess_factor: float,
    n_freq: int = 201,
    delta_omega: float = 1.0,
    g0: complex = 0.1,
    omega0: float = 500.0,
) -> CouplingSet:
    """Flat synthetic comb with one coupled transverse mode per frequency.

    Each frequency carries a two-mode transverse block whose u-set Gram
    matrix has unit diagonal and off-diagonal ``sqrt(1 - 1/K)``, so the
    v-set Gram matrix is its inverse with the requested excess factor K
    on the coupled mode.  The atom couples only to the first transverse
    mode; the second is the spectator required for the block to be an
    invertible Gram pair (a lone mode with unit norm cannot have excess
    factor above one).  Mode density: ``1 / delta_omega``.
    """
    if excess_factor < 1.0:
        raise ValidationError("excess_factor must be >= 1")
    if n_freq % 2 == 0:
        raise ValidationError("n_freq must be odd for a symmetric comb")
    c_off = math.sqrt(1.0 - 1.0 / excess_factor)
    u_block = np.array([[1.0, c_off], [c_off, 1.0]], dtype=np.complex128)
    v_block = np.linalg.inv(u_block)

    n_modes = 2 * n_freq
    omegas = np.empty(n_modes)
    thetas = np.empty(n_modes, dtype=int)
    g_abs = np.zeros(n_modes, dtype=np.complex128)
    g_emi = np.zeros(n_modes, dtype=np.complex128)
    blocks, ug, vg = [], [], []
    half = (n_freq - 1) // 2
    for j in range(n_freq):
        om = omega0 + (j - half) * delta_omega
        sel = np.array([2 * j, 2 * j + 1])
        omegas[sel] = om
        thetas[sel] = [0, 1]
        g_vec = np.array([g0, 0.0], dtype=np.complex128)
        g_abs[sel] = g_vec
        g_emi[sel] = -v_block @ np.conj(g_vec)
        blocks.append(sel)
        ug.append(u_block)
        vg.append(v_block)

    return CouplingSet(
        omega0=omega0,
        omegas=omegas,
        thetas=thetas,
        polarizations=["x"] * n_modes,
        g_absorb=g_abs,
        g_emit=g_emi,
        blocks=blocks,
        u_gram_blocks=ug,
        v_gram_blocks=vg,
        rho=1.0 / delta_omega,
    )


def memory_kernel(c: CouplingSet, tau_grid) -> np.ndarray:
    """K(tau) = sum_n 2 g_absorb_n g_emit_n exp(i detuning_n tau)."""
    tau = np.asarray(tau_grid, dtype=float)
    prod = 2.0 * c.g_absorb * c.g_emit
    return np.exp(1j * np.outer(tau, c.detunings())) @ prod


def kernel_laplace(c: CouplingSet, s: complex) -> complex:
    """Laplace transform of the kernel,
    i sum_n 2 g_absorb g_emit / (detuning + i s)."""
    prod = 2.0 * c.g_absorb * c.g_emit
    return complex(1j * np.sum(prod / (c.detunings() + 1j * s)))


def markov_rate(c: CouplingSet, realness_tol: float = 1e-10) -> dict:
    """Closed-form Markov decay rate from the resonant transverse block.

    Diagonal part: ``4 pi rho sum |g|^2 K_theta``; off-diagonal part sums
    ``g_n (v_gram)_nm conj(g_m)`` over distinct transverse indices.  The
    full weighted double sum must be real; the free-space comparison rate
    drops the excess factors.
    """
    res = np.argmin([abs(c.omegas[idx[0]] - c.omega0) for idx in c.blocks])
    om_res = c.omegas[c.blocks[res][0]]
    gamma_diag = 0.0
    gamma_off = 0.0 + 0.0j
    gamma_free = 0.0
    for idx, dmat in zip(c.blocks, c.v_gram_blocks):
        if c.omegas[idx[0]] != om_res:
            continue
        g = c.g_absorb[idx]
        full = complex(np.conj(g) @ dmat.T @ g)  # sum g_n D_nm conj(g_m)
        if abs(full.imag) > realness_tol * max(abs(full), 1.0):
            raise ConsistencyError(
                f"Gram-weighted coupling sum has imaginary part {full.imag:.3e}"
            )
        diag = float(np.sum(np.abs(g) ** 2 * np.real(np.diag(dmat))))
        gamma_diag += diag
        gamma_off += full - diag
        gamma_free += float(np.sum(np.abs(g) ** 2))
    pref = 4.0 * math.pi * c.rho
    gamma_e = pref * (gamma_diag + gamma_off.real)
    if gamma_e < 0:
        raise PhysicalityError(f"negative decay rate {gamma_e:.3e}")
    return {
        "gamma_e": gamma_e,
        "gamma_free": pref * gamma_free,
        "breakdown": {
            "diagonal": pref * gamma_diag,
            "off_diagonal": pref * gamma_off.real,
        },
    }


@dataclass
class DecayResult:
    times: np.ndarray
    c_excited: np.ndarray
    c_absorb: np.ndarray
    c_emit: np.ndarray
    gram_norm: np.ndarray
    coupling: CouplingSet
    backend: str
    fitted_rate: float | None = None
    predicted_rate: float | None = None

    def excited_probability(self) -> np.ndarray:
        return np.abs(self.c_excited) ** 2


def gram_norm_series(c: CouplingSet, ce, ca, cb) -> np.ndarray:
    """Conserved probability functional in the non-orthogonal one-photon
    basis: |ce|^2 + ca^H U ca + cb^H V^T cb block by block."""
    out = np.abs(ce) ** 2
    for idx, umat, vmat in zip(c.blocks, c.u_gram_blocks, c.v_gram_blocks):
        ca_b = ca[:, idx]
        cb_b = cb[:, idx]
        out = out + np.real(np.einsum("ti,ij,tj->t", np.conj(ca_b), umat, ca_b))
        out = out + np.real(np.einsum("ti,ij,tj->t", np.conj(cb_b), vmat.T, cb_b))
    return out


def evolve_amplitudes(
    c: CouplingSet,
    t_end: float,
    dt: float,
    save_points: int = 400,
    backend: str | None = None,
) -> DecayResult:
    """Integrate the coupled amplitude equations from the excited atom.

    Fixed-step fourth-order integration for reproducibility; raises
    StepSizeError when ``dt`` exceeds a tenth of the fastest time scale
    and refuses to run past the discrete-spectrum recurrence time.
    """
    if t_end <= 0 or dt <= 0:
        raise ValidationError("t_end and dt must be positive")
    deltas = c.detunings()
    scale = max(
        float(np.max(np.abs(deltas))) if len(deltas) else 0.0,
        float(np.sum(np.abs(c.g_absorb)) + np.sum(np.abs(c.g_emit))),
    )
    if scale > 0 and dt > 0.1 / scale * (1.0 + 1e-12):
        raise StepSizeError(
            f"dt = {dt:.3e} exceeds stability bound {0.1 / scale:.3e}"
        )
    t_rec = c.recurrence_time()
    if t_end >= t_rec:
        raise ValidationError(
            f"t_end {t_end} reaches the recurrence time {t_rec:.4g}"
        )

    n_steps = max(1, math.ceil(t_end / dt))
    save_every = max(1, n_steps // save_points)
    n_steps = save_every * math.ceil(n_steps / save_every)
    dt_eff = t_end / n_steps

    ce, ca, cb = evolve_rk4(
        c.g_absorb, c.g_emit, deltas, dt_eff, n_steps, save_every, backend=backend
    )
    times = np.arange(ce.shape[0]) * (save_every * dt_eff)
    gram = gram_norm_series(c, ce, ca, cb)
    return DecayResult(
        times=times,
        c_excited=ce,
        c_absorb=ca,
        c_emit=cb,
        gram_norm=gram,
        coupling=c,
        backend=backend or BACKEND,
    )


def fit_decay_rate(result: DecayResult, window) -> dict:
    """Least-squares exponential rate of the excited-state probability.

    Fits ``ln P_e`` over the window and returns the negated slope with
    its r^2.  A window starting before the kernel correlation time or a
    non-exponential trace (r^2 < 0.99) sets ``ok = False`` rather than
    raising.
    """
    t1, t2 = window
    if t2 <= t1:
        raise ValidationError("fit window must have t2 > t1")
    mask = (result.times >= t1) & (result.times <= t2)
    if mask.sum() < 3:
        raise ValidationError("fit window contains fewer than 3 samples")
    p = result.excited_probability()[mask]
    if p[-1] <= 1e-12:
        raise ValidationError("excited probability below 1e-12 at window end")
    t = result.times[mask]
    logp = np.log(p)
    coeffs, residuals, *_ = np.polyfit(t, logp, 1, full=True)
    slope = coeffs[0]
    ss_res = float(residuals[0]) if len(residuals) else 0.0
    ss_tot = float(np.sum((logp - logp.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    tau_c = result.coupling.correlation_time()
    return {
        "rate": float(-slope),
        "r_squared": float(r2),
        "ok": bool(r2 >= 0.99 and (not math.isfinite(tau_c) or t1 >= tau_c)),
        "window": [float(t1), float(t2)],
        "window_after_correlation_time": bool(
            not math.isfinite(tau_c) or t1 >= tau_c
        ),
    }
