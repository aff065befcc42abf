"""Overlap matrices of a biorthonormal mode basis and derived diagnostics.

The u-set Gram matrix and the v-set Gram matrix are Hermitean positive
definite, block diagonal across (frequency, polarization) labels, and
mutually inverse for a complete basis.  The diagonal of the v-set Gram
matrix gives the Petermann excess factors.  Boundary-plane couplings to
an external mode family and the Coulomb-gauge correction diagnostic also
live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import (
    ConsistencyError,
    GridMismatchError,
    QuadratureQualityError,
    ValidationError,
)
from .fields import ComplexField, TransverseGrid, hermite_gaussian, inner_product
from .modes import ModeBasis, NhmMode
from .optics import fresnel_propagate


@dataclass(frozen=True)
class OverlapMatrices:
    """Gram matrices of the u modes (``u_gram``) and v modes (``v_gram``),
    zeroed across distinct (omega, polarization) blocks by construction."""

    u_gram: np.ndarray
    v_gram: np.ndarray
    omegas: tuple
    polarizations: tuple
    asymmetry_u: float
    asymmetry_v: float

    @property
    def n_modes(self) -> int:
        return self.u_gram.shape[0]

    def block_mask(self) -> np.ndarray:
        same = np.ones((self.n_modes, self.n_modes), dtype=bool)
        for i in range(self.n_modes):
            for j in range(self.n_modes):
                same[i, j] = (
                    self.omegas[i] == self.omegas[j]
                    and self.polarizations[i] == self.polarizations[j]
                )
        return same


def _gram(stack: np.ndarray, area: float) -> np.ndarray:
    flat = stack.reshape(stack.shape[0], -1)
    return (np.conj(flat) @ flat.T) * area


def overlap_matrices(basis: ModeBasis, asym_tol: float = 1e-6) -> OverlapMatrices:
    """Assemble both Gram matrices from a biorthonormalized basis.

    Hermiticity is enforced by averaging with the conjugate transpose;
    the pre-symmetrization asymmetry is reported and must stay below
    ``asym_tol``.
    """
    area = basis.grid.cell_area
    raw_u = _gram(basis.u_stack(), area)
    raw_v = _gram(basis.v_stack(), area)
    asym_u = float(np.max(np.abs(raw_u - raw_u.conj().T)))
    asym_v = float(np.max(np.abs(raw_v - raw_v.conj().T)))
    if max(asym_u, asym_v) > asym_tol:
        raise QuadratureQualityError(
            f"Gram asymmetry {max(asym_u, asym_v):.3e} exceeds {asym_tol:.1e}"
        )
    u_gram = 0.5 * (raw_u + raw_u.conj().T)
    v_gram = 0.5 * (raw_v + raw_v.conj().T)

    omegas = tuple(m.omega for m in basis.modes)
    pols = tuple(m.polarization for m in basis.modes)
    same_block = np.array(
        [[om == on and pm == pn for on, pn in zip(omegas, pols)]
         for om, pm in zip(omegas, pols)]
    )
    u_gram[~same_block] = 0.0
    v_gram[~same_block] = 0.0
    return OverlapMatrices(u_gram, v_gram, omegas, pols, asym_u, asym_v)


def petermann_factors(mats: OverlapMatrices, imag_tol: float = 1e-8) -> np.ndarray:
    """Excess factors: the real diagonal of the v-set Gram matrix."""
    diag = np.diag(mats.v_gram)
    worst = float(np.max(np.abs(diag.imag))) if len(diag) else 0.0
    if worst > imag_tol:
        raise ConsistencyError(
            f"v-gram diagonal has imaginary part {worst:.3e} > {imag_tol:.1e}"
        )
    return diag.real.copy()


def interrelation_residuals(basis: ModeBasis, mats: OverlapMatrices) -> dict:
    """How well each u reconstructs from the v set through the u-gram,
    and vice versa.  Diagnostic only: residuals measure truncation."""
    us = basis.u_stack()
    vs = basis.v_stack()
    cu = mats.u_gram
    dv = mats.v_gram
    # u_n = sum_m (u_gram)_{mn} v_m ; v_n = sum_m (v_gram)_{mn} u_m
    recon_u = np.tensordot(cu.T, vs, axes=(1, 0))
    recon_v = np.tensordot(dv.T, us, axes=(1, 0))

    def rel(err, ref):
        num = np.linalg.norm(err.reshape(err.shape[0], -1), axis=1)
        den = np.linalg.norm(ref.reshape(ref.shape[0], -1), axis=1)
        return float(np.max(num / den))

    return {"res_u": rel(us - recon_u, us), "res_v": rel(vs - recon_v, vs)}


def completeness_residual(basis: ModeBasis, test_field: ComplexField) -> float:
    """Relative L2 residual of projecting a field on the computed span,
    using the v modes as duals: ``f ~ sum_n <v_n, f> u_n``."""
    if test_field.grid != basis.grid:
        raise GridMismatchError("test field grid differs from basis grid")
    coeffs = np.array([inner_product(m.v, test_field) for m in basis.modes])
    proj = np.tensordot(coeffs, basis.u_stack(), axes=(0, 0))
    return float(np.linalg.norm(test_field.values - proj) /
                 np.linalg.norm(test_field.values))


# ---------------------------------------------------------------------------
# Boundary-plane couplings to an external mode family.

@dataclass(frozen=True)
class ExternalMode:
    """External-region mode sampled at the boundary plane.

    For the default Hermitean family u and v coincide.
    """

    u: ComplexField
    v: ComplexField
    wavenumber: float
    polarization: str = "x"


def hermite_gaussian_family(
    grid: TransverseGrid,
    count: int,
    waist: float,
    wavenumber: float,
    polarization: str = "x",
    z_label: float = 0.0,
):
    """Orthonormal free-space Hermite-Gaussian external set with u = v."""
    out = []
    for j in range(count):
        f = hermite_gaussian(grid, j, 0, waist, z_label)
        out.append(ExternalMode(u=f, v=f, wavenumber=wavenumber,
                                polarization=polarization))
    return out


@dataclass(frozen=True)
class SurfaceCouplings:
    """Boundary-plane overlap and curl-overlap matrices, indexed
    (cavity mode n, external mode K).

    ``vu[n, K]`` is the commutator coefficient built from
    ``(1 / (i k_n)) integral conj(v_n) . u_K``, and analogously ``uv``
    (conj(u_n) . v_K), ``vv``, ``uu``.  The ``*_curl`` variants carry
    ``-(1 / k_K^2) integral z . conj(X_n) x curl(Y_K)``.  hbar = 1.
    """

    vu: np.ndarray
    uv: np.ndarray
    vv: np.ndarray
    uu: np.ndarray
    uv_curl: np.ndarray
    vu_curl: np.ndarray
    uu_curl: np.ndarray
    vv_curl: np.ndarray
    z_boundary: float

    def magnitudes(self) -> dict:
        return {
            name: float(np.max(np.abs(getattr(self, name))))
            for name in ("vu", "uv", "vv", "uu", "uv_curl", "vu_curl", "uu_curl", "vv_curl")
        }


def _transverse_laplacian(f: ComplexField) -> np.ndarray:
    g = f.grid
    kx = g.kappa_x()[np.newaxis, :]
    ky = g.kappa_y()[:, np.newaxis]
    spec = np.fft.fft2(f.values, axes=(-2, -1))
    return np.fft.ifft2(-(kx ** 2 + ky ** 2) * spec, axes=(-2, -1))


def _axial_curl_overlap(x_field, y_field, k_ext):
    """Quadrature of z . conj(X) x curl(Y) for transverse fields sharing a
    polarization: the curl keeps the dominant axial-carrier term plus the
    paraxial envelope z derivative."""
    lap = _transverse_laplacian(y_field)
    g = x_field.grid
    integrand = np.conj(x_field.values) * (1j * k_ext * y_field.values
                                           + (0.5j / k_ext) * lap)
    return complex(np.sum(integrand) * g.cell_area)


def _mode_wavenumber(mode: NhmMode, basis: ModeBasis) -> float:
    if mode.omega is not None:
        return mode.omega / SPEED_OF_LIGHT
    if basis.spec is not None:
        return basis.spec.wavenumber
    raise ValidationError("mode has no frequency label and basis has no spec")


def surface_integrals(
    cavity_basis: ModeBasis, external_modes, z_boundary: float
) -> SurfaceCouplings:
    """Boundary-plane coupling matrices between cavity and external modes.

    Cavity u and v fields are propagated in free space from their stored
    plane to ``z_boundary``; external fields must already be sampled
    there on the same grid.  Entries between orthogonal polarizations
    vanish identically.
    """
    n_c = len(cavity_basis.modes)
    n_e = len(external_modes)
    shape = (n_c, n_e)
    vu = np.zeros(shape, dtype=np.complex128)
    uv = np.zeros_like(vu)
    vv = np.zeros_like(vu)
    uu = np.zeros_like(vu)
    uv_curl = np.zeros_like(vu)
    vu_curl = np.zeros_like(vu)
    uu_curl = np.zeros_like(vu)
    vv_curl = np.zeros_like(vu)

    for n, mode in enumerate(cavity_basis.modes):
        k_n = _mode_wavenumber(mode, cavity_basis)
        dz = z_boundary - mode.u.z_label
        u_b = fresnel_propagate(mode.u, dz, k_n) if dz != 0.0 else mode.u
        v_b = fresnel_propagate(mode.v, dz, k_n) if dz != 0.0 else mode.v
        for kk, ext in enumerate(external_modes):
            if ext.u.grid != u_b.grid:
                raise GridMismatchError("external mode grid differs at the boundary")
            if ext.polarization != mode.polarization:
                continue
            k_e = ext.wavenumber
            vu[n, kk] = inner_product(v_b, ext.u) / (1j * k_n)
            uv[n, kk] = inner_product(u_b, ext.v) / (1j * k_n)
            vv[n, kk] = inner_product(v_b, ext.v) / (1j * k_n)
            uu[n, kk] = inner_product(u_b, ext.u) / (1j * k_n)
            uv_curl[n, kk] = -_axial_curl_overlap(u_b, ext.v, k_e) / k_e ** 2
            vu_curl[n, kk] = -_axial_curl_overlap(v_b, ext.u, k_e) / k_e ** 2
            uu_curl[n, kk] = -_axial_curl_overlap(u_b, ext.u, k_e) / k_e ** 2
            vv_curl[n, kk] = -_axial_curl_overlap(v_b, ext.v, k_e) / k_e ** 2

    return SurfaceCouplings(
        vu=vu, uv=uv, vv=vv, uu=uu,
        uv_curl=uv_curl, vu_curl=vu_curl, uu_curl=uu_curl, vv_curl=vv_curl,
        z_boundary=z_boundary,
    )


def magnetic_energy_matrix(external_modes) -> np.ndarray:
    """Curl-overlap matrix of the external family (c = 1 units).

    Entry (K, L) is the quadrature of ``(curl U_K)* . (curl V_L)`` with
    the dominant axial-carrier curl plus the paraxial envelope term.  An
    admissible external family makes this diagonal with the squared mode
    frequencies on the diagonal; the default orthonormal family
    satisfies that by construction, which this matrix lets callers
    verify.
    """
    n = len(external_modes)
    out = np.zeros((n, n), dtype=np.complex128)
    for i, a in enumerate(external_modes):
        for j, b in enumerate(external_modes):
            if a.polarization != b.polarization:
                continue
            # (curl X)* . (curl Y) for transverse carriers reduces to the
            # product of the axial-rotated components.
            lap_a = _transverse_laplacian(a.u)
            lap_b = _transverse_laplacian(b.v)
            ca = 1j * a.wavenumber * a.u.values + (0.5j / a.wavenumber) * lap_a
            cb = 1j * b.wavenumber * b.v.values + (0.5j / b.wavenumber) * lap_b
            out[i, j] = complex(np.sum(np.conj(ca) * cb) * a.u.grid.cell_area)
    return out


def gauge_correction(mode: NhmMode, wavenumber: float | None = None) -> dict:
    """Axial field component restoring the transversality condition.

    Returns the component ``(i / k) d(u)/d(pol axis)`` computed
    spectrally, together with the rms transversality defect before and
    after including it.  The corrected defect is suppressed by the
    squared ratio of waist to diffraction length.
    """
    if wavenumber is not None:
        k = wavenumber
    elif mode.omega is not None:
        k = mode.omega / SPEED_OF_LIGHT
    else:
        raise ValidationError("mode has no frequency label; pass wavenumber")
    g = mode.u.grid
    kx = g.kappa_x()[np.newaxis, :]
    ky = g.kappa_y()[:, np.newaxis]
    spec = np.fft.fft2(mode.u.values, axes=(-2, -1))
    if mode.polarization == "x":
        grad = np.fft.ifft2(1j * kx * spec, axes=(-2, -1))
    else:
        grad = np.fft.ifft2(1j * ky * spec, axes=(-2, -1))
    z_comp_vals = (1j / k) * grad
    z_component = ComplexField(g, z_comp_vals, mode.u.z_label)

    def rms(a):
        return float(np.sqrt(np.mean(np.abs(a) ** 2)))

    before = rms(grad)
    # Divergence with the axial component included: the carrier term
    # cancels the transverse gradient, leaving the paraxial z derivative
    # of the correction envelope.
    lap_z = _transverse_laplacian(z_component)
    after_vals = grad + 1j * k * z_comp_vals + (0.5j / k) * lap_z
    after = rms(after_vals)
    return {
        "z_component": z_component,
        "divergence_before": before,
        "divergence_after": after,
    }
