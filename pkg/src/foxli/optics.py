"""Paraxial round-trip propagation operator of a two-mirror resonator.

The round trip is composed of FFT-based Fresnel propagation legs and
diagonal mirror stages (quadratic phase times a hard-edge aperture).
Every stage is symmetric as a matrix on the grid, so the transpose
operator is the reversed chain of the same stages and the adjoint is the
reversed chain of the conjugated stages.  Identities such as
``<adj g, f> == <g, fwd f>`` therefore hold to round-off by construction:
the adjoint is taken of the operator exactly as implemented, including
the guard-band apodization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ResolutionError, SamplingError, SizeCapError, ValidationError
from .fields import ComplexField, TransverseGrid, normalized

DENSE_CAP_DEFAULT = 4096


@dataclass(frozen=True)
class MirrorSpec:
    """One end mirror: curvature radius (inf = flat) and hard-edge
    aperture half-width (inf = unbounded)."""

    curvature_radius: float = math.inf
    aperture_halfwidth: float = math.inf

    def __post_init__(self):
        if self.aperture_halfwidth <= 0:
            raise ValidationError("aperture_halfwidth must be positive or inf")


@dataclass(frozen=True)
class ResonatorSpec:
    """Geometry of the two-mirror cavity.

    The reference plane sits at ``reference_plane_z`` measured from the
    left mirror (0 <= z < cavity_length).  A forward round trip runs
    rightward to the right mirror, back to the left mirror, and on to the
    reference plane, with mirrors folded out as thin lenses.
    """

    cavity_length: float
    mirror_right: MirrorSpec
    mirror_left: MirrorSpec
    wavenumber: float
    reference_plane_z: float = 0.0

    def __post_init__(self):
        if self.cavity_length <= 0:
            raise ValidationError("cavity_length must be positive")
        if self.wavenumber <= 0:
            raise ValidationError("wavenumber must be positive")
        if not 0.0 <= self.reference_plane_z < self.cavity_length:
            raise ValidationError("reference_plane_z must lie in [0, cavity_length)")

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi / self.wavenumber

    def g_parameters(self) -> tuple:
        l = self.cavity_length
        g_left = 1.0 - (0.0 if math.isinf(self.mirror_left.curvature_radius)
                        else l / self.mirror_left.curvature_radius)
        g_right = 1.0 - (0.0 if math.isinf(self.mirror_right.curvature_radius)
                         else l / self.mirror_right.curvature_radius)
        return g_left, g_right

    @property
    def magnification(self) -> float:
        """Round-trip geometric ray magnification; 1.0 for stable cavities."""
        g1, g2 = self.g_parameters()
        m = 2.0 * g1 * g2 - 1.0
        if abs(m) <= 1.0:
            return 1.0
        mag = abs(m) + math.sqrt(m * m - 1.0)
        return mag

    @property
    def is_unstable(self) -> bool:
        return self.magnification > 1.0

    @property
    def equivalent_fresnel_number(self) -> float:
        """N_eq in the positive-branch confocal convention,
        (M^2 - 1) / (2 M) * a^2 / (lambda l), using the right-mirror aperture."""
        a = self.mirror_right.aperture_halfwidth
        if math.isinf(a):
            return math.inf
        mag = self.magnification
        if mag <= 1.0:
            return 0.0
        return (mag * mag - 1.0) / (2.0 * mag) * a * a / (self.wavelength * self.cavity_length)


def confocal_unstable_strip(
    magnification: float = 2.0,
    n_eq: float = 5.0,
    wavelength: float = 1.0e-6,
    cavity_length: float = 1.0,
    nx: int = 512,
    span_over_aperture: float = 10.0,
    guard_fraction: float = 0.125,
):
    """Canonical hard-edged positive-branch confocal unstable strip resonator.

    The right mirror is the small convex feedback mirror carrying the
    hard-edge aperture; the left mirror is large and concave.  Returns
    ``(ResonatorSpec, TransverseGrid)`` sized so the Fresnel transfer
    phase is alias-free over one cavity length.
    """
    if magnification <= 1.0:
        raise ValidationError("magnification must exceed 1 for an unstable cavity")
    m, l = magnification, cavity_length
    a = math.sqrt(n_eq * wavelength * l * 2.0 * m / (m * m - 1.0))
    r_left = 2.0 * m * l / (m - 1.0)
    r_right = -2.0 * l / (m - 1.0)
    spec = ResonatorSpec(
        cavity_length=l,
        mirror_right=MirrorSpec(curvature_radius=r_right, aperture_halfwidth=a),
        mirror_left=MirrorSpec(curvature_radius=r_left),
        wavenumber=2.0 * math.pi / wavelength,
    )
    dx = span_over_aperture * a / nx
    grid = TransverseGrid(nx=nx, ny=1, dx=dx, dy=1.0, guard_fraction=guard_fraction)
    _check_sampling(grid, l, spec.wavenumber)
    return spec, grid


def closed_stable_strip(
    curvature_radius: float = 3.0,
    wavelength: float = 1.0e-6,
    cavity_length: float = 1.0,
    nx: int = 256,
    span_over_waist: float = 30.0,
):
    """Symmetric stable strip cavity with no apertures and no guard band.

    Every stage is then unitary on the grid, which makes this the
    Hermitean-limit test system.  Also returns the waist of the matched
    Gaussian mode at the cavity center.
    """
    l, r = cavity_length, curvature_radius
    if r <= l:
        raise ValidationError("need curvature_radius > cavity_length for stability")
    k = 2.0 * math.pi / wavelength
    # Matched-mode Rayleigh range for the symmetric cavity.
    z_r = 0.5 * math.sqrt(l * (2.0 * r - l))
    waist = math.sqrt(2.0 * z_r / k)
    spec = ResonatorSpec(
        cavity_length=l,
        mirror_right=MirrorSpec(curvature_radius=r),
        mirror_left=MirrorSpec(curvature_radius=r),
        wavenumber=k,
    )
    dx = span_over_waist * waist / nx
    grid = TransverseGrid(nx=nx, ny=1, dx=dx, dy=1.0, guard_fraction=0.0)
    _check_sampling(grid, l, k)
    return spec, grid, waist


# ---------------------------------------------------------------------------
# Elementary stages.  Each operates on value arrays of shape (..., ny, nx)
# so dense kernels can be assembled with batched FFTs.

def _apodization_mask(grid: TransverseGrid) -> np.ndarray:
    """Raised-cosine window: 1 in the interior, rolling to 0 at the edges
    over the outer guard_fraction of each axis."""

    def window(n, g):
        if n == 1 or g == 0.0:
            return np.ones(n)
        xi = (np.arange(n) + 0.5) / n
        edge = np.minimum(xi, 1.0 - xi)
        w = np.ones(n)
        roll = edge < g
        w[roll] = 0.5 * (1.0 - np.cos(np.pi * edge[roll] / g))
        return w

    g = grid.guard_fraction
    wx = window(grid.nx, g)
    wy = window(grid.ny, g)
    return np.outer(wy, wx)


def _transfer_phase(grid: TransverseGrid, distance: float, k: float) -> np.ndarray:
    kx = grid.kappa_x()
    ky = grid.kappa_y()
    k2 = kx[np.newaxis, :] ** 2 + ky[:, np.newaxis] ** 2
    return np.exp(-1j * distance * k2 / (2.0 * k))


def _max_distance(grid: TransverseGrid, k: float) -> float:
    """Largest |distance| with an alias-free transfer phase on this grid."""
    d = k * grid.nx * grid.dx ** 2 / (2.0 * math.pi)
    if grid.ny > 1:
        d = min(d, k * grid.ny * grid.dy ** 2 / (2.0 * math.pi))
    return d


def _check_sampling(grid: TransverseGrid, distance: float, k: float):
    dmax = _max_distance(grid, k)
    if abs(distance) > dmax * (1.0 + 1e-12):
        raise SamplingError(
            f"distance {distance} exceeds alias-free limit {dmax:.6g} "
            f"for this grid (increase dx or nx)"
        )


def _mirror_factor(grid: TransverseGrid, curvature_radius, aperture_halfwidth, k,
                   conjugate: bool = False) -> np.ndarray:
    x, y = grid.meshgrid()
    if math.isinf(curvature_radius):
        phase = np.ones(grid.shape, dtype=np.complex128)
    else:
        s2 = x ** 2 + y ** 2
        sign = +1j if conjugate else -1j
        phase = np.exp(sign * k * s2 / curvature_radius)
    if not math.isinf(aperture_halfwidth):
        if aperture_halfwidth < 2.0 * grid.dx:
            raise ResolutionError(
                f"aperture halfwidth {aperture_halfwidth} under-resolved (dx={grid.dx})"
            )
        if grid.ny == 1:
            mask = np.abs(x) <= aperture_halfwidth
        else:
            mask = x ** 2 + y ** 2 <= aperture_halfwidth ** 2
        phase = phase * mask
    return phase


class _Stage:
    """One diagonal or Fourier-diagonal factor of the round trip."""

    def apply(self, values):
        raise NotImplementedError

    def transpose(self):
        return self  # every stage used here is symmetric on the grid

    def adjoint(self):
        raise NotImplementedError


class _DiagStage(_Stage):
    def __init__(self, factor):
        self.factor = factor

    def apply(self, values):
        return values * self.factor

    def adjoint(self):
        return _DiagStage(np.conj(self.factor))


class _FresnelStage(_Stage):
    def __init__(self, transfer):
        self.transfer = transfer

    def apply(self, values):
        spec = np.fft.fft2(values, axes=(-2, -1))
        return np.fft.ifft2(spec * self.transfer, axes=(-2, -1))

    def adjoint(self):
        # Unitary: adjoint = inverse = conjugate transfer phase.
        return _FresnelStage(np.conj(self.transfer))


@dataclass(frozen=True)
class RoundTripOperator:
    """Matrix-free round-trip map for one direction.

    ``direction`` is one of ``forward``, ``transpose``, ``adjoint``.
    The operator is immutable and shareable between threads; application
    allocates per call.
    """

    spec: ResonatorSpec
    grid: TransverseGrid
    direction: str = "forward"
    dense_cap: int = DENSE_CAP_DEFAULT
    _stages: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.direction not in ("forward", "transpose", "adjoint"):
            raise ValidationError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "_stages", _build_stages(self.spec, self.grid, self.direction))

    def with_direction(self, direction: str) -> "RoundTripOperator":
        return RoundTripOperator(self.spec, self.grid, direction, self.dense_cap)

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        out = values.astype(np.complex128, copy=True)
        for stage in self._stages:
            out = stage.apply(out)
        return out

    def matvec(self, vec: np.ndarray) -> np.ndarray:
        """Flat row-major vector in, flat vector out (for Krylov solvers)."""
        shaped = np.asarray(vec, dtype=np.complex128).reshape(self.grid.shape)
        return self.apply_values(shaped).reshape(-1)


def _build_stages(spec: ResonatorSpec, grid: TransverseGrid, direction: str):
    k = spec.wavenumber
    l = spec.cavity_length
    z0 = spec.reference_plane_z
    apod = _apodization_mask(grid)
    has_guard = grid.guard_fraction > 0.0

    legs = [d for d in (l - z0, l, z0) if d > 0.0]
    for d in legs:
        _check_sampling(grid, d, k)

    def propagation(d):
        ops = []
        if has_guard:
            ops.append(_DiagStage(apod.astype(np.complex128)))
        ops.append(_FresnelStage(_transfer_phase(grid, d, k)))
        return ops

    forward: list = []
    forward += propagation(l - z0)
    forward.append(_DiagStage(_mirror_factor(
        grid, spec.mirror_right.curvature_radius, spec.mirror_right.aperture_halfwidth, k)))
    forward += propagation(l)
    forward.append(_DiagStage(_mirror_factor(
        grid, spec.mirror_left.curvature_radius, spec.mirror_left.aperture_halfwidth, k)))
    if z0 > 0.0:
        forward += propagation(z0)

    if direction == "forward":
        return forward
    if direction == "transpose":
        return [s.transpose() for s in reversed(forward)]
    return [s.adjoint() for s in reversed(forward)]


def fresnel_propagate(f: ComplexField, distance: float, k: float) -> ComplexField:
    """Free-space Fresnel propagation of the envelope by ``distance``.

    FFT, multiply by ``exp(-i * distance * |kappa|^2 / (2 k))``, inverse
    FFT; the guard-band apodization of the field's grid is applied first.
    The fast factor ``exp(i k z)`` is not included.

    Raises
    ------
    SamplingError
        If the transfer phase would alias on this grid.
    """
    if k <= 0:
        raise ValidationError("wavenumber must be positive")
    if distance == 0.0:
        return f
    _check_sampling(f.grid, distance, k)
    vals = f.values
    if f.grid.guard_fraction > 0.0:
        vals = vals * _apodization_mask(f.grid)
    spec = np.fft.fft2(vals, axes=(-2, -1))
    out = np.fft.ifft2(spec * _transfer_phase(f.grid, distance, k), axes=(-2, -1))
    return f.with_values(out, z_label=f.z_label + distance)


def apply_mirror(
    f: ComplexField, curvature_radius: float, aperture_halfwidth: float, k: float
) -> ComplexField:
    """Quadratic mirror phase ``exp(-i k |s|^2 / R)`` times the hard-edge
    aperture indicator (|x| <= a on strips, |s| <= a in 2-D)."""
    factor = _mirror_factor(f.grid, curvature_radius, aperture_halfwidth, k)
    return f.with_values(f.values * factor)


def round_trip(f: ComplexField, op: RoundTripOperator) -> ComplexField:
    """Apply one full round trip in the operator's direction."""
    if f.grid != op.grid:
        raise ValidationError("field grid does not match operator grid")
    return f.with_values(op.apply_values(f.values))


def export_dense_kernel(op: RoundTripOperator, directory, chunk: int = 256):
    """Materialize the kernel and dump its nx*ny columns as NHMF fields.

    Column j (the image of the delta field at flat index j) is written to
    ``col<j>.nhmf``; a manifest records the grid and column order.
    """
    import json
    import os

    from .fields import ComplexField, write_field

    kernel = dense_kernel(op, chunk=chunk)
    os.makedirs(directory, exist_ok=True)
    names = []
    for j in range(kernel.shape[1]):
        name = f"col{j:05d}.nhmf"
        col = ComplexField(op.grid, kernel[:, j].reshape(op.grid.shape))
        write_field(col, os.path.join(directory, name))
        names.append(name)
    g = op.grid
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(
            {"direction": op.direction, "columns": names,
             "grid": {"nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy,
                      "guard_fraction": g.guard_fraction}},
            fh, indent=2, sort_keys=True)
        fh.write("\n")
    return kernel


def dense_kernel(op: RoundTripOperator, chunk: int = 256) -> np.ndarray:
    """Materialize the operator column by column on the delta basis.

    Column j is the round trip applied to the field that is 1 at flat
    index j (row-major) and 0 elsewhere.  ``dense @ vec`` then equals the
    matrix-free application to round-off.
    """
    n = op.grid.size
    if n > op.dense_cap:
        raise SizeCapError(f"grid size {n} exceeds dense cap {op.dense_cap}")
    out = np.empty((n, n), dtype=np.complex128)
    eye = np.eye(n, dtype=np.complex128)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block = eye[start:stop].reshape(stop - start, *op.grid.shape)
        res = op.apply_values(block)
        out[:, start:stop] = res.reshape(stop - start, n).T
    return out


# ---------------------------------------------------------------------------
# ABCD helpers shared by tests and the matched-mode builders.

def abcd_propagation(d: float) -> np.ndarray:
    return np.array([[1.0, d], [0.0, 1.0]])

def abcd_mirror(curvature_radius: float) -> np.ndarray:
    c = 0.0 if math.isinf(curvature_radius) else -2.0 / curvature_radius
    return np.array([[1.0, 0.0], [c, 1.0]])

def round_trip_abcd(spec: ResonatorSpec) -> np.ndarray:
    """Ray matrix of the forward chain, in application order."""
    m = abcd_propagation(spec.cavity_length - spec.reference_plane_z)
    m = abcd_mirror(spec.mirror_right.curvature_radius) @ m
    m = abcd_propagation(spec.cavity_length) @ m
    m = abcd_mirror(spec.mirror_left.curvature_radius) @ m
    if spec.reference_plane_z > 0.0:
        m = abcd_propagation(spec.reference_plane_z) @ m
    return m

def propagate_q(q: complex, abcd: np.ndarray) -> complex:
    (a, b), (c, d) = abcd
    return (a * q + b) / (c * q + d)

def self_consistent_q(abcd: np.ndarray) -> complex:
    """Fixed point of the bilinear q map describing the confined mode.

    With the transfer phase ``exp(-i d kappa^2 / (2 k))`` the Gaussian
    envelope convention is ``exp(i k x^2 / (2 q))`` with
    ``q = z - z_waist - i z_R``: propagation maps q -> q + d and the
    confined branch has negative imaginary part.
    """
    (a, b), (c, d) = abcd
    if abs(c) < 1e-300:
        raise ValidationError("degenerate ray matrix: no confined Gaussian mode")
    disc = np.sqrt(complex((a - d) ** 2 + 4.0 * b * c))
    for sign in (+1.0, -1.0):
        q = ((a - d) + sign * disc) / (2.0 * c)
        if q.imag < 0:
            return complex(q)
    raise ValidationError("no confined Gaussian mode (cavity unstable?)")

def gaussian_from_q(grid: TransverseGrid, q: complex, k: float, z_label: float = 0.0) -> ComplexField:
    """Unit-norm Gaussian envelope ``exp(i k s^2 / (2 q))``, Im(q) < 0."""
    if q.imag >= 0:
        raise ValidationError("confined Gaussian needs Im(q) < 0 in this convention")
    x, y = grid.meshgrid()
    s2 = x ** 2 + y ** 2
    vals = np.exp(1j * k * s2 / (2.0 * q))
    return normalized(ComplexField(grid, vals, z_label))
