"""Discretized transverse complex fields and their inner products.

Fields live on a uniform Cartesian grid at a fixed axial plane.  A strip
grid (``ny == 1``) is first class: it models one-dimensional resonators
and is the cheap verification workhorse throughout the package.  All
stored amplitudes are slowly varying envelopes; the fast axial factor
``exp(i k z)`` is never included.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.special import eval_hermite

from .errors import GridMismatchError, ResolutionError, ValidationError

NHMF_MAGIC = b"NHMF"
NHMF_VERSION = 1


@dataclass(frozen=True)
class TransverseGrid:
    """Uniform Cartesian sampling of the transverse plane.

    Parameters
    ----------
    nx, ny : int
        Number of samples along x and y.  ``ny == 1`` selects strip mode.
    dx, dy : float
        Sample spacing in meters.  For strips ``dy`` acts as the nominal
        strip thickness entering the quadrature weight.
    guard_fraction : float
        Fraction of the extent, per edge, occupied by the absorbing
        guard band used during propagation.  Must lie in [0, 0.5).
    """

    nx: int
    ny: int = 1
    dx: float = 1.0
    dy: float = 1.0
    guard_fraction: float = 0.0

    def __post_init__(self):
        if self.ny == 1:
            if self.nx < 2:
                raise ValidationError("nx must be >= 2")
        elif self.nx < 2 or self.ny < 2:
            raise ValidationError("nx, ny must be >= 2 (or ny == 1 for a strip)")
        if self.dx <= 0 or self.dy <= 0:
            raise ValidationError("dx, dy must be positive")
        if not 0.0 <= self.guard_fraction < 0.5:
            raise ValidationError("guard_fraction must lie in [0, 0.5)")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple:
        return (self.ny, self.nx)

    @property
    def extent_x(self) -> float:
        return self.nx * self.dx

    @property
    def extent_y(self) -> float:
        return self.ny * self.dy

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def x_coords(self) -> np.ndarray:
        """Centered x samples; symmetric about 0 to floating-point exactness."""
        return (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.dx

    def y_coords(self) -> np.ndarray:
        if self.ny == 1:
            return np.zeros(1)
        return (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.dy

    def meshgrid(self):
        """(X, Y) arrays of shape (ny, nx)."""
        return np.meshgrid(self.x_coords(), self.y_coords(), indexing="xy")

    def kappa_x(self) -> np.ndarray:
        """Angular spatial frequencies along x on the FFT grid."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)

    def kappa_y(self) -> np.ndarray:
        if self.ny == 1:
            return np.zeros(1)
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)


@dataclass(frozen=True)
class ComplexField:
    """Complex transverse amplitude at one z plane.

    ``values`` has shape ``(ny, nx)`` and is frozen read-only after
    construction; all operations return new fields.
    """

    grid: TransverseGrid
    values: np.ndarray = field(repr=False)
    z_label: float = 0.0

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise ValidationError(
                f"values shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals.view(np.float64))):
            raise ValidationError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values, z_label=None) -> "ComplexField":
        z = self.z_label if z_label is None else z_label
        return ComplexField(self.grid, values, z)

    def flat(self) -> np.ndarray:
        """Row-major (y-major) flattened copy of the values."""
        return self.values.reshape(-1).copy()


def require_same_grid(f: ComplexField, g: ComplexField):
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")


def inner_product(f: ComplexField, g: ComplexField) -> complex:
    """Riemann-sum inner product  sum conj(f) * g * dx * dy.

    Antilinear in the first argument.  Conjugate symmetric:
    ``inner_product(f, g) == conj(inner_product(g, f))``.
    """
    require_same_grid(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_area)


def norm(f: ComplexField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2)) * np.sqrt(f.grid.cell_area))


def normalized(f: ComplexField) -> ComplexField:
    n = norm(f)
    if n == 0.0:
        raise ValidationError("cannot normalize a zero field")
    return f.with_values(f.values / n)


def hermite_gaussian(
    grid: TransverseGrid, order_x: int, order_y: int, waist: float, z_label: float = 0.0
) -> ComplexField:
    """Unit-norm Hermite-Gaussian on the grid.

    The profile is ``H_n(sqrt(2) x / w) exp(-(x^2 + y^2) / w^2)`` times the
    analogous y factor, normalized numerically so the grid inner product
    with itself is exactly 1.  On adequate grids (extent >= 8 waists,
    dx <= waist / 6) the family is orthonormal to ~1e-8.

    Raises
    ------
    ResolutionError
        If the waist is not resolvable (< 4 dx) or not contained
        (> extent / 4).
    """
    if order_x < 0 or order_y < 0:
        raise ValidationError("orders must be >= 0")
    if waist <= 0:
        raise ValidationError("waist must be positive")
    if grid.ny == 1 and order_y != 0:
        raise ValidationError("strip grids only support order_y = 0")
    if waist < 4.0 * grid.dx or waist > grid.extent_x / 4.0:
        raise ResolutionError(
            f"waist {waist} not resolvable/contained on grid "
            f"(dx={grid.dx}, extent_x={grid.extent_x})"
        )
    if grid.ny > 1 and (waist < 4.0 * grid.dy or waist > grid.extent_y / 4.0):
        raise ResolutionError("waist not resolvable/contained along y")

    x = grid.x_coords()
    gx = eval_hermite(order_x, np.sqrt(2.0) * x / waist) * np.exp(-(x ** 2) / waist ** 2)
    if grid.ny == 1:
        vals = gx[np.newaxis, :].astype(np.complex128)
    else:
        y = grid.y_coords()
        gy = eval_hermite(order_y, np.sqrt(2.0) * y / waist) * np.exp(-(y ** 2) / waist ** 2)
        vals = np.outer(gy, gx).astype(np.complex128)
    f = ComplexField(grid, vals, z_label)
    return normalized(f)


# NHMF binary field dump.  Layout (little endian):
#   magic "NHMF", u32 version, u32 nx, u32 ny, f64 dx, f64 dy, f64 z_label,
#   then nx*ny (real, imag) f64 pairs in row-major ([iy, ix]) order.
_HEADER = struct.Struct("<4sIIIddd")


def write_field(f: ComplexField, path):
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                NHMF_MAGIC,
                NHMF_VERSION,
                f.grid.nx,
                f.grid.ny,
                f.grid.dx,
                f.grid.dy,
                f.z_label,
            )
        )
        interleaved = np.empty((f.grid.ny, f.grid.nx, 2), dtype="<f8")
        interleaved[..., 0] = f.values.real
        interleaved[..., 1] = f.values.imag
        fh.write(interleaved.tobytes())


def read_field(path, guard_fraction: float = 0.0) -> ComplexField:
    """Read an NHMF dump.

    ``guard_fraction`` is not part of the file format; pass it explicitly
    (e.g. from a basis manifest) when the field is meant for propagation.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, nx, ny, dx, dy, z_label = _HEADER.unpack(header)
        if magic != NHMF_MAGIC:
            raise ValidationError(f"bad magic {magic!r} in {path}")
        if version != NHMF_VERSION:
            raise ValidationError(f"unsupported NHMF version {version}")
        raw = np.frombuffer(fh.read(nx * ny * 16), dtype="<f8").reshape(ny, nx, 2)
    grid = TransverseGrid(nx=nx, ny=ny, dx=dx, dy=dy, guard_fraction=guard_fraction)
    return ComplexField(grid, raw[..., 0] + 1j * raw[..., 1], z_label)
