import math

import numpy as np
import pytest

from foxli.errors import ResolutionError, SamplingError, SizeCapError
from foxli.fields import ComplexField, TransverseGrid, hermite_gaussian, inner_product, norm
from foxli.optics import (
    RoundTripOperator,
    apply_mirror,
    closed_stable_strip,
    confocal_unstable_strip,
    dense_kernel,
    fresnel_propagate,
    gaussian_from_q,
    round_trip,
    round_trip_abcd,
    self_consistent_q,
)

WAVELENGTH = 1.0e-6
K = 2.0 * math.pi / WAVELENGTH


@pytest.fixture(scope="module")
def strip_setup():
    spec, grid = confocal_unstable_strip(magnification=2.0, n_eq=5.0, nx=256)
    return spec, grid


@pytest.fixture(scope="module")
def free_grid():
    # Wide guarded strip for free-space propagation tests.
    return TransverseGrid(nx=512, ny=1, dx=4.0e-5, dy=1.0, guard_fraction=0.125)


def second_moment_width(f):
    # For exp(-x^2 / w^2) the intensity variance is w^2 / 4.
    x = f.grid.x_coords()
    intensity = np.abs(f.values[0]) ** 2
    return 2.0 * math.sqrt(float(np.sum(x ** 2 * intensity) / np.sum(intensity)))


def test_gaussian_width_law(free_grid):
    w0 = 3.0e-4
    z_r = K * w0 ** 2 / 2.0
    f = hermite_gaussian(free_grid, 0, 0, w0)
    for z in (0.25 * z_r, z_r, 2.0 * z_r):
        g = fresnel_propagate(f, z, K)
        expected = w0 * math.sqrt(1.0 + (z / z_r) ** 2)
        assert second_moment_width(g) == pytest.approx(expected, rel=5e-3)


def test_propagate_inverse_pair(free_grid):
    f = hermite_gaussian(free_grid, 0, 0, 4.0e-4)
    d = 0.3
    back = fresnel_propagate(fresnel_propagate(f, d, K), -d, K)
    # Compare away from the guard band.
    interior = slice(int(0.3 * 512), int(0.7 * 512))
    dev = np.max(np.abs(back.values[0, interior] - f.values[0, interior]))
    assert dev < 1e-10
    assert back.z_label == pytest.approx(f.z_label)


def analytic_hg_envelope(grid, n, w0, z, k):
    """Free-space envelope of a Hermite-Gaussian launched at its waist."""
    z_r = k * w0 ** 2 / 2.0
    q = z - 1j * z_r
    w_z = w0 * math.sqrt(1.0 + (z / z_r) ** 2)
    gouy = math.atan2(z, z_r)
    x = grid.x_coords()
    from scipy.special import eval_hermite

    prof = (
        eval_hermite(n, np.sqrt(2.0) * x / w_z)
        * np.exp(1j * k * x ** 2 / (2.0 * q))
        * np.exp(1j * (n + 0.5) * gouy)
    )
    f = ComplexField(grid, prof[np.newaxis, :], z_label=z)
    return f.with_values(f.values / norm(f))


def test_hg1_propagates_like_analytic(free_grid):
    w0 = 4.0e-4
    z = K * w0 ** 2 / 2.0  # one Rayleigh range
    f = hermite_gaussian(free_grid, 1, 0, w0)
    g = fresnel_propagate(f, z, K)
    ref = analytic_hg_envelope(free_grid, 1, w0, z, K)
    ov = abs(inner_product(ref, g)) / norm(g)
    assert ov >= 1.0 - 1e-6
    assert second_moment_width(g) / second_moment_width(f) == pytest.approx(
        math.sqrt(2.0), rel=5e-3
    )


def test_flat_unbounded_mirror_is_identity(free_grid):
    f = hermite_gaussian(free_grid, 0, 0, 4.0e-4)
    g = apply_mirror(f, math.inf, math.inf, K)
    assert np.array_equal(g.values, f.values)


def test_aperture_power_restriction(free_grid):
    rng = np.random.default_rng(5)
    f = ComplexField(free_grid, rng.standard_normal((1, 512)) + 1j * rng.standard_normal((1, 512)))
    a = 50 * free_grid.dx
    g = apply_mirror(f, math.inf, a, K)
    x = free_grid.x_coords()
    inside = np.abs(x) <= a
    assert np.sum(np.abs(g.values) ** 2) == pytest.approx(
        np.sum(np.abs(f.values[0, inside]) ** 2)
    )
    assert np.all(g.values[0, ~inside] == 0.0)


def fit_q(field, k, n_pts=10):
    """Extract the complex beam parameter from exp(i k x^2 / (2 q)).

    Few central points only, so the quadratic phase stays within one
    branch of the complex log.
    """
    x = field.grid.x_coords()
    c = field.grid.nx // 2
    sel = slice(c - n_pts, c + n_pts)
    ratio = np.log(field.values[0, sel] / field.values[0, c])
    coef = np.polyfit(x[sel] ** 2, ratio, 1)[0]
    return 1j * k / (2.0 * coef)


def test_mirror_follows_abcd_lens_law(free_grid):
    w0 = 4.0e-4
    z_r = K * w0 ** 2 / 2.0
    q_in = 0.2 - 1j * z_r
    f = gaussian_from_q(free_grid, q_in, K)
    r_mirror = 1.5
    g = apply_mirror(f, r_mirror, math.inf, K)
    q_expected = 1.0 / (1.0 / q_in - 2.0 / r_mirror)
    q_fit = fit_q(g, K)
    assert abs(q_fit - q_expected) / abs(q_expected) < 1e-6


def test_round_trip_zero_field(strip_setup):
    spec, grid = strip_setup
    op = RoundTripOperator(spec, grid, "forward")
    z = ComplexField(grid, np.zeros(grid.shape, dtype=complex))
    assert np.all(round_trip(z, op).values == 0.0)


def test_round_trip_matched_gaussian_stable_cavity():
    spec, grid, _ = closed_stable_strip(nx=256)
    op = RoundTripOperator(spec, grid, "forward")
    q = self_consistent_q(round_trip_abcd(spec))
    f = gaussian_from_q(grid, q, spec.wavenumber)
    g = round_trip(f, op)
    ov = abs(inner_product(f, g)) / norm(g)
    assert ov >= 1.0 - 1e-6


def test_dominant_eigenvalue_matches_dense(strip_setup):
    spec, grid = strip_setup
    op = RoundTripOperator(spec, grid, "forward")
    from foxli.modes import solve_modes

    basis = solve_modes(op, count=1, method="arnoldi", tol=1e-12, seed=2)
    gamma_iter = basis.modes[0].gamma
    dense = dense_kernel(op)
    w = np.linalg.eigvals(dense)
    gamma_dense = w[np.argmax(np.abs(w))]
    assert abs(abs(gamma_iter) ** 2 - abs(gamma_dense) ** 2) < 1e-8


def test_dense_matches_matrix_free(strip_setup):
    spec, grid = strip_setup
    op = RoundTripOperator(spec, grid, "forward")
    dense = dense_kernel(op)
    rng = np.random.default_rng(6)
    v = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
    assert np.max(np.abs(dense @ v - op.matvec(v))) < 1e-12


def test_hermitean_limit_unit_circle():
    spec, grid, _ = closed_stable_strip(nx=128)
    op = RoundTripOperator(spec, grid, "forward")
    w = np.linalg.eigvals(dense_kernel(op))
    assert np.max(np.abs(np.abs(w) - 1.0)) < 1e-8


def test_dense_transpose_is_elementwise_transpose(strip_setup):
    spec, grid = strip_setup
    fwd = dense_kernel(RoundTripOperator(spec, grid, "forward"))
    trn = dense_kernel(RoundTripOperator(spec, grid, "transpose"))
    assert np.max(np.abs(trn - fwd.T)) < 1e-12


def test_adjoint_identity(strip_setup):
    spec, grid = strip_setup
    fwd = RoundTripOperator(spec, grid, "forward")
    adj = fwd.with_direction("adjoint")
    rng = np.random.default_rng(7)
    for _ in range(100):
        f = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        g = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        lhs = inner_product(round_trip(g, adj), f)
        rhs = inner_product(g, round_trip(f, fwd))
        assert abs(lhs - rhs) / (norm(f) * norm(g)) < 1e-10


def test_passivity(strip_setup):
    spec, grid = strip_setup
    op = RoundTripOperator(spec, grid, "forward")
    rng = np.random.default_rng(8)
    for _ in range(20):
        f = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        assert norm(round_trip(f, op)) <= norm(f) + 1e-9


def test_linearity_all_directions(strip_setup):
    spec, grid = strip_setup
    rng = np.random.default_rng(9)
    for direction in ("forward", "transpose", "adjoint"):
        op = RoundTripOperator(spec, grid, direction)
        f = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        g = ComplexField(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        a, b = 1.3 - 0.7j, -0.4 + 2.1j
        combo = ComplexField(grid, a * f.values + b * g.values)
        lhs = round_trip(combo, op).values
        rhs = a * round_trip(f, op).values + b * round_trip(g, op).values
        scale = max(np.max(np.abs(lhs)), 1.0)
        assert np.max(np.abs(lhs - rhs)) / scale < 1e-12


def test_sampling_error():
    grid = TransverseGrid(nx=64, ny=1, dx=1.0e-5, dy=1.0)
    f = hermite_gaussian(grid, 0, 0, 8.0e-5)
    with pytest.raises(SamplingError):
        fresnel_propagate(f, 10.0, K)


def test_aperture_under_resolved(free_grid):
    f = hermite_gaussian(free_grid, 0, 0, 4.0e-4)
    with pytest.raises(ResolutionError):
        apply_mirror(f, math.inf, free_grid.dx, K)


def test_dense_cap(strip_setup):
    spec, grid = strip_setup
    op = RoundTripOperator(spec, grid, "forward", dense_cap=64)
    with pytest.raises(SizeCapError):
        dense_kernel(op)


def test_magnification_and_fresnel_number(strip_setup):
    spec, _ = strip_setup
    assert spec.magnification == pytest.approx(2.0)
    assert spec.equivalent_fresnel_number == pytest.approx(5.0)
    assert spec.is_unstable


def test_export_dense_kernel_columns(tmp_path, strip_setup):
    import json

    from foxli.fields import read_field
    from foxli.optics import export_dense_kernel

    spec, _ = strip_setup
    small_grid = __import__("foxli").TransverseGrid(
        nx=32, ny=1, dx=strip_setup[1].dx * 8, dy=1.0, guard_fraction=0.125
    )
    op = RoundTripOperator(spec, small_grid, "forward")
    kernel = export_dense_kernel(op, tmp_path / "kernel")
    manifest = json.loads((tmp_path / "kernel" / "manifest.json").read_text())
    assert len(manifest["columns"]) == 32
    col5 = read_field(tmp_path / "kernel" / manifest["columns"][5])
    assert np.array_equal(col5.values.reshape(-1), kernel[:, 5])
