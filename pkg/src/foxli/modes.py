"""Dominant right/left eigenmode pairs of the round-trip operator.

Right modes diagonalize the forward map, left (adjoint) modes the
adjoint map with conjugate eigenvalues.  After pairing, the basis is
biorthonormalized: ``<u_n, u_n> = 1`` and ``<u_n, v_m> = delta_nm``,
with near-degenerate eigenvalue clusters handled as blocks.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import (
    ConvergenceError,
    NearDefectivePairError,
    SizeCapError,
    ValidationError,
)
from .fields import ComplexField, TransverseGrid, inner_product, norm, read_field, write_field
from .optics import MirrorSpec, ResonatorSpec, RoundTripOperator, dense_kernel


@dataclass
class NhmMode:
    """One right/left mode pair with its round-trip eigenvalue."""

    u: ComplexField
    v: ComplexField
    gamma: complex
    axial_index: int | None = None
    omega: float | None = None
    polarization: str = "x"
    transverse_index: int | None = None

    @property
    def wavenumber(self) -> float | None:
        if self.omega is None:
            return None
        return self.omega / SPEED_OF_LIGHT


@dataclass
class ModeBasis:
    modes: list
    grid: TransverseGrid
    spec: ResonatorSpec | None
    solve_report: dict

    def __len__(self):
        return len(self.modes)

    def gammas(self) -> np.ndarray:
        return np.array([m.gamma for m in self.modes], dtype=np.complex128)

    def u_stack(self) -> np.ndarray:
        return np.stack([m.u.values for m in self.modes])

    def v_stack(self) -> np.ndarray:
        return np.stack([m.v.values for m in self.modes])


def _as_field(vec, grid, z_label=0.0):
    return ComplexField(grid, np.asarray(vec).reshape(grid.shape), z_label)


def _residual(op, f, gamma):
    from .optics import round_trip

    r = round_trip(f, op).values - gamma * f.values
    return float(np.linalg.norm(r) / max(np.linalg.norm(f.values), 1e-300))


def solve_modes(
    op: RoundTripOperator,
    count: int,
    method: str = "arnoldi",
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
) -> ModeBasis:
    """Compute the ``count`` eigenpairs of largest |gamma| plus the
    matching adjoint pairs.  Deterministic for a given seed.

    Returns an un-normalized basis sorted by descending |gamma|; run
    :func:`biorthonormalize` before using it for overlap algebra.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    n = op.grid.size
    if count > n // 4:
        raise ValidationError(f"count {count} exceeds grid size / 4 = {n // 4}")
    fwd = op if op.direction == "forward" else op.with_direction("forward")
    adj = op.with_direction("adjoint")

    if method == "dense":
        gammas, us, vs, report = _solve_dense(fwd, count)
    elif method == "arnoldi":
        gammas, us, vs, report = _solve_arnoldi(fwd, adj, count, tol, max_iter, seed)
    elif method == "power_deflate":
        gammas, us, vs, report = _solve_power(fwd, adj, count, tol, max_iter, seed)
    else:
        raise ValidationError(f"unknown method {method!r}")

    order = np.argsort(-np.abs(gammas), kind="stable")
    modes = []
    res_u, res_v = [], []
    for rank, idx in enumerate(order):
        u = _as_field(us[:, idx], op.grid)
        v = _as_field(vs[:, idx], op.grid)
        g = complex(gammas[idx])
        modes.append(NhmMode(u=u, v=v, gamma=g, transverse_index=rank))
        res_u.append(_residual(fwd, u, g))
        res_v.append(_residual(adj, v, np.conj(g)))

    report.update(
        {
            "method": method,
            "seed": seed,
            "tol": tol,
            "residuals_u": res_u,
            "residuals_v": res_v,
        }
    )
    if method != "dense":
        worst = max(max(res_u), max(res_v))
        if worst > tol:
            raise ConvergenceError(
                f"residual {worst:.3e} exceeds tol {tol:.3e} after solve",
                best_residuals={"u": res_u, "v": res_v},
            )
    return ModeBasis(modes=modes, grid=op.grid, spec=op.spec, solve_report=report)


def _solve_dense(fwd, count):
    n = fwd.grid.size
    if n > fwd.dense_cap:
        raise SizeCapError(f"dense solve needs grid size <= {fwd.dense_cap}, got {n}")
    a = dense_kernel(fwd)
    w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    # vl satisfies vl^H A = w vl^H, i.e. A^H vl = conj(w) vl: the adjoint mode.
    order = np.argsort(-np.abs(w), kind="stable")[:count]
    return w[order], vr[:, order], vl[:, order], {"iterations": None}


def _seeded_vector(n, seed, stream=0):
    rng = np.random.default_rng((seed, stream))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _solve_arnoldi(fwd, adj, count, tol, max_iter, seed):
    n = fwd.grid.size
    lo_f = spla.LinearOperator((n, n), matvec=fwd.matvec, dtype=np.complex128)
    lo_a = spla.LinearOperator((n, n), matvec=adj.matvec, dtype=np.complex128)
    v0 = _seeded_vector(n, seed, 0)
    try:
        w_f, vec_f = spla.eigs(lo_f, k=count, which="LM", tol=tol, maxiter=max_iter, v0=v0)
        w_a, vec_a = spla.eigs(lo_a, k=count, which="LM", tol=tol, maxiter=max_iter,
                               v0=_seeded_vector(n, seed, 1))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"ARPACK did not converge: {exc}") from exc
    gammas, us, vs = _pair_adjoint(w_f, vec_f, w_a, vec_a, fwd.grid)
    return gammas, us, vs, {"iterations": max_iter}


def _pair_adjoint(w_f, vec_f, w_a, vec_a, grid):
    """Match adjoint eigenpairs to forward ones by conjugate eigenvalue,
    breaking ties with the largest |<u, v>|."""
    count = len(w_f)
    used = np.zeros(len(w_a), dtype=bool)
    us = np.empty((vec_f.shape[0], count), dtype=np.complex128)
    vs = np.empty_like(us)
    gammas = np.empty(count, dtype=np.complex128)
    area = grid.cell_area
    order = np.argsort(-np.abs(w_f), kind="stable")
    for j, fi in enumerate(order):
        g = w_f[fi]
        dist = np.abs(np.conj(w_a) - g)
        dist[used] = np.inf
        best = float(dist.min())
        close = np.flatnonzero(dist <= max(best * (1.0 + 1e-6), best + 1e-14))
        if len(close) > 1:
            overlaps = [abs(np.vdot(vec_a[:, ai], vec_f[:, fi]) * area) for ai in close]
            ai = close[int(np.argmax(overlaps))]
        else:
            ai = close[0]
        pair_tol = max(1e-7, 1e3 * abs(g) * 1e-10)
        if best > max(pair_tol, 1e-6):
            raise ConvergenceError(
                f"no adjoint eigenvalue matches conj({g}); nearest at distance {best:.3e}"
            )
        used[ai] = True
        gammas[j] = g
        us[:, j] = vec_f[:, fi]
        vs[:, j] = vec_a[:, ai]
    return gammas, us, vs


def _solve_power(fwd, adj, count, tol, max_iter, seed):
    """Two-sided power iteration with biorthogonal deflation."""
    n = fwd.grid.size
    area = fwd.grid.cell_area
    found_u, found_v, gammas = [], [], []
    iterations = 0

    def deflate_right(x):
        for u, v, _ in zip(found_u, found_v, gammas):
            x = x - u * (np.vdot(v, x) * area)
        return x

    def deflate_left(y):
        for u, v, _ in zip(found_u, found_v, gammas):
            y = y - v * (np.vdot(u, y) * area)
        return y

    # Converge well below the requested tolerance so deflation against
    # earlier pairs does not contaminate later residuals.
    inner_tol = max(tol * 1e-2, 1e-14)
    for j in range(count):
        x = deflate_right(_seeded_vector(n, seed, 2 * j))
        y = deflate_left(_seeded_vector(n, seed, 2 * j + 1))
        gamma = 0.0 + 0.0j
        best = np.inf
        for it in range(max_iter):
            iterations += 1
            fx = fwd.matvec(x)
            fy = adj.matvec(y)
            fx = deflate_right(fx)
            fy = deflate_left(fy)
            denom = np.vdot(y, x) * area
            if abs(denom) < 1e-300:
                raise NearDefectivePairError("two-sided power iterate became orthogonal")
            gamma = (np.vdot(y, fx) * area) / denom
            res_x = np.linalg.norm(fx - gamma * x) / np.linalg.norm(x)
            res_y = np.linalg.norm(fy - np.conj(gamma) * y) / np.linalg.norm(y)
            res = max(res_x, res_y)
            best = min(best, res)
            if res <= inner_tol:
                break
            x = fx / np.linalg.norm(fx)
            y = fy / np.linalg.norm(fy)
        else:
            raise ConvergenceError(
                f"power iteration for mode {j} stalled at residual {best:.3e}",
                best_residuals={"mode": j, "residual": best},
            )
        # Normalize the pairing used by the deflation projector.
        s = np.vdot(y, x) * area
        found_u.append(x)
        found_v.append(y / np.conj(s))
        gammas.append(gamma)

    us = np.stack(found_u, axis=1)
    vs = np.stack(found_v, axis=1)
    return np.array(gammas), us, vs, {"iterations": iterations}


def biorthonormalize(
    basis: ModeBasis,
    degeneracy_tol: float = 1e-6,
    defective_tol: float = 1e-6,
) -> ModeBasis:
    """Scale the basis so ``<u_n, u_n> = 1`` and ``<u_n, v_m> = delta_nm``.

    Near-degenerate eigenvalues (``|g_i - g_j| <= degeneracy_tol * |g_i|``)
    are treated as clusters and biorthonormalized as blocks via an LU
    solve of the cluster pairing matrix.  The global phase of each pair
    is fixed by making u real positive at its maximum-modulus grid point.

    Raises
    ------
    NearDefectivePairError
        If ``|<u_n, v_n>| < defective_tol`` for unit-norm u, v before
        scaling (exceptional-point proximity).
    """
    us = [m.u.with_values(m.u.values / norm(m.u)) for m in basis.modes]
    vs = [m.v.with_values(m.v.values / norm(m.v)) for m in basis.modes]
    gammas = basis.gammas()
    nmodes = len(us)

    for u, v in zip(us, vs):
        if abs(inner_product(u, v)) < defective_tol:
            raise NearDefectivePairError(
                "right/left pair nearly orthogonal; eigenvalue may be defective"
            )

    clusters = _cluster_eigenvalues(gammas, degeneracy_tol)
    new_vs = list(vs)
    for cluster in clusters:
        if len(cluster) == 1:
            i = cluster[0]
            s = inner_product(us[i], vs[i])
            new_vs[i] = vs[i].with_values(vs[i].values / s)
        else:
            w = np.array(
                [[inner_product(us[i], vs[j]) for j in cluster] for i in cluster]
            )
            x = scipy.linalg.solve(w, np.eye(len(cluster)))
            block = np.stack([vs[j].values for j in cluster])
            mixed = np.tensordot(x.T, block, axes=(1, 0))
            for col, j in enumerate(cluster):
                new_vs[j] = vs[j].with_values(mixed[col])

    modes = []
    for i, m in enumerate(basis.modes):
        u, v = us[i], new_vs[i]
        flat = u.values.reshape(-1)
        peak = int(np.argmax(np.abs(flat)))
        phase = np.exp(-1j * np.angle(flat[peak]))
        u = u.with_values(u.values * phase)
        v = v.with_values(v.values * phase)
        modes.append(replace(m, u=u, v=v))

    dev = _biorth_deviation(modes, basis.grid)
    report = dict(basis.solve_report)
    report["biorth_max_dev"] = dev
    return ModeBasis(modes=modes, grid=basis.grid, spec=basis.spec, solve_report=report)


def _cluster_eigenvalues(gammas, degeneracy_tol):
    n = len(gammas)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(gammas[i] - gammas[j]) <= degeneracy_tol * max(abs(gammas[i]), abs(gammas[j])):
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _biorth_deviation(modes, grid) -> float:
    dev = 0.0
    for i, mi in enumerate(modes):
        for j, mj in enumerate(modes):
            val = inner_product(mi.u, mj.v)
            dev = max(dev, abs(val - (1.0 if i == j else 0.0)))
    return dev


def assign_labels(
    basis: ModeBasis, cavity_length: float, axial_index: int, polarization: str = "x"
) -> ModeBasis:
    """Stamp axial index, angular frequency ``c * N * pi / l``, polarization,
    and the transverse rank (by descending |gamma|) onto every mode."""
    if polarization not in ("x", "y"):
        raise ValidationError("polarization must be 'x' or 'y'")
    omega = axial_index * math.pi * SPEED_OF_LIGHT / cavity_length
    modes = [
        replace(
            m,
            axial_index=axial_index,
            omega=omega,
            polarization=polarization,
            transverse_index=rank,
        )
        for rank, m in enumerate(basis.modes)
    ]
    return ModeBasis(modes=modes, grid=basis.grid, spec=basis.spec,
                     solve_report=basis.solve_report)


# ---------------------------------------------------------------------------
# Persistence: a directory with manifest.json plus one NHMF file per field.

def save_basis(basis: ModeBasis, directory):
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, m in enumerate(basis.modes):
        u_name, v_name = f"u{i:03d}.nhmf", f"v{i:03d}.nhmf"
        write_field(m.u, os.path.join(directory, u_name))
        write_field(m.v, os.path.join(directory, v_name))
        entries.append(
            {
                "u": u_name,
                "v": v_name,
                "gamma": [m.gamma.real, m.gamma.imag],
                "axial_index": m.axial_index,
                "omega": m.omega,
                "polarization": m.polarization,
                "transverse_index": m.transverse_index,
            }
        )
    g = basis.grid
    manifest = {
        "format_version": 1,
        "grid": {"nx": g.nx, "ny": g.ny, "dx": g.dx, "dy": g.dy,
                 "guard_fraction": g.guard_fraction},
        "spec": _spec_to_dict(basis.spec),
        "modes": entries,
        "solve_report": _jsonable(basis.solve_report),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_basis(directory) -> ModeBasis:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    gd = manifest["grid"]
    grid = TransverseGrid(nx=gd["nx"], ny=gd["ny"], dx=gd["dx"], dy=gd["dy"],
                          guard_fraction=gd["guard_fraction"])
    modes = []
    for e in manifest["modes"]:
        u = read_field(os.path.join(directory, e["u"]), grid.guard_fraction)
        v = read_field(os.path.join(directory, e["v"]), grid.guard_fraction)
        modes.append(
            NhmMode(
                u=u,
                v=v,
                gamma=complex(e["gamma"][0], e["gamma"][1]),
                axial_index=e["axial_index"],
                omega=e["omega"],
                polarization=e["polarization"],
                transverse_index=e["transverse_index"],
            )
        )
    spec = _spec_from_dict(manifest["spec"])
    return ModeBasis(modes=modes, grid=grid, spec=spec,
                     solve_report=manifest.get("solve_report", {}))


def _spec_to_dict(spec):
    if spec is None:
        return None
    def mirror(m):
        return {
            "curvature_radius": None if math.isinf(m.curvature_radius) else m.curvature_radius,
            "aperture_halfwidth": None if math.isinf(m.aperture_halfwidth) else m.aperture_halfwidth,
        }
    return {
        "cavity_length": spec.cavity_length,
        "mirror_right": mirror(spec.mirror_right),
        "mirror_left": mirror(spec.mirror_left),
        "wavenumber": spec.wavenumber,
        "reference_plane_z": spec.reference_plane_z,
    }


def _spec_from_dict(d):
    if d is None:
        return None
    def mirror(md):
        return MirrorSpec(
            curvature_radius=math.inf if md["curvature_radius"] is None else md["curvature_radius"],
            aperture_halfwidth=math.inf if md["aperture_halfwidth"] is None else md["aperture_halfwidth"],
        )
    return ResonatorSpec(
        cavity_length=d["cavity_length"],
        mirror_right=mirror(d["mirror_right"]),
        mirror_left=mirror(d["mirror_left"]),
        wavenumber=d["wavenumber"],
        reference_plane_z=d["reference_plane_z"],
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj
