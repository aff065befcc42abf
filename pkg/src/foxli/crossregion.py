"""One-dimensional full-space toy for the cavity/external commutator rules.

True modes are travelling exponentials on a ring; the interval is split
at a boundary plane into a cavity part and an external part, each with
its own narrowband band-limited mode family.  All region integrals have
closed forms through the true-mode overlap matrices, so the generalized
coordinate/momentum operators can be assembled exactly on a truncated
Fock space and their commutators compared against the boundary-product
surface formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ValidationError
from .fock import FockRep, build_fock


@dataclass
class CrossRegionToy:
    """Narrowband split-interval toy geometry.

    Mode coefficients express each region mode as a combination of the
    true-mode restrictions: ``u_n(z) = sum_j coeffs[n, j] exp(i k_j z) / sqrt(L)``
    valid inside the region.  Both region families are orthonormalized on
    their region (u = v, a Hermitean toy).
    """

    length: float
    z_boundary: float
    wavenumbers: np.ndarray
    carrier: float
    cavity_coeffs: np.ndarray
    external_coeffs: np.ndarray
    cavity_overlap: np.ndarray
    external_overlap: np.ndarray

    @property
    def n_true(self) -> int:
        return len(self.wavenumbers)

    @property
    def bandwidth(self) -> float:
        return 0.5 * (self.wavenumbers.max() - self.wavenumbers.min())

    def boundary_values(self, coeffs: np.ndarray) -> np.ndarray:
        phases = np.exp(1j * self.wavenumbers * self.z_boundary) / math.sqrt(self.length)
        return coeffs @ phases

    def boundary_derivatives(self, coeffs: np.ndarray) -> np.ndarray:
        phases = (1j * self.wavenumbers) * np.exp(
            1j * self.wavenumbers * self.z_boundary
        ) / math.sqrt(self.length)
        return coeffs @ phases


def _interval_overlap(k_values, z_from, z_to, length):
    """Closed-form <A_j, A_l> over [z_from, z_to] for ring modes
    exp(i k z) / sqrt(L)."""
    n = len(k_values)
    out = np.empty((n, n), dtype=np.complex128)
    for j in range(n):
        for l in range(n):
            dk = k_values[l] - k_values[j]
            if j == l:
                out[j, l] = (z_to - z_from) / length
            else:
                out[j, l] = (np.exp(1j * dk * z_to) - np.exp(1j * dk * z_from)) / (
                    1j * dk * length
                )
    return out


def _band_packets(k_values, carrier, width, centers, orders, length):
    """Band-limited packet coefficients: Gaussian spectral weights times
    center phases, optionally scaled by powers of the offset frequency."""
    kappa = k_values - carrier
    rows = []
    for c, p in zip(centers, orders):
        w = (kappa * width) ** p * np.exp(-0.5 * (kappa * width) ** 2)
        rows.append(w * np.exp(-1j * k_values * c))
    return np.array(rows, dtype=np.complex128)


def _orthonormalize(raw, overlap):
    """Return coefficients whose region Gram matrix is the identity."""
    gram = raw.conj() @ overlap @ raw.T
    evals, evecs = scipy.linalg.eigh(gram)
    if evals.min() <= 1e-13 * evals.max():
        raise ValidationError("packet family is numerically dependent; spread centers")
    inv_sqrt = (evecs * (1.0 / np.sqrt(evals))) @ evecs.conj().T
    return inv_sqrt.conj() @ raw


def make_narrowband_toy(
    carrier_index: int = 60,
    band_halfcount: int = 20,
    length: float = 1.0,
    z_boundary: float = 0.5,
    packet_width: float = 0.04,
    cavity_centers=(0.224, 0.25, 0.276),
    external_centers=(0.724, 0.75, 0.776),
) -> CrossRegionToy:
    """Build the canonical narrowband toy.

    Packet width and center margins are chosen so each region family is
    exponentially small at the region edges (region-complete enough for
    the cavity-only commutators) while remaining inside the band.
    """
    if band_halfcount >= carrier_index:
        raise ValidationError("band must not reach zero frequency")
    j = np.arange(carrier_index - band_halfcount, carrier_index + band_halfcount + 1)
    k_values = 2.0 * math.pi * j / length
    carrier = 2.0 * math.pi * carrier_index / length

    m_cav = _interval_overlap(k_values, 0.0, z_boundary, length)
    m_ext = _interval_overlap(k_values, z_boundary, length, length)

    orders = [0] * len(cavity_centers)
    raw_c = _band_packets(k_values, carrier, packet_width, cavity_centers, orders, length)
    raw_e = _band_packets(k_values, carrier, packet_width, external_centers, orders, length)
    s_cav = _orthonormalize(raw_c, m_cav)
    s_ext = _orthonormalize(raw_e, m_ext)

    return CrossRegionToy(
        length=length,
        z_boundary=z_boundary,
        wavenumbers=k_values,
        carrier=carrier,
        cavity_coeffs=s_cav,
        external_coeffs=s_ext,
        cavity_overlap=m_cav,
        external_overlap=m_ext,
    )


def _commutator_scalar(x, y, fock: FockRep, rng, n_trials: int = 4):
    """c-number of [X, Y] for ladder-linear X, Y, plus the max deviation
    of the commutator action from c * identity on guarded vectors."""
    guard = fock.guard_mask()
    vac = fock.vacuum()

    def action(vec):
        return x @ (y @ vec) - y @ (x @ vec)

    c = complex(action(vac)[fock.vacuum_index])
    dev = float(np.linalg.norm(action(vac) - c * vac))
    for _ in range(n_trials):
        vec = np.zeros(fock.dim, dtype=np.complex128)
        vals = rng.standard_normal(int(guard.sum())) + 1j * rng.standard_normal(int(guard.sum()))
        vec[guard] = vals / np.linalg.norm(vals)
        dev = max(dev, float(np.linalg.norm(action(vec) - c * vec)))
    return c, dev


@dataclass
class CrossRegionReport:
    m_plus_n_dev: float
    cavity_coord_momentum_dev: float
    cavity_zero_dev: float
    proportionality_dev: float
    fock_coupling: dict
    surface_coupling: dict
    coupling_rel_dev: dict
    table_consistency_dev: float
    table_zero_to_nonzero: float
    narrowband_ratio: float
    warnings: list

    def coupling_max_rel_dev(self) -> float:
        return max(self.coupling_rel_dev.values())

    def to_dict(self):
        def cplx(mat):
            return [[[z.real, z.imag] for z in row] for row in np.asarray(mat)]

        return {
            "m_plus_n_dev": self.m_plus_n_dev,
            "cavity_coord_momentum_dev": self.cavity_coord_momentum_dev,
            "cavity_zero_dev": self.cavity_zero_dev,
            "proportionality_dev": self.proportionality_dev,
            "fock_coupling": {k: cplx(v) for k, v in self.fock_coupling.items()},
            "surface_coupling": {k: cplx(v) for k, v in self.surface_coupling.items()},
            "coupling_rel_dev": self.coupling_rel_dev,
            "table_consistency_dev": self.table_consistency_dev,
            "table_zero_to_nonzero": self.table_zero_to_nonzero,
            "narrowband_ratio": self.narrowband_ratio,
            "warnings": self.warnings,
        }


def cross_region_check(toy: CrossRegionToy, photon_cutoff: int = 2,
                       seed: int = 11) -> CrossRegionReport:
    """Assemble generalized coordinates and momenta on a truncated Fock
    space and compare cavity/external commutators with the boundary
    surface products.

    Returns all raw matrices and relative deviations; nothing is
    asserted here so callers can judge each claim at its own tolerance.
    """
    warnings = []
    nb_ratio = toy.bandwidth / toy.carrier
    if nb_ratio > 0.5:
        warnings.append(
            f"mode set is not narrowband (bandwidth/carrier = {nb_ratio:.2f}); "
            "counter-rotating weights invalidate the comparison"
        )

    k_values = toy.wavenumbers
    n_true = toy.n_true
    m_plus_n_dev = float(
        np.max(np.abs(toy.cavity_overlap + toy.external_overlap - np.eye(n_true)))
    )

    # Coefficient maps from true-mode coordinates to region coordinates.
    cav_coeff = toy.cavity_coeffs.conj() @ toy.cavity_overlap
    ext_coeff = toy.external_coeffs.conj() @ toy.external_overlap

    fock = build_fock(n_true, n_true, photon_cutoff)
    lam = np.sqrt(k_values / 2.0)
    mu = 1.0 / np.sqrt(2.0 * k_values)
    q_ops, p_ops = [], []
    for k in range(n_true):
        a = fock.lowering[k]
        b_dag = fock.left_lowering(k).T
        q_ops.append(((a + b_dag) / (2.0 * lam[k])).tocsr())
        p_ops.append(((a - b_dag) / (2.0j * mu[k])).tocsr())

    def combine(coeffs, mats):
        out = []
        for n in range(coeffs.shape[0]):
            acc = coeffs[n, 0] * mats[0]
            for k in range(1, coeffs.shape[1]):
                acc = acc + coeffs[n, k] * mats[k]
            out.append(acc.tocsr())
        return out

    cav_q = combine(cav_coeff, q_ops)
    cav_p = combine(cav_coeff, p_ops)
    ext_q = combine(ext_coeff, q_ops)
    ext_p = combine(ext_coeff, p_ops)

    rng = np.random.default_rng(seed)
    n_cav = len(cav_q)
    n_ext = len(ext_q)
    prop_dev = 0.0

    # Cavity-only block: [Q_n, P_m^dag] = i hbar delta, coordinate pairs zero.
    qp_dev = 0.0
    zero_dev = 0.0
    for n in range(n_cav):
        for m in range(n_cav):
            c, d = _commutator_scalar(cav_q[n], cav_p[m].conj().T.tocsr(), fock, rng)
            prop_dev = max(prop_dev, d)
            qp_dev = max(qp_dev, abs(c / 1j - (1.0 if n == m else 0.0)))
            c0, d0 = _commutator_scalar(cav_q[n], cav_q[m], fock, rng)
            zero_dev = max(zero_dev, abs(c0), d0)
            c1, d1 = _commutator_scalar(cav_q[n], cav_p[m], fock, rng)
            zero_dev = max(zero_dev, abs(c1), d1)

    # Cross-region blocks against the surface products.
    u_cav_b = toy.boundary_values(toy.cavity_coeffs)
    u_ext_b = toy.boundary_values(toy.external_coeffs)
    du_ext_b = toy.boundary_derivatives(toy.external_coeffs)
    k0 = toy.carrier

    surf = {
        # (hbar / k_n) * conj(v_n) u_K at the boundary, as [Q, P_K^dag] = i hbar L.
        "vu": np.outer(np.conj(u_cav_b), u_ext_b) / (1j * k0),
        "uv": np.outer(np.conj(u_cav_b), u_ext_b) / (1j * k0),
        "vv": np.outer(np.conj(u_cav_b), u_ext_b) / (1j * k0),
        "uu": np.outer(np.conj(u_cav_b), u_ext_b) / (1j * k0),
        # -(1 / k_K^2) * conj(x_n) dz(y_K), as [P, Q_K^dag] = -i hbar (curl term).
        "uv_curl": -np.outer(np.conj(u_cav_b), du_ext_b) / k0 ** 2,
        "vu_curl": -np.outer(np.conj(u_cav_b), du_ext_b) / k0 ** 2,
        "uu_curl": -np.outer(np.conj(u_cav_b), du_ext_b) / k0 ** 2,
        "vv_curl": -np.outer(np.conj(u_cav_b), du_ext_b) / k0 ** 2,
    }

    fockmats = {key: np.zeros((n_cav, n_ext), dtype=np.complex128) for key in surf}
    for n in range(n_cav):
        for kk in range(n_ext):
            c, d = _commutator_scalar(cav_q[n], ext_p[kk].conj().T.tocsr(), fock, rng)
            prop_dev = max(prop_dev, d)
            fockmats["vu"][n, kk] = c / 1j
            fockmats["uv"][n, kk] = c / 1j
            fockmats["vv"][n, kk] = c / 1j
            fockmats["uu"][n, kk] = c / 1j
            c2, d2 = _commutator_scalar(cav_p[n], ext_q[kk].conj().T.tocsr(), fock, rng)
            prop_dev = max(prop_dev, d2)
            fockmats["uv_curl"][n, kk] = c2 / (-1j)
            fockmats["vu_curl"][n, kk] = c2 / (-1j)
            fockmats["uu_curl"][n, kk] = c2 / (-1j)
            fockmats["vv_curl"][n, kk] = c2 / (-1j)

    rel_dev = {}
    for key in surf:
        s = surf[key]
        f = fockmats[key]
        floor = 1e-300 + 0.0
        rel = np.abs(f - s) / np.maximum(np.abs(s), floor)
        rel_dev[key] = float(np.max(rel))

    table_dev, zero_ratio = _table_pattern(
        toy, fock, cav_q, cav_p, ext_q, ext_p, k0, rng
    )

    return CrossRegionReport(
        m_plus_n_dev=m_plus_n_dev,
        cavity_coord_momentum_dev=qp_dev,
        cavity_zero_dev=zero_dev,
        proportionality_dev=prop_dev,
        fock_coupling=fockmats,
        surface_coupling=surf,
        coupling_rel_dev=rel_dev,
        table_consistency_dev=table_dev,
        table_zero_to_nonzero=zero_ratio,
        narrowband_ratio=nb_ratio,
        warnings=warnings,
    )


def _table_pattern(toy, fock, cav_q, cav_p, ext_q, ext_p, k0, rng):
    """Check the annihilation/creation cross-commutator table.

    Builds the four cavity and four external ladder-type operators with a
    common carrier frequency and verifies (a) the cells that must vanish
    are small relative to the nonzero cells, and (b) every nonzero cell
    equals its two-term expansion in the coordinate/momentum commutators
    exactly.
    """
    lam0 = math.sqrt(k0 / 2.0)
    mu0 = 1.0 / math.sqrt(2.0 * k0)

    def ladders(qs, ps):
        fam = {}
        fam["a"] = [(lam0 * q + 1j * mu0 * s).tocsr() for q, s in zip(qs, ps)]
        fam["a_sharp"] = [
            (lam0 * q.conj().T - 1j * mu0 * s.conj().T).tocsr() for q, s in zip(qs, ps)
        ]
        fam["b"] = [
            (lam0 * q.conj().T + 1j * mu0 * s.conj().T).tocsr() for q, s in zip(qs, ps)
        ]
        fam["b_sharp"] = [(lam0 * q - 1j * mu0 * s).tocsr() for q, s in zip(qs, ps)]
        return fam

    # For this Hermitean toy the coordinate/momentum roles coincide
    # pairwise (Q = R, P = S), so the same lists serve both slots.
    cav = ladders(cav_q, cav_p)
    ext = ladders(ext_q, ext_p)

    def scalar(x, y):
        c, _ = _commutator_scalar(x, y, fock, rng, n_trials=1)
        return c

    n_cav = len(cav_q)
    n_ext = len(ext_q)
    table_dev = 0.0
    zero_mag = 0.0
    nonzero_mag = 0.0
    for n in range(n_cav):
        for kk in range(n_ext):
            l_val = scalar(cav_q[n], ext_p[kk].conj().T.tocsr()) / 1j
            scr_l = scalar(cav_p[n], ext_q[kk].conj().T.tocsr()) / (-1j)
            a_nk = 0.5  # equal carrier frequencies
            b_nk = 0.5
            expect = a_nk * l_val + b_nk * scr_l
            got = scalar(cav["a"][n], ext["a_sharp"][kk])
            table_dev = max(table_dev, abs(got - expect))
            nonzero_mag = max(nonzero_mag, abs(got))
            zero_mag = max(
                zero_mag,
                abs(scalar(cav["a"][n], ext["a"][kk])),
                abs(scalar(cav["a"][n], ext["b_sharp"][kk])),
                abs(scalar(cav["a_sharp"][n], ext["a_sharp"][kk])),
                abs(scalar(cav["a_sharp"][n], ext["b"][kk])),
            )
    ratio = zero_mag / nonzero_mag if nonzero_mag > 0 else 0.0
    return table_dev, ratio
