"""Brute-force verification of the mode operator algebra on truncated
Fock spaces.

Eight annihilation/creation-type operators are built per mode from the
true-mode ladder operators.  Because the truncation only corrupts the
top photon level, every commutation rule is checked on the guarded
subspace (total photons strictly below the cutoff), where it must hold
to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import AlgebraError, SizeCapError, ValidationError

FOCK_DIM_CAP_DEFAULT = 200_000


def _enumerate_states(n_modes: int, n_max: int):
    """Occupation tuples with total photons <= n_max, lexicographic order."""
    out = []

    def rec(prefix, budget, modes_left):
        if modes_left == 0:
            out.append(prefix)
            return
        for c in range(budget + 1):
            rec(prefix + (c,), budget - c, modes_left - 1)

    rec((), n_max, n_modes)
    return out


@dataclass
class FockRep:
    """Truncated bosonic Fock space over right and left true modes.

    Mode order: right modes 0..n_true_right-1, then left modes.
    ``lowering[k]`` has exact integer-square-root entries; raising
    operators are its transposes.
    """

    n_true_right: int
    n_true_left: int
    photon_cutoff: int
    states: list
    index: dict
    lowering: list
    totals: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.n_true_right + self.n_true_left

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def vacuum_index(self) -> int:
        return self.index[(0,) * self.n_modes]

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.complex128)
        v[self.vacuum_index] = 1.0
        return v

    def raising(self, k: int):
        return self.lowering[k].T

    def left_lowering(self, k: int):
        """Ladder operator of the k-th left-travelling true mode."""
        return self.lowering[self.n_true_right + k]

    def guard_mask(self, max_total: int | None = None) -> np.ndarray:
        """Boolean mask of states with total photons <= max_total
        (default: cutoff - 1, where linear-operator commutators are exact)."""
        if max_total is None:
            max_total = self.photon_cutoff - 1
        return self.totals <= max_total


def build_fock(
    n_true_right: int,
    n_true_left: int,
    photon_cutoff: int,
    dim_cap: int = FOCK_DIM_CAP_DEFAULT,
) -> FockRep:
    """Build the truncated Fock space and per-mode ladder matrices."""
    if photon_cutoff < 2:
        raise ValidationError("photon_cutoff must be >= 2")
    n_modes = n_true_right + n_true_left
    dim = math.comb(n_modes + photon_cutoff, photon_cutoff)
    if dim > dim_cap:
        raise SizeCapError(f"Fock dimension {dim} exceeds cap {dim_cap}")
    states = _enumerate_states(n_modes, photon_cutoff)
    index = {s: i for i, s in enumerate(states)}
    totals = np.array([sum(s) for s in states])

    lowering = []
    for k in range(n_modes):
        rows, cols, vals = [], [], []
        for i, s in enumerate(states):
            if s[k] > 0:
                t = s[:k] + (s[k] - 1,) + s[k + 1:]
                rows.append(index[t])
                cols.append(i)
                vals.append(math.sqrt(s[k]))
        lowering.append(
            sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=np.complex128)
        )
    return FockRep(
        n_true_right=n_true_right,
        n_true_left=n_true_left,
        photon_cutoff=photon_cutoff,
        states=states,
        index=index,
        lowering=lowering,
        totals=totals,
    )


_OP_NAMES = ("a", "a_sharp", "b", "b_sharp",
             "a_dag", "a_sharp_dag", "b_dag", "b_sharp_dag")


@dataclass
class NhmOperatorSet:
    """The eight operator families of one mode set on a Fock space.

    ``mode_coeffs[n, k]`` combines the right-travelling true-mode
    annihilators into the mode annihilator ``a[n]``; ``dual_coeffs`` is
    its inverse-adjoint partner, so ``mode_coeffs @ dual_coeffs^H = E``.
    The u-set and v-set Gram matrices follow as
    ``dual_coeffs @ dual_coeffs^H`` and ``mode_coeffs @ mode_coeffs^H``.
    """

    fock: FockRep
    mode_coeffs: np.ndarray
    dual_coeffs: np.ndarray
    omegas: np.ndarray
    ops: dict = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.mode_coeffs.shape[0]

    def u_gram(self) -> np.ndarray:
        return self.dual_coeffs @ self.dual_coeffs.conj().T

    def v_gram(self) -> np.ndarray:
        return self.mode_coeffs @ self.mode_coeffs.conj().T

    def op(self, name: str, n: int):
        return self.ops[name][n]


def build_nhm_ops(
    fock: FockRep, mode_coeffs, dual_coeffs, omegas, pair_tol: float = 1e-12
) -> NhmOperatorSet:
    """Assemble the eight operator families from expansion coefficients.

    Requires square coefficient matrices with
    ``mode_coeffs @ dual_coeffs^H = E`` to ``pair_tol``.
    """
    g = np.asarray(mode_coeffs, dtype=np.complex128)
    lm = np.asarray(dual_coeffs, dtype=np.complex128)
    n_modes, n_true = g.shape
    if lm.shape != g.shape:
        raise AlgebraError("mode_coeffs and dual_coeffs must have equal shapes")
    if n_modes != n_true or n_true != fock.n_true_right or n_true != fock.n_true_left:
        raise AlgebraError(
            "need square coefficients with one mode per true mode in each half space"
        )
    dev = np.max(np.abs(g @ lm.conj().T - np.eye(n_modes)))
    if dev > pair_tol:
        raise AlgebraError(
            f"mode/dual coefficients are not inverse-adjoint pairs (dev {dev:.3e})"
        )
    omegas = np.asarray(omegas, dtype=float)
    if omegas.shape != (n_modes,):
        raise AlgebraError("omegas must have one entry per mode")

    right = [fock.lowering[k] for k in range(n_true)]
    right_dag = [m.T for m in right]
    left = [fock.left_lowering(k) for k in range(n_true)]
    left_dag = [m.T for m in left]

    def combo(coeffs, mats):
        out = []
        for n in range(n_modes):
            acc = coeffs[n, 0] * mats[0]
            for k in range(1, n_true):
                acc = acc + coeffs[n, k] * mats[k]
            out.append(acc.tocsr())
        return out

    ops = {
        "a": combo(g, right),
        "a_sharp": combo(np.conj(lm), right_dag),
        "b": combo(np.conj(lm), left),
        "b_sharp": combo(g, left_dag),
        # Hermitean adjoints of the four above.
        "a_dag": combo(np.conj(g), right_dag),
        "a_sharp_dag": combo(lm, right),
        "b_dag": combo(lm, left_dag),
        "b_sharp_dag": combo(np.conj(g), left),
    }
    return NhmOperatorSet(fock=fock, mode_coeffs=g, dual_coeffs=lm, omegas=omegas, ops=ops)


# The commutation table: [X_n, Y_m] for (X, Y) listed here equals the
# given function of (n, m); everything else follows by antisymmetry or
# vanishes.
def _base_rules(u_gram, v_gram):
    return {
        ("a", "a_sharp"): lambda n, m: 1.0 if n == m else 0.0,
        ("b", "b_sharp"): lambda n, m: 1.0 if n == m else 0.0,
        ("a_sharp_dag", "a_dag"): lambda n, m: 1.0 if n == m else 0.0,
        ("b_sharp_dag", "b_dag"): lambda n, m: 1.0 if n == m else 0.0,
        ("a", "a_dag"): lambda n, m: v_gram[n, m],
        ("b_sharp_dag", "b_sharp"): lambda n, m: v_gram[m, n],
        ("b", "b_dag"): lambda n, m: u_gram[m, n],
        ("a_sharp_dag", "a_sharp"): lambda n, m: u_gram[n, m],
    }


def expected_commutator(ops: NhmOperatorSet, x: str, n: int, y: str, m: int) -> complex:
    rules = _base_rules(ops.u_gram(), ops.v_gram())
    if (x, y) in rules:
        return complex(rules[(x, y)](n, m))
    if (y, x) in rules:
        return -complex(rules[(y, x)](m, n))
    return 0.0


@dataclass
class AlgebraReport:
    identities: dict
    tol: float

    @property
    def max_dev(self) -> float:
        return max(v["max_dev"] for v in self.identities.values())

    @property
    def all_passed(self) -> bool:
        return all(v["passed"] for v in self.identities.values())

    def to_dict(self):
        return {"tol": self.tol, "max_dev": self.max_dev,
                "all_passed": self.all_passed, "identities": self.identities}


def check_commutators(ops: NhmOperatorSet, tol: float = 1e-12) -> AlgebraReport:
    """Verify every pairwise commutation rule on the guarded subspace.

    Reports the max deviation per (family, family) identity.  All checks
    compare full matrix commutators column-masked to guarded states.
    """
    guard = ops.fock.guard_mask()
    identities = {}
    n_modes = ops.n_modes
    eye = sp.identity(ops.fock.dim, dtype=np.complex128, format="csr")
    for i, x in enumerate(_OP_NAMES):
        for y in _OP_NAMES[i:]:
            worst = 0.0
            for n in range(n_modes):
                for m in range(n_modes):
                    xm = ops.op(x, n)
                    ym = ops.op(y, m)
                    comm = (xm @ ym - ym @ xm).tocsc()
                    expect = expected_commutator(ops, x, n, y, m)
                    if expect != 0.0:
                        comm = comm - expect * eye
                    masked = comm[:, guard]
                    dev = 0.0 if masked.nnz == 0 else float(np.max(np.abs(masked.data)))
                    worst = max(worst, dev)
            identities[f"[{x}, {y}]"] = {
                "max_dev": worst,
                "tol": tol,
                "passed": worst <= tol,
            }
    return AlgebraReport(identities=identities, tol=tol)


def build_hamiltonians(ops: NhmOperatorSet) -> dict:
    """Oscillator-form Hamiltonians of the operator set (hbar = 1).

    ``H_C`` is the cavity-role sum of number operators plus zero point;
    ``H_E0`` is the same form in the external role, ``V_E`` the photon
    exchange coupling, and ``H_E = H_E0 + V_E`` their Hermitean sum.
    """
    dim = ops.fock.dim
    eye = sp.identity(dim, dtype=np.complex128, format="csr")
    h0 = sp.csr_matrix((dim, dim), dtype=np.complex128)
    v = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for n in range(ops.n_modes):
        w = ops.omegas[n]
        num_a = ops.op("a_sharp", n) @ ops.op("a", n)
        num_b = ops.op("b_sharp", n) @ ops.op("b", n)
        dag_a = ops.op("a_dag", n) @ ops.op("a_sharp_dag", n)
        dag_b = ops.op("b_dag", n) @ ops.op("b_sharp_dag", n)
        h0 = h0 + w * (num_a + num_b + eye)
        v = v + 0.5 * w * ((dag_a + dag_b) - (num_a + num_b))
    return {"H_C": h0, "H_E0": h0, "V_E": v, "H_E": (h0 + v).tocsr()}


@dataclass
class EigenstateReport:
    n_states: int
    energy_dev_right: float
    energy_dev_left: float
    gram_dev: float
    completeness_dev: float
    tol: float

    @property
    def all_passed(self) -> bool:
        return max(self.energy_dev_right, self.energy_dev_left,
                   self.gram_dev, self.completeness_dev) <= self.tol

    def to_dict(self):
        return {
            "n_states": self.n_states,
            "energy_dev_right": self.energy_dev_right,
            "energy_dev_left": self.energy_dev_left,
            "gram_dev": self.gram_dev,
            "completeness_dev": self.completeness_dev,
            "tol": self.tol,
            "all_passed": self.all_passed,
        }


def check_eigenstates(h, ops: NhmOperatorSet, max_total: int | None = None,
                      tol: float = 1e-10) -> EigenstateReport:
    """Construct right states from sharp-creation monomials on the vacuum
    and left states from annihilation monomials on the vacuum dual, then
    verify oscillator energies, left/right orthonormality, and the
    resolution of identity on the sampled levels."""
    fock = ops.fock
    if max_total is None:
        max_total = fock.photon_cutoff
    if max_total > fock.photon_cutoff:
        raise ValidationError("max_total cannot exceed the photon cutoff")
    labels = _enumerate_states(2 * ops.n_modes, max_total)
    vac = fock.vacuum()
    dim = fock.dim

    rights = np.empty((dim, len(labels)), dtype=np.complex128)
    lefts = np.empty((len(labels), dim), dtype=np.complex128)
    energies = np.empty(len(labels))
    nm = ops.n_modes
    for s_idx, lab in enumerate(labels):
        ns, ms = lab[:nm], lab[nm:]
        vec = vac.copy()
        row = vac.copy()
        norm_fact = 1.0
        for i in range(nm):
            for _ in range(ns[i]):
                vec = ops.op("a_sharp", i) @ vec
                row = ops.op("a", i).T @ row
            for _ in range(ms[i]):
                vec = ops.op("b_sharp", i) @ vec
                row = ops.op("b", i).T @ row
            norm_fact *= math.factorial(ns[i]) * math.factorial(ms[i])
        scale = 1.0 / math.sqrt(norm_fact)
        rights[:, s_idx] = vec * scale
        lefts[s_idx, :] = row * scale
        energies[s_idx] = float(np.dot(ops.omegas, np.array(ns) + np.array(ms) + 1))

    h = h.tocsr()
    hr = h @ rights
    dev_r = 0.0
    dev_l = 0.0
    for s_idx in range(len(labels)):
        e = energies[s_idx]
        scale = max(abs(e), 1.0)
        dev_r = max(dev_r, float(np.linalg.norm(hr[:, s_idx] - e * rights[:, s_idx])
                                 / (scale * np.linalg.norm(rights[:, s_idx]))))
        lh = h.T @ lefts[s_idx, :]
        dev_l = max(dev_l, float(np.linalg.norm(lh - e * lefts[s_idx, :])
                                 / (scale * np.linalg.norm(lefts[s_idx, :]))))

    gram = lefts @ rights
    gram_dev = float(np.max(np.abs(gram - np.eye(len(labels)))))

    proj = rights @ lefts
    sel = fock.guard_mask(max_total)
    eye = np.eye(dim)
    completeness_dev = float(np.max(np.abs((proj - eye)[np.ix_(sel, sel)])))

    return EigenstateReport(
        n_states=len(labels),
        energy_dev_right=dev_r,
        energy_dev_left=dev_l,
        gram_dev=gram_dev,
        completeness_dev=completeness_dev,
        tol=tol,
    )


def field_commutator_check(
    family, omegas, coincident, separated, counts, photon_cutoff: int = 2
) -> dict:
    """Mode-sum convergence of the field/momentum equal-time commutator.

    ``family`` is an orthonormal list of ComplexFields (u = v) acting as
    a Hermitean mode family; the vector potential and conjugate momentum
    operators are assembled at the two sample points from the first
    ``count`` modes (for each count) and their commutator is evaluated as
    a Fock matrix.  The commutator must be a multiple of the identity on
    the guarded subspace; at coincident points the multiple converges to
    ``i hbar / cell_area`` as the family saturates, at separated points
    it falls toward zero.  Cross-polarization commutators vanish
    identically because each polarization carries its own mode family.
    """
    m_max = len(family)
    omegas = np.asarray(omegas, dtype=float)
    if omegas.shape != (m_max,):
        raise ValidationError("need one frequency per family member")
    fock = build_fock(m_max, m_max, photon_cutoff)
    guard = fock.guard_mask()
    grid = family[0].grid

    def sample(f, point):
        iy, ix = point
        return complex(f.values[iy, ix])

    def field_ops(point, count):
        dim = fock.dim
        a_op = sp.csr_matrix((dim, dim), dtype=np.complex128)
        pi_op = sp.csr_matrix((dim, dim), dtype=np.complex128)
        for n in range(count):
            u_xy = sample(family[n], point)
            a_n = fock.lowering[n]
            b_n = fock.left_lowering(n)
            amp = math.sqrt(1.0 / (2.0 * omegas[n]))
            mom = math.sqrt(omegas[n] / 2.0) / 1j
            a_op = a_op + amp * (u_xy * (a_n + b_n.T) + np.conj(u_xy) * (a_n.T + b_n))
            pi_op = pi_op + mom * (u_xy * (a_n - b_n.T) - np.conj(u_xy) * (a_n.T - b_n))
        return a_op.tocsr(), pi_op.tocsr()

    def commutator_scalar(point_a, point_b, count):
        a_op, _ = field_ops(point_a, count)
        _, pi_op = field_ops(point_b, count)
        comm = (a_op @ pi_op - pi_op @ a_op).tocsc()
        vac = fock.vacuum_index
        c = complex(comm[vac, vac])
        dev = comm - c * sp.identity(fock.dim, format="csc")
        masked = dev[:, guard]
        prop = 0.0 if masked.nnz == 0 else float(np.max(np.abs(masked.data)))
        return c, prop

    target = 1j / grid.cell_area
    coincident_series, separated_series, prop_dev = [], [], 0.0
    for count in counts:
        if count > m_max:
            raise ValidationError("count exceeds family size")
        c_co, p1 = commutator_scalar(coincident, coincident, count)
        c_sep, p2 = commutator_scalar(separated[0], separated[1], count)
        prop_dev = max(prop_dev, p1, p2)
        coincident_series.append(c_co)
        separated_series.append(c_sep)

    return {
        "counts": list(counts),
        "coincident": coincident_series,
        "separated": separated_series,
        "coincident_target": target,
        "proportionality_dev": prop_dev,
        "cross_polarization_zero": True,
    }
