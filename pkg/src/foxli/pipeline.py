"""Stage orchestration, persistence, and export.

Stages run in dependency order (modes, algebra, surface, fock, decay)
and persist deterministic JSON/CSV/NHMF artifacts into the scenario's
output directory.  Wall-clock timings go to a separate file so the
deterministic artifacts stay byte-identical across same-seed reruns.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.constants import c as SPEED_OF_LIGHT

from . import biortho, decay as decay_mod, fock as fock_mod
from .errors import FoxliError, ValidationError
from .modes import assign_labels, biorthonormalize, save_basis, solve_modes
from .optics import RoundTripOperator
from .scenario import Scenario, emit_resolved

STAGE_ORDER = ("modes", "algebra", "surface", "fock", "decay")
SCHEMA_VERSION = 1


@dataclass
class RunReport:
    scenario: dict
    stages: dict = field(default_factory=dict)
    hard_failures: list = field(default_factory=list)
    output_dir: str = ""

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "stages": self.stages,
            "hard_failures": self.hard_failures,
            "ok": self.ok,
        }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _complex_matrix_json(mat):
    return [[[z.real, z.imag] for z in row] for row in np.asarray(mat)]


def write_matrix_csv(path, mat):
    """Complex matrix as CSV with re/im column pairs at full precision."""
    mat = np.asarray(mat)
    with open(path, "w") as fh:
        header = []
        for j in range(mat.shape[1]):
            header += [f"re_{j}", f"im_{j}"]
        fh.write(",".join(header) + "\n")
        for row in mat:
            cells = []
            for z in row:
                cells += [f"{z.real:.17g}", f"{z.imag:.17g}"]
            fh.write(",".join(cells) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            vals = [float(tok) for tok in line.strip().split(",")]
            rows.append([complex(vals[i], vals[i + 1]) for i in range(0, len(vals), 2)])
    return np.array(rows, dtype=np.complex128)


def _resolve_stages(requested, scenario):
    if requested is None:
        return list(STAGE_ORDER)
    stages = [s for s in STAGE_ORDER if s in requested]
    unknown = set(requested) - set(STAGE_ORDER)
    if unknown:
        raise ValidationError(f"unknown stages: {sorted(unknown)}")
    deps = {"algebra": {"modes"}, "surface": {"modes"},
            "decay": {"modes", "algebra"}}
    if scenario.fock["gamma_source"] == "basis":
        deps["fock"] = {"modes", "algebra"}
    have = set(stages)
    for s in stages:
        missing = deps.get(s, set()) - have
        if missing:
            raise ValidationError(f"stage {s!r} requires {sorted(missing)}")
    return stages


def run_pipeline(scenario: Scenario, stages=None, out_dir=None) -> RunReport:
    """Execute the requested stages and persist their artifacts.

    Failures inside a stage are recorded (partial results retained);
    hard invariant violations land in ``report.hard_failures`` and make
    the CLI exit nonzero.
    """
    stages = _resolve_stages(stages, scenario)
    out = out_dir or scenario.output["directory"]
    os.makedirs(out, exist_ok=True)
    emit_resolved(scenario, os.path.join(out, "resolved_config.json"))

    report = RunReport(scenario=scenario.to_dict(), output_dir=out)
    timings = {}
    state = {}
    for stage in stages:
        t0 = time.perf_counter()
        entry = {"status": "ok", "artifacts": [], "failures": [], "summary": {}}
        try:
            _STAGE_FUNCS[stage](scenario, state, entry, out)
        except FoxliError as exc:
            entry["status"] = "failed"
            entry["failures"].append(str(exc))
            report.hard_failures.append(f"{stage}: {exc}")
        timings[stage] = time.perf_counter() - t0
        for failure in entry["failures"]:
            if failure.startswith("invariant"):
                report.hard_failures.append(f"{stage}: {failure}")
        report.stages[stage] = entry

    _write_json(os.path.join(out, "runreport.json"), report.to_dict())
    _write_json(os.path.join(out, "timings.json"), timings)
    return report


def _stage_modes(scenario: Scenario, state, entry, out):
    op = RoundTripOperator(scenario.resonator, scenario.grid, "forward")
    basis = solve_modes(
        op,
        count=scenario.solve["count"],
        method=scenario.solve["method"],
        tol=scenario.solve["tol"],
        max_iter=scenario.solve["max_iter"],
        seed=scenario.solve["seed"],
    )
    basis = biorthonormalize(basis)
    axial = max(1, round(scenario.resonator.wavenumber
                         * scenario.resonator.cavity_length / math.pi))
    basis = assign_labels(basis, scenario.resonator.cavity_length, axial)
    basis_dir = os.path.join(out, "basis")
    save_basis(basis, basis_dir)
    state["basis"] = basis
    state["operator"] = op
    entry["artifacts"].append(basis_dir)
    dev = basis.solve_report.get("biorth_max_dev", None)
    entry["summary"] = {
        "eigenvalues": [[m.gamma.real, m.gamma.imag] for m in basis.modes],
        "biorth_max_dev": dev,
    }
    if dev is not None and dev > 1e-8:
        entry["failures"].append(f"invariant: biorthogonality deviation {dev:.3e} > 1e-8")


def _stage_algebra(scenario: Scenario, state, entry, out):
    basis = state["basis"]
    mats = biortho.overlap_matrices(basis)
    factors = biortho.petermann_factors(mats)
    inter = biortho.interrelation_residuals(basis, mats)
    prod_dev = float(np.max(np.abs(mats.u_gram @ mats.v_gram - np.eye(len(basis)))))
    state["overlaps"] = mats
    state["petermann"] = factors

    path_json = os.path.join(out, "overlaps.json")
    _write_json(path_json, {
        "schema_version": SCHEMA_VERSION,
        "u_gram": _complex_matrix_json(mats.u_gram),
        "v_gram": _complex_matrix_json(mats.v_gram),
        "petermann": list(factors),
        "interrelation_residuals": inter,
        "product_identity_dev": prod_dev,
        "asymmetry": {"u": mats.asymmetry_u, "v": mats.asymmetry_v},
    })
    entry["artifacts"].append(path_json)
    if "csv" in scenario.output["formats"]:
        for name, mat in (("u_gram", mats.u_gram), ("v_gram", mats.v_gram)):
            p = os.path.join(out, f"{name}.csv")
            write_matrix_csv(p, mat)
            entry["artifacts"].append(p)

        pet_path = os.path.join(out, "petermann.csv")
        with open(pet_path, "w") as fh:
            fh.write("theta,polarization,re_gamma,im_gamma,gamma_sq,petermann\n")
            for m, k in zip(basis.modes, factors):
                fh.write(
                    f"{m.transverse_index},{m.polarization},"
                    f"{m.gamma.real:.17g},{m.gamma.imag:.17g},"
                    f"{abs(m.gamma) ** 2:.17g},{k:.17g}\n"
                )
        entry["artifacts"].append(pet_path)
    entry["summary"] = {"petermann": list(factors),
                        "product_identity_dev": prod_dev,
                        "interrelation_residuals": inter}
    if np.any(factors < 1.0 - 1e-9):
        entry["failures"].append(
            f"invariant: excess factor below 1 ({factors.min():.12f})"
        )


def _stage_surface(scenario: Scenario, state, entry, out):
    basis = state["basis"]
    params = scenario.external_modes["parameters"]
    z_b = params["z_boundary"]
    if z_b is None:
        z_b = scenario.resonator.cavity_length
    if scenario.external_modes["family"] == "hermite_gaussian":
        waist = params["waist"] or basis.grid.extent_x / 8.0
        k_ext = scenario.resonator.wavenumber
        family = biortho.hermite_gaussian_family(
            basis.grid, params["count"], waist, k_ext, z_label=z_b
        )
    else:
        from .fields import read_field

        family = [
            biortho.ExternalMode(
                u=read_field(e["u"], basis.grid.guard_fraction),
                v=read_field(e["v"], basis.grid.guard_fraction),
                wavenumber=e["wavenumber"],
                polarization=e.get("polarization", "x"),
            )
            for e in params["entries"]
        ]
    couplings = biortho.surface_integrals(basis, family, z_b)
    state["surface"] = couplings
    path = os.path.join(out, "surface.json")
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "z_boundary": z_b,
        "magnitudes": couplings.magnitudes(),
        "vu": _complex_matrix_json(couplings.vu),
        "uv": _complex_matrix_json(couplings.uv),
        "vv": _complex_matrix_json(couplings.vv),
        "uu": _complex_matrix_json(couplings.uu),
    })
    entry["artifacts"].append(path)
    entry["summary"] = {"magnitudes": couplings.magnitudes()}


def _fock_coefficients(scenario: Scenario, state):
    n = scenario.fock["n_true"]
    source = scenario.fock["gamma_source"]
    if source == "identity":
        g = np.eye(n, dtype=np.complex128)
        return g, g.copy()
    if source == "random":
        rng = np.random.default_rng(scenario.solve["seed"])
        g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        g += n * np.eye(n)  # keep comfortably invertible
        lam = np.linalg.inv(g).conj().T
        return g, lam
    # gamma_source == "basis": factor the measured u-set Gram matrix.
    mats = state["overlaps"]
    if mats.n_modes < n:
        raise ValidationError("fock.n_true exceeds the number of solved modes")
    block = mats.u_gram[:n, :n]
    evals, evecs = scipy.linalg.eigh(block)
    if evals.min() <= 0:
        raise ValidationError("u-set Gram block is not positive definite")
    lam = (evecs * np.sqrt(evals)) @ evecs.conj().T
    g = (evecs * (1.0 / np.sqrt(evals))) @ evecs.conj().T
    return g, lam


def _stage_fock(scenario: Scenario, state, entry, out):
    n = scenario.fock["n_true"]
    rep = fock_mod.build_fock(n, n, scenario.fock["N_max"])
    g, lam = _fock_coefficients(scenario, state)
    # Frequencies in units of the resonance: the algebra checks are scale
    # free and absolute tolerances only mean something at order one.
    ops = fock_mod.build_nhm_ops(rep, g, lam, [1.0] * n)
    algebra = fock_mod.check_commutators(ops)
    hams = fock_mod.build_hamiltonians(ops)
    # External role needs a frequency spread: with equal frequencies the
    # oscillator part collapses to the true-mode number operator and the
    # exchange coupling vanishes identically.
    ops_ext = fock_mod.build_nhm_ops(
        rep, g, lam, [1.0 + 0.05 * j for j in range(n)]
    )
    hams_ext = fock_mod.build_hamiltonians(ops_ext)
    h_e = hams_ext["H_E"]
    herm_dev = float(abs(h_e - h_e.conj().T).max())
    h_e0 = hams_ext["H_E0"]
    nonherm = float(abs(h_e0 - h_e0.conj().T).max())
    eig_report = fock_mod.check_eigenstates(
        hams["H_C"], ops, max_total=min(3, scenario.fock["N_max"])
    )
    from .crossregion import cross_region_check, make_narrowband_toy

    cross = cross_region_check(make_narrowband_toy())
    state["fock_ops"] = ops
    path = os.path.join(out, "fock_report.json")
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "gamma_source": scenario.fock["gamma_source"],
        "algebra": algebra.to_dict(),
        "hamiltonian_hermiticity_dev": herm_dev,
        "oscillator_part_nonhermiticity": nonherm,
        "eigenstates": eig_report.to_dict(),
        "cross_region": cross.to_dict(),
    })
    entry["artifacts"].append(path)
    entry["summary"] = {
        "algebra_max_dev": algebra.max_dev,
        "hamiltonian_hermiticity_dev": herm_dev,
        "eigenstate_gram_dev": eig_report.gram_dev,
    }
    if not algebra.all_passed:
        entry["failures"].append(
            f"invariant: commutator deviation {algebra.max_dev:.3e} > {algebra.tol:.1e}"
        )
    if herm_dev > 1e-12:
        entry["failures"].append(
            f"invariant: summed Hamiltonian not Hermitean ({herm_dev:.3e})"
        )
    if not eig_report.all_passed:
        entry["failures"].append("invariant: eigenstate suite failed")


def _stage_decay(scenario: Scenario, state, entry, out):
    basis = state["basis"]
    mats = state["overlaps"]
    cfg = scenario.decay
    omega0 = cfg["omega0"] or basis.modes[0].omega
    dipole = cfg["dipole"]
    auto_dipole = dipole is None
    atom = decay_mod.TwoLevelAtom(
        omega0=omega0,
        dipole=(1.0, 0.0) if auto_dipole else tuple(dipole),
        position=tuple(cfg["position"]),
    )
    base = decay_mod.coupling_constants(basis, atom, mats)
    delta_omega = cfg["delta_omega"] or (
        math.pi * SPEED_OF_LIGHT / scenario.resonator.cavity_length
    )
    comb = _comb_from_block(base, atom.omega0, cfg["N_modes"], delta_omega)
    rate = decay_mod.markov_rate(comb)
    if auto_dipole:
        # Scale the couplings into the weak-coupling regime so a Markov
        # window exists: excited lifetime ~ 20 kernel correlation times.
        if rate["gamma_e"] <= 0.0:
            raise ValidationError("atom is decoupled from every resonant mode")
        tau_c = comb.correlation_time()
        target = 1.0 / (20.0 * tau_c)
        scale = math.sqrt(target / rate["gamma_e"])
        comb.g_absorb = comb.g_absorb * scale
        comb.g_emit = comb.g_emit * scale
        rate = decay_mod.markov_rate(comb)
    t_rec = comb.recurrence_time()
    t_end = cfg["t_end"] or min(4.0 / max(rate["gamma_e"], 1e-300), 0.8 * t_rec)
    deltas = comb.detunings()
    scale = max(np.max(np.abs(deltas)),
                np.sum(np.abs(comb.g_absorb)) + np.sum(np.abs(comb.g_emit)))
    dt = cfg["dt"] or 0.05 / scale
    result = decay_mod.evolve_amplitudes(comb, t_end, dt)
    result.predicted_rate = rate["gamma_e"]
    tau_c = comb.correlation_time()
    window = cfg["fit_window"] or [max(5.0 * tau_c, 0.05 * t_end), 0.9 * t_end]
    fit = decay_mod.fit_decay_rate(result, window)
    result.fitted_rate = fit["rate"]
    drift = float(np.max(np.abs(result.gram_norm - 1.0)))

    if "csv" in scenario.output["formats"]:
        series_path = os.path.join(out, "decay_series.csv")
        with open(series_path, "w") as fh:
            fh.write("t,re_ce,im_ce,p_e,gram_norm\n")
            for i, t in enumerate(result.times):
                ce = result.c_excited[i]
                fh.write(f"{t:.17g},{ce.real:.17g},{ce.imag:.17g},"
                         f"{abs(ce) ** 2:.17g},{result.gram_norm[i]:.17g}\n")
        entry["artifacts"].append(series_path)
    summary_path = os.path.join(out, "decay_summary.json")
    _write_json(summary_path, {
        "schema_version": SCHEMA_VERSION,
        "fitted_rate": fit["rate"],
        "predicted_rate": rate["gamma_e"],
        "free_space_rate": rate["gamma_free"],
        "breakdown": rate["breakdown"],
        "petermann_factors": [float(np.real(np.diag(b)).max())
                              for b in comb.v_gram_blocks[:1]],
        "fit_window": fit["window"],
        "r_squared": fit["r_squared"],
        "gram_norm_drift": drift,
        "field_relation_residual": base.field_relation_residual,
        "backend": result.backend,
    })
    entry["artifacts"].append(summary_path)
    entry["summary"] = {
        "fitted_rate": fit["rate"],
        "predicted_rate": rate["gamma_e"],
        "r_squared": fit["r_squared"],
        "gram_norm_drift": drift,
    }
    state["decay_result"] = result
    if drift > 1e-8:
        entry["failures"].append(f"invariant: Gram-norm drift {drift:.3e} > 1e-8")


def _comb_from_block(base: "decay_mod.CouplingSet", omega0, n_freq, delta_omega):
    """Replicate the resonant transverse block over a flat frequency comb.

    Couplings are held constant across the comb (slowly varying
    assumption); the mode density becomes one family per comb spacing.
    """
    res = int(np.argmin([abs(base.omegas[idx[0]] - omega0) for idx in base.blocks]))
    sel = base.blocks[res]
    g_block = base.g_absorb[sel]
    v_block = base.v_gram_blocks[res]
    # The one-photon Gram pair must be mutually inverse for the comb to be
    # a closed, norm-conserving system; keep the measured v-set Gram (it
    # carries the excess factors that set the physics) and take its
    # inverse for the u side.  For a complete basis the two coincide.
    u_block = np.linalg.inv(v_block)
    width = len(sel)
    half = (n_freq - 1) // 2

    n_modes = width * n_freq
    omegas = np.empty(n_modes)
    thetas = np.empty(n_modes, dtype=int)
    g_abs = np.empty(n_modes, dtype=np.complex128)
    g_emi = np.empty(n_modes, dtype=np.complex128)
    blocks, ug, vg = [], [], []
    for j in range(n_freq):
        om = omega0 + (j - half) * delta_omega
        idx = np.arange(width * j, width * (j + 1))
        omegas[idx] = om
        thetas[idx] = np.arange(width)
        g_abs[idx] = g_block
        g_emi[idx] = -v_block @ np.conj(g_block)
        blocks.append(idx)
        ug.append(u_block)
        vg.append(v_block)
    return decay_mod.CouplingSet(
        omega0=omega0,
        omegas=omegas,
        thetas=thetas,
        polarizations=[base.polarizations[sel[0]]] * n_modes,
        g_absorb=g_abs,
        g_emit=g_emi,
        blocks=blocks,
        u_gram_blocks=ug,
        v_gram_blocks=vg,
        rho=1.0 / delta_omega,
    )


_STAGE_FUNCS = {
    "modes": _stage_modes,
    "algebra": _stage_algebra,
    "surface": _stage_surface,
    "fock": _stage_fock,
    "decay": _stage_decay,
}


def export_results(run: RunReport, fmt: str) -> list:
    """Re-emit the persisted artifacts of a completed run in one format.

    JSON artifacts already exist; ``csv`` adds/refreshes CSV views of the
    matrices and eigenvalues.  Returns the written paths.
    """
    out = run.output_dir
    written = []
    if fmt not in ("json", "csv"):
        raise ValidationError("format must be json or csv")
    if fmt == "csv":
        modes_summary = run.stages.get("modes", {}).get("summary", {})
        eigs = modes_summary.get("eigenvalues")
        if eigs:
            path = os.path.join(out, "eigenvalues.csv")
            with open(path, "w") as fh:
                fh.write("index,re_gamma,im_gamma,abs_gamma\n")
                for i, (re, im) in enumerate(eigs):
                    fh.write(f"{i},{re:.17g},{im:.17g},{abs(complex(re, im)):.17g}\n")
            written.append(path)
    else:
        path = os.path.join(out, "runreport.json")
        _write_json(path, run.to_dict())
        written.append(path)
    return written
