"""Strict JSON scenario configuration.

Unknown keys are errors; every numeric value is range checked with the
offending key named.  Loading fills all static defaults, and the
resolved configuration can be emitted back out such that
``load(emit(load(x))) == load(x)``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

from .errors import StrictConfigError, ValidationError
from .fields import TransverseGrid
from .optics import MirrorSpec, ResonatorSpec

_MIRROR_KEYS = {"curvature_radius", "aperture_halfwidth"}
_ALLOWED = {
    "resonator": {"cavity_length", "wavenumber", "reference_plane_z",
                  "mirror_right", "mirror_left"},
    "grid": {"nx", "ny", "dx", "dy", "guard_fraction"},
    "solve": {"count", "method", "tol", "max_iter", "seed"},
    "external_modes": {"family", "parameters"},
    "fock": {"n_true", "N_max", "gamma_source"},
    "decay": {"omega0", "dipole", "position", "N_modes", "delta_omega",
              "t_end", "dt", "fit_window"},
    "output": {"directory", "formats"},
}

_SOLVE_DEFAULTS = {"count": 8, "method": "arnoldi", "tol": 1e-10,
                   "max_iter": 5000, "seed": 7}
_EXTERNAL_DEFAULTS = {"family": "hermite_gaussian",
                      "parameters": {"count": 4, "waist": None, "z_boundary": None}}
_FOCK_DEFAULTS = {"n_true": 3, "N_max": 4, "gamma_source": "random"}
_DECAY_DEFAULTS = {"omega0": None, "dipole": None, "position": [0.0, 0.0, 0.0],
                   "N_modes": 201, "delta_omega": None, "t_end": None, "dt": None,
                   "fit_window": None}
_OUTPUT_DEFAULTS = {"directory": "foxli_out", "formats": ["json", "csv"]}


@dataclass
class Scenario:
    resonator: ResonatorSpec
    grid: TransverseGrid
    solve: dict
    external_modes: dict
    fock: dict
    decay: dict
    output: dict

    def to_dict(self) -> dict:
        def mirror(m):
            return {
                "curvature_radius": None if math.isinf(m.curvature_radius)
                else m.curvature_radius,
                "aperture_halfwidth": None if math.isinf(m.aperture_halfwidth)
                else m.aperture_halfwidth,
            }

        return {
            "resonator": {
                "cavity_length": self.resonator.cavity_length,
                "wavenumber": self.resonator.wavenumber,
                "reference_plane_z": self.resonator.reference_plane_z,
                "mirror_right": mirror(self.resonator.mirror_right),
                "mirror_left": mirror(self.resonator.mirror_left),
            },
            "grid": {
                "nx": self.grid.nx, "ny": self.grid.ny,
                "dx": self.grid.dx, "dy": self.grid.dy,
                "guard_fraction": self.grid.guard_fraction,
            },
            "solve": dict(self.solve),
            "external_modes": {"family": self.external_modes["family"],
                               "parameters": dict(self.external_modes["parameters"])},
            "fock": dict(self.fock),
            "decay": dict(self.decay),
            "output": dict(self.output),
        }


def _check_keys(mapping, allowed, path):
    for key in mapping:
        if key not in allowed:
            raise StrictConfigError(f"unknown key {path}.{key}" if path else
                                    f"unknown key {key}")


def _require(cond, key, message):
    if not cond:
        raise ValidationError(f"{key}: {message}")


def _mirror_from(d, path):
    d = d or {}
    _check_keys(d, _MIRROR_KEYS, path)
    r = d.get("curvature_radius")
    a = d.get("aperture_halfwidth")
    if a is not None:
        _require(a > 0, f"{path}.aperture_halfwidth", "must be positive")
    return MirrorSpec(
        curvature_radius=math.inf if r is None else float(r),
        aperture_halfwidth=math.inf if a is None else float(a),
    )


def scenario_from_dict(raw: dict) -> Scenario:
    _check_keys(raw, set(_ALLOWED), "")
    for group, allowed in _ALLOWED.items():
        if group in raw and isinstance(raw[group], dict) and group != "external_modes":
            _check_keys(raw[group], allowed, group)

    if "resonator" not in raw:
        raise ValidationError("resonator: section is required")
    if "grid" not in raw:
        raise ValidationError("grid: section is required")

    res = raw["resonator"]
    _require("cavity_length" in res, "resonator.cavity_length", "is required")
    _require(res["cavity_length"] > 0, "resonator.cavity_length", "must be positive")
    _require("wavenumber" in res, "resonator.wavenumber", "is required")
    _require(res["wavenumber"] > 0, "resonator.wavenumber", "must be positive")
    z0 = float(res.get("reference_plane_z", 0.0))
    _require(0.0 <= z0 < res["cavity_length"], "resonator.reference_plane_z",
             "must lie in [0, cavity_length)")
    resonator = ResonatorSpec(
        cavity_length=float(res["cavity_length"]),
        wavenumber=float(res["wavenumber"]),
        reference_plane_z=z0,
        mirror_right=_mirror_from(res.get("mirror_right"), "resonator.mirror_right"),
        mirror_left=_mirror_from(res.get("mirror_left"), "resonator.mirror_left"),
    )

    gd = raw["grid"]
    _require("nx" in gd and "dx" in gd, "grid.nx/grid.dx", "are required")
    _require(int(gd["nx"]) >= 2, "grid.nx", "must be >= 2")
    _require(gd["dx"] > 0, "grid.dx", "must be positive")
    guard = float(gd.get("guard_fraction", 0.125))
    _require(0.0 <= guard < 0.5, "grid.guard_fraction", "must lie in [0, 0.5)")
    grid = TransverseGrid(
        nx=int(gd["nx"]), ny=int(gd.get("ny", 1)),
        dx=float(gd["dx"]), dy=float(gd.get("dy", 1.0)),
        guard_fraction=guard,
    )

    solve = {**_SOLVE_DEFAULTS, **raw.get("solve", {})}
    _require(solve["count"] >= 1, "solve.count", "must be >= 1")
    _require(solve["method"] in ("arnoldi", "power_deflate", "dense"),
             "solve.method", "must be arnoldi, power_deflate, or dense")
    _require(solve["tol"] > 0, "solve.tol", "must be positive")
    _require(solve["max_iter"] >= 1, "solve.max_iter", "must be >= 1")

    ext_raw = raw.get("external_modes", {})
    _check_keys(ext_raw, _ALLOWED["external_modes"], "external_modes")
    family = ext_raw.get("family", _EXTERNAL_DEFAULTS["family"])
    _require(family in ("hermite_gaussian", "file"),
             "external_modes.family", "must be hermite_gaussian or file")
    if family == "hermite_gaussian":
        ext = {"family": family,
               "parameters": {**_EXTERNAL_DEFAULTS["parameters"],
                              **ext_raw.get("parameters", {})}}
        _check_keys(ext["parameters"], {"count", "waist", "z_boundary"},
                    "external_modes.parameters")
        _require(ext["parameters"]["count"] >= 1,
                 "external_modes.parameters.count", "must be >= 1")
    else:
        ext = {"family": family,
               "parameters": {"z_boundary": None, "entries": [],
                              **ext_raw.get("parameters", {})}}
        _check_keys(ext["parameters"], {"entries", "z_boundary"},
                    "external_modes.parameters")
        entries = ext["parameters"]["entries"]
        _require(len(entries) >= 1, "external_modes.parameters.entries",
                 "must list at least one mode")
        for i, e in enumerate(entries):
            _check_keys(e, {"u", "v", "wavenumber", "polarization"},
                        f"external_modes.parameters.entries[{i}]")
            for key in ("u", "v"):
                path = e.get(key)
                _require(path is not None and os.path.exists(path),
                         f"external_modes.parameters.entries[{i}].{key}",
                         f"file {path!r} does not exist")
            _require(e.get("wavenumber", 0) > 0,
                     f"external_modes.parameters.entries[{i}].wavenumber",
                     "must be positive")

    fock = {**_FOCK_DEFAULTS, **raw.get("fock", {})}
    _require(fock["n_true"] >= 1, "fock.n_true", "must be >= 1")
    _require(fock["N_max"] >= 2, "fock.N_max", "must be >= 2")
    _require(fock["gamma_source"] in ("identity", "random", "basis"),
             "fock.gamma_source", "must be identity, random, or basis")

    decay = {**_DECAY_DEFAULTS, **raw.get("decay", {})}
    if decay["omega0"] is not None:
        _require(decay["omega0"] > 0, "decay.omega0", "must be positive")
    if decay["dipole"] is not None:
        _require(len(decay["dipole"]) == 2, "decay.dipole", "must be a 2-vector")
    _require(len(decay["position"]) == 3, "decay.position", "must be (x, y, z)")
    _require(decay["N_modes"] >= 1 and decay["N_modes"] % 2 == 1,
             "decay.N_modes", "must be a positive odd count")
    for key in ("delta_omega", "t_end", "dt"):
        if decay[key] is not None:
            _require(decay[key] > 0, f"decay.{key}", "must be positive")
    if decay["fit_window"] is not None:
        _require(len(decay["fit_window"]) == 2
                 and decay["fit_window"][1] > decay["fit_window"][0],
                 "decay.fit_window", "must be [t1, t2] with t2 > t1")

    output = {**_OUTPUT_DEFAULTS, **raw.get("output", {})}
    for fmt in output["formats"]:
        _require(fmt in ("json", "csv"), "output.formats", f"unknown format {fmt!r}")

    return Scenario(resonator=resonator, grid=grid, solve=solve,
                    external_modes=ext, fock=fock, decay=decay, output=output)


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"scenario is not valid JSON: {exc}") from exc
    return scenario_from_dict(raw)


def emit_resolved(scenario: Scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
