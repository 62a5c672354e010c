"""Experiment configuration: parse, validate, reject.

Configs are YAML mappings with geometry / flow / solver / output sections.
Potential-valued fields are written as explicit cosine-mode lists (band
limited by construction and reviewable), never raw arrays. Any config
that fails GeometrySetup validation is rejected before computation with
a diagnostic naming the offending key.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ValidationError
from .flow import FlowConfig
from .geometry import (CosineMode, Degeneracy, GeometrySetup, Grid,
                       LocusPiece, PotentialField, ThetaSpec,
                       potential_from_modes)


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    geometry: dict
    flow: FlowConfig
    solver: dict
    output: dict
    acceptance: dict = field(default_factory=dict)

    def build_grid(self):
        geo = self.geometry
        try:
            return Grid(int(geo["n"]), int(geo["grid_points"]))
        except ValidationError as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    def build_theta(self, grid):
        geo = self.geometry
        theta0 = np.asarray(geo["theta0"], dtype=np.float64)
        deg = _parse_degeneracy(geo.get("degeneracy"))
        try:
            psi = None
            modes = geo.get("psi_modes") or []
            if modes:
                psi = potential_from_modes(grid, [_parse_mode(m, grid.n) for m in modes])
            return ThetaSpec(grid, theta0, psi, deg)
        except ValidationError as exc:
            raise ConfigError(f"geometry.theta0/psi: {exc}") from exc

    def build_setup(self, require_subsolution=False):
        grid = self.build_grid()
        theta = self.build_theta(grid)
        geo = self.geometry
        sub = None
        sub_modes = geo.get("subsolution_modes") or []
        if sub_modes:
            try:
                sub = potential_from_modes(grid, [_parse_mode(m, grid.n)
                                                  for m in sub_modes])
            except ValidationError as exc:
                raise ConfigError(f"geometry.subsolution_modes: {exc}") from exc
        eps0 = max(self.flow.epsilon_schedule) if self.flow.epsilon_schedule else 0.0
        try:
            return GeometrySetup.build(grid, theta, float(geo.get("beta", 0.0)),
                                       epsilon0=eps0, subsolution=sub,
                                       require_subsolution=require_subsolution)
        except ValidationError as exc:
            raise ConfigError(f"geometry: {exc}") from exc

    def initial_potential(self, grid):
        modes = self.geometry.get("phi0_modes") or []
        if not modes:
            return PotentialField(grid, np.zeros(grid.shape))
        try:
            return potential_from_modes(grid, [_parse_mode(m, grid.n) for m in modes])
        except ValidationError as exc:
            raise ConfigError(f"geometry.phi0_modes: {exc}") from exc

    def hashable(self):
        return self.raw


def _parse_mode(entry, n):
    try:
        k = tuple(int(v) for v in entry["k"])
        return CosineMode(k, float(entry["amp"]), float(entry.get("phase", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad cosine mode entry {entry!r}: {exc}") from exc


def _parse_degeneracy(section):
    if not section:
        return None
    try:
        pieces = []
        for entry in section["locus"]:
            if "axis" in entry:
                pieces.append(LocusPiece.subtorus(entry["axis"], entry["value"]))
            elif "point" in entry:
                pieces.append(LocusPiece.at_point(entry["point"]))
            else:
                raise ConfigError(f"locus entry {entry!r} needs 'axis'+'value' or 'point'")
        c0 = section.get("c0")
        return Degeneracy(float(section["gamma"]), tuple(pieces),
                          None if c0 is None else float(c0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"geometry.degeneracy: {exc}") from exc


_GEOMETRY_KEYS = {"n", "grid_points", "beta", "theta0", "psi_modes",
                  "degeneracy", "subsolution_modes", "phi0_modes"}
_FLOW_KEYS = {"dt_initial", "dt_max", "safety", "tol_converge", "max_steps",
              "epsilon_schedule", "record_every", "c2_alpha",
              "continue_on_failure"}
_SOLVER_KEYS = {"tol", "max_iter", "seeds", "seed_amplitude", "seed_max_mode",
                "normalization"}
_OUTPUT_KEYS = {"directory", "formats", "record_every"}


def _check_keys(section, allowed, name):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")


def load_config(source):
    """Parse a config from a path or a YAML string / mapping."""
    if isinstance(source, dict):
        raw = source
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "geometry" not in raw:
        raise ConfigError("config is missing the 'geometry' section")
    geometry = dict(raw["geometry"])
    _check_keys(geometry, _GEOMETRY_KEYS, "geometry")
    for key in ("n", "grid_points", "theta0"):
        if key not in geometry:
            raise ConfigError(f"geometry is missing required key '{key}'")
    flow_section = dict(raw.get("flow") or {})
    _check_keys(flow_section, _FLOW_KEYS, "flow")
    if "epsilon_schedule" in flow_section:
        flow_section["epsilon_schedule"] = tuple(flow_section["epsilon_schedule"])
    try:
        flow_cfg = FlowConfig(**flow_section)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"flow: {exc}") from exc
    solver = dict(raw.get("solver") or {})
    _check_keys(solver, _SOLVER_KEYS, "solver")
    solver.setdefault("tol", 1e-10)
    solver.setdefault("max_iter", 30)
    solver.setdefault("seeds", 1)
    solver.setdefault("seed_amplitude", 0.01)
    solver.setdefault("seed_max_mode", 2)
    solver.setdefault("normalization", "mean")
    output = dict(raw.get("output") or {})
    _check_keys(output, _OUTPUT_KEYS, "output")
    output.setdefault("directory", "out")
    return ExperimentConfig(
        raw=raw,
        seed=int(raw.get("seed", 0)),
        geometry=geometry,
        flow=flow_cfg,
        solver=solver,
        output=output,
        acceptance=dict(raw.get("acceptance") or {}),
    )
