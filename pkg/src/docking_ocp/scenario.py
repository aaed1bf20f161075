"""Scenario configuration: physical constants, initial state, bounds, weights.

Scenario files are YAML documents whose keys carry their units, e.g.
``initial_omega_deg_per_s``.  See ``data/flyaround.scenario``.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .constraints_cost import ControlBounds, CostWeights, DockingGeometry
from .dynamics import (DEG, NORM_TOL, BodyParams, InertiaTensor, make_state, mean_motion,
                       rotation_matrix_unchecked)
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class ScenarioConfig:
    gm: float
    orbit_radius: float
    mass: float
    inertia_s: InertiaTensor
    inertia_t: InertiaTensor
    geometry: DockingGeometry
    q_s0: tuple
    w_s0: tuple
    q_t0: tuple
    w_t0: tuple
    r0: tuple
    v0: tuple
    bounds: ControlBounds
    weights: CostWeights = field(default_factory=CostWeights)
    t_f_min: float = 10.0
    t_f_max: float = 2000.0
    steps: int = 370
    collision_constraint: bool = True
    safety_margin: float = 0.0
    name: str = "scenario"

    def __post_init__(self):
        for attr in ("q_s0", "q_t0"):
            q = np.asarray(getattr(self, attr), dtype=float)
            if q.shape != (4,) or not np.all(np.isfinite(q)):
                raise ConfigError("quaternion must have four finite components", field=attr)
            nrm = np.linalg.norm(q)
            if nrm == 0:
                raise ConfigError("zero quaternion cannot be normalized", field=attr)
            object.__setattr__(self, attr, tuple(q / nrm))
        for attr in ("w_s0", "w_t0", "r0", "v0"):
            v = np.asarray(getattr(self, attr), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ConfigError("expected three finite components", field=attr)
            object.__setattr__(self, attr, tuple(float(c) for c in v))
        try:
            mean_motion(self.gm, self.orbit_radius)
            self.body_params
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < self.t_f_min < self.t_f_max:
            raise ConfigError(f"need 0 < t_f_min < t_f_max, got [{self.t_f_min}, {self.t_f_max}]")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ConfigError(f"steps must be an integer >= 2, got {self.steps}", field="steps")
        if self.safety_margin < 0:
            raise ConfigError("safety margin must be nonnegative", field="safety_margin")
        self.geometry.check_feasible(self.safety_margin if self.collision_constraint else 0.0)

    @property
    def mean_motion(self):
        return mean_motion(self.gm, self.orbit_radius)

    @property
    def body_params(self):
        return BodyParams(self.mass, self.inertia_s, self.inertia_t,
                          mean_motion(self.gm, self.orbit_radius))

    def initial_state(self):
        return make_state(self.r0, self.v0, self.w_s0, self.w_t0, self.q_s0, self.q_t0)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        """Nested plain-data view; ``scenario_from_dict`` inverts it."""
        g, b, w = self.geometry, self.bounds, self.weights
        return {
            "name": self.name,
            "orbit": {"gm_m3_per_s2": self.gm, "radius_m": self.orbit_radius},
            "servicer": {
                "mass_kg": self.mass,
                "inertia_kg_m2": list(self.inertia_s.as_array()),
                "docking_point_m": list(g.d_s),
                "safety_radius_m": g.r_s,
                "initial_quaternion": list(self.q_s0),
                "initial_omega_rad_per_s": list(self.w_s0),
            },
            "target": {
                "inertia_kg_m2": list(self.inertia_t.as_array()),
                "docking_point_m": list(g.d_t),
                "safety_radius_m": g.r_t,
                "initial_quaternion": list(self.q_t0),
                "initial_omega_rad_per_s": list(self.w_t0),
            },
            "relative_state": {"position_m": list(self.r0), "velocity_m_per_s": list(self.v0)},
            "bounds": {"u_max_n": b.u_max, "m_max_nm": b.m_max,
                       "t_f_min_s": self.t_f_min, "t_f_max_s": self.t_f_max},
            "weights": {"l_tf": w.l_tf, "l_u": w.l_u, "l_m": w.l_m},
            "discretization": {"steps": int(self.steps)},
            "options": {"collision_constraint": self.collision_constraint,
                        "thrust_bound_mode": b.thrust_bound_mode,
                        "safety_margin_m": self.safety_margin},
        }

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- file format --------------------------------------------------------------

_SCHEMA = {
    "name": None,
    "orbit": {"gm_m3_per_s2", "radius_m"},
    "servicer": {"mass_kg", "inertia_kg_m2", "docking_point_m", "safety_radius_m",
                 "initial_quaternion", "initial_omega_deg_per_s", "initial_omega_rad_per_s"},
    "target": {"inertia_kg_m2", "docking_point_m", "safety_radius_m", "initial_quaternion",
               "initial_omega_deg_per_s", "initial_omega_rad_per_s"},
    "relative_state": {"position_m", "velocity_m_per_s"},
    "bounds": {"u_max_n", "m_max_nm", "t_f_min_s", "t_f_max_s"},
    "weights": {"l_tf", "l_u", "l_m"},
    "discretization": {"steps"},
    "options": {"collision_constraint", "thrust_bound_mode", "safety_margin_m"},
}
_REQUIRED = ("orbit", "servicer", "target", "relative_state", "bounds")


class _Reader:
    def __init__(self, doc, lines):
        self.doc = doc
        self.lines = lines

    def line_of(self, path):
        node = self.lines
        for key in path:
            if not isinstance(node, dict) or key not in node:
                return None
            node = node[key]
        return node.get("__line__") if isinstance(node, dict) else node

    def get(self, section, key, default=None, required=True):
        sec = self.doc.get(section, {})
        if key not in sec:
            if required and default is None:
                raise ConfigError("missing required field", field=f"{section}.{key}",
                                  line=self.line_of((section,)))
            return default
        return sec[key]

    def number(self, section, key, default=None):
        val = self.get(section, key, default)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"expected a number, got {val!r}", field=f"{section}.{key}",
                              line=self.line_of((section, key)))
        return float(val)

    def vector(self, section, key, size, default=None):
        val = self.get(section, key, default)
        ok = isinstance(val, (list, tuple)) and len(val) == size and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)
        if not ok:
            raise ConfigError(f"expected a list of {size} numbers, got {val!r}",
                              field=f"{section}.{key}", line=self.line_of((section, key)))
        return tuple(float(v) for v in val)

    def omega(self, section):
        sec = self.doc.get(section, {})
        if "initial_omega_deg_per_s" in sec and "initial_omega_rad_per_s" in sec:
            raise ConfigError("give the initial rate in degrees or radians, not both",
                              field=f"{section}.initial_omega_deg_per_s")
        if "initial_omega_deg_per_s" in sec:
            return tuple(DEG * v for v in self.vector(section, "initial_omega_deg_per_s", 3))
        return self.vector(section, "initial_omega_rad_per_s", 3, default=(0.0, 0.0, 0.0))


class _LineLoader(yaml.SafeLoader):
    pass


def _key_lines(node):
    """Map of key -> 1-based line number for every mapping in a YAML node tree."""
    if isinstance(node, yaml.MappingNode):
        out = {"__line__": node.start_mark.line + 1}
        for k, v in node.value:
            sub = _key_lines(v)
            out[k.value] = sub if isinstance(sub, dict) else k.start_mark.line + 1
        return out
    return None


def scenario_from_dict(doc, lines=None):
    """Build and validate a ScenarioConfig from a parsed scenario document."""
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be a mapping")
    lines = lines or {}
    rd = _Reader(doc, lines)
    for key, val in doc.items():
        if key not in _SCHEMA:
            raise ConfigError("unknown section", field=str(key), line=rd.line_of((key,)))
        allowed = _SCHEMA[key]
        if allowed is None:
            continue
        if not isinstance(val, dict):
            raise ConfigError("section must be a mapping", field=key, line=rd.line_of((key,)))
        for sub in val:
            if sub not in allowed:
                raise ConfigError("unknown field", field=f"{key}.{sub}",
                                  line=rd.line_of((key, sub)))
    for key in _REQUIRED:
        if key not in doc:
            raise ConfigError("missing required section", field=key)

    def guarded(fn, fld):
        try:
            return fn()
        except ConfigError as exc:
            if exc.field is None:
                raise ConfigError(str(exc), field=fld, line=rd.line_of(tuple(fld.split(".")))) from exc
            raise
        except DomainError as exc:
            raise ConfigError(str(exc), field=fld, line=rd.line_of(tuple(fld.split(".")))) from exc

    inertia_s = guarded(lambda: InertiaTensor(*rd.vector("servicer", "inertia_kg_m2", 3)),
                        "servicer.inertia_kg_m2")
    inertia_t = guarded(lambda: InertiaTensor(*rd.vector("target", "inertia_kg_m2", 3)),
                        "target.inertia_kg_m2")
    geometry = guarded(lambda: DockingGeometry(
        rd.vector("servicer", "docking_point_m", 3), rd.vector("target", "docking_point_m", 3),
        rd.number("servicer", "safety_radius_m"), rd.number("target", "safety_radius_m")),
        "servicer.safety_radius_m")
    opts = doc.get("options", {})
    mode = opts.get("thrust_bound_mode", "literal")
    bounds = guarded(lambda: ControlBounds(rd.number("bounds", "u_max_n"),
                                           rd.number("bounds", "m_max_nm"), mode),
                     "bounds.u_max_n")
    weights = guarded(lambda: CostWeights(rd.number("weights", "l_tf", 1.0),
                                          rd.number("weights", "l_u", 1.0),
                                          rd.number("weights", "l_m", 1.0)), "weights.l_tf")
    collision = opts.get("collision_constraint", True)
    if not isinstance(collision, bool):
        raise ConfigError("expected true/false", field="options.collision_constraint",
                          line=rd.line_of(("options", "collision_constraint")))
    steps = rd.get("discretization", "steps", 370)
    if isinstance(steps, bool) or not isinstance(steps, int):
        raise ConfigError(f"expected an integer, got {steps!r}", field="discretization.steps",
                          line=rd.line_of(("discretization", "steps")))

    return guarded(lambda: ScenarioConfig(
        gm=rd.number("orbit", "gm_m3_per_s2"),
        orbit_radius=rd.number("orbit", "radius_m"),
        mass=rd.number("servicer", "mass_kg"),
        inertia_s=inertia_s,
        inertia_t=inertia_t,
        geometry=geometry,
        q_s0=rd.vector("servicer", "initial_quaternion", 4),
        w_s0=rd.omega("servicer"),
        q_t0=rd.vector("target", "initial_quaternion", 4),
        w_t0=rd.omega("target"),
        r0=rd.vector("relative_state", "position_m", 3),
        v0=rd.vector("relative_state", "velocity_m_per_s", 3),
        bounds=bounds,
        weights=weights,
        t_f_min=rd.number("bounds", "t_f_min_s", 10.0),
        t_f_max=rd.number("bounds", "t_f_max_s", 2000.0),
        steps=steps,
        collision_constraint=collision,
        safety_margin=rd.number("options", "safety_margin_m", 0.0),
        name=str(doc.get("name", "scenario")),
    ), "servicer.docking_point_m")


def load_scenario(path):
    """Parse and validate a scenario file.

    Raises ConfigError carrying the offending field and line number.
    """
    text = Path(path).read_text()
    try:
        node = yaml.compose(text, Loader=_LineLoader)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse scenario: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from exc
    return scenario_from_dict(doc, _key_lines(node))


def flyaround_path():
    return resources.files("docking_ocp") / "data" / "flyaround.scenario"


def flyaround():
    """The shipped flyaround scenario."""
    with resources.as_file(flyaround_path()) as p:
        return load_scenario(p)


def docking_terminal_position(q, geometry):
    """Relative position at which docking is consistent with attitude ``q``."""
    return rotation_matrix_unchecked(np.asarray(q, float)).T @ geometry.offset


def quaternion_norm_ok(q, tol=NORM_TOL):
    return abs(float(np.dot(q, q)) - 1.0) <= tol
