"""Scenario documents, the transition mission and closed-loop execution.

Per control tick the runner reads the state, evaluates the baseline law,
allocates the virtual control with the effectiveness the allocator believes
in (the true one when reallocation is enabled, identity otherwise) and then
integrates the plant with the *true* effectiveness over the physics
sub-steps.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import yaml

from .allocator import AllocatorConfig, restrict_config, wls_allocate
from .config import ConfigError, format_quantity, parse_quantity, parse_section
from .control import BaselineController, BaselineGains
from .dynamics import AeroModel, RigidBody, WrenchModel, step_rk4, trim_hover
from .effectors import SurfaceDerivatives, build_allocation_matrix
from .synthesis import CHANNELS, to_baseline_gains
from .vehicle import (
    ACTUATOR_NAMES, AILERON, ELEVATOR, N_ACTUATORS, N_ROTORS, RUDDER,
    FaultEvent, VehicleParams, effectiveness_at, validate_events, wrap_angle,
)

SHIPPED_SCENARIOS = ("nofault", "sym-1b2b-elev50", "asym-1b3b-elev50")
DIVERGENCE_LIMIT = 1e6


class Mode(IntEnum):
    MULTICOPTER = 0
    TRANSITION = 1
    FIXED_WING = 2


@dataclass(frozen=True)
class Mission:
    hover_altitude: float = 30.0
    transition_start: float = 20.0
    critical_airspeed: float = 14.0
    # scripted horizontal-rotor thrust: linear ramp to cruise_thrust
    cruise_thrust: float = 12.0
    thrust_ramp: float = 3.0
    # after the switch the thrust eases to a level that holds roughly cruise speed
    fw_thrust: float = 5.5
    # vertical rotors fade to zero after entering fixed-wing mode
    rotor_fade: float = 4.0
    # fixed-wing altitude-to-pitch law
    fw_altitude_gain: float = 0.05
    fw_climb_rate_gain: float = 0.08
    fw_pitch_min: float = math.radians(-10.0)
    fw_pitch_max: float = math.radians(15.0)
    fw_pitch_rate: float = 0.2

    def __post_init__(self):
        if self.transition_start < 0:
            raise ValueError("transition_start must be >= 0")
        if not self.hover_altitude > 0:
            raise ValueError("hover_altitude must be positive")
        if not self.critical_airspeed > 0:
            raise ValueError("critical_airspeed must be positive")
        if min(self.thrust_ramp, self.rotor_fade, self.cruise_thrust, self.fw_thrust) < 0:
            raise ValueError("thrust_ramp, rotor_fade, cruise_thrust and fw_thrust must be >= 0")

    def _ramp(self, elapsed: float) -> float:
        if elapsed <= 0:
            return 0.0
        if self.thrust_ramp == 0 or elapsed >= self.thrust_ramp:
            return 1.0
        return elapsed / self.thrust_ramp

    def horizontal_thrust(self, t: float, t_switch: Optional[float] = None) -> float:
        thrust = self.cruise_thrust * self._ramp(t - self.transition_start)
        if t_switch is not None:
            thrust += (self.fw_thrust - self.cruise_thrust) * self._ramp(t - t_switch)
        return thrust


def _default_gains() -> BaselineGains:
    return load_gains(resources.files("vtolftc").joinpath("data/default_gains.yaml").read_text())


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    aero: AeroModel = field(default_factory=AeroModel)
    gains: Optional[BaselineGains] = None
    tune_on_load: bool = False
    allocator: AllocatorConfig = field(default_factory=AllocatorConfig)
    mission: Mission = field(default_factory=Mission)
    faults: tuple = ()
    reallocation: bool = True
    duration: float = 60.0
    seed: int = 0
    dt_physics: float = 0.002
    dt_control: float = 0.01

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not (self.dt_physics > 0 and self.dt_control > 0):
            raise ValueError("time steps must be positive")
        ratio = self.dt_control / self.dt_physics
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("control tick must be an integer multiple of the physics step")
        object.__setattr__(self, "faults", tuple(self.faults))
        validate_events(self.faults)
        for e in self.faults:
            if e.time > self.duration:
                raise ValueError(f"fault at t={e.time} s lies beyond the {self.duration} s duration")
        if self.gains is None:
            if self.tune_on_load:
                from .synthesis import StructuredHinfTuner
                gains = StructuredHinfTuner(seed=self.seed).fit().baseline_gains()
            else:
                gains = _default_gains()
            object.__setattr__(self, "gains", gains)

    @property
    def first_fault_time(self) -> Optional[float]:
        return self.faults[0].time if self.faults else None

    def with_(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


# ---------------------------------------------------------------- documents

_VEHICLE_SCHEMA = {
    "mass": "mass", "inertia": "matrix:inertia", "wing_span": "length",
    "wing_area": "area", "mean_chord": "length", "cruise_speed": "speed",
    "k_T": "thrust_coeff", "k_M": "torque_coeff", "l_f": "length", "l_1": "length",
    "l_2": "length", "l_3": "length", "l_4": "length",
    "surface_limits": "list:angle", "throttle_limits": "list:percent", "g": "accel",
}
_AERO_SCHEMA = {
    "CL0": "dimensionless", "CL_alpha": "per_rad", "alpha_stall": "angle",
    "CD0": "dimensionless", "k": "dimensionless",
}
_SURFACE_SCHEMA = {"C_l_da": "table", "C_m_de": "table", "C_n_dr": "table", "rho": "density"}
_MISSION_SCHEMA = {
    "hover_altitude": "length", "transition_start": "time", "critical_airspeed": "speed",
    "cruise_thrust": "force", "fw_thrust": "force", "thrust_ramp": "time", "rotor_fade": "time",
    "fw_altitude_gain": "dimensionless", "fw_climb_rate_gain": "dimensionless",
    "fw_pitch_min": "angle", "fw_pitch_max": "angle", "fw_pitch_rate": "rate",
}
_TOP_LEVEL = {"name", "vehicle", "aero", "surfaces", "gains", "allocator", "mission",
              "faults", "reallocation", "duration", "seed", "dt_physics", "dt_control"}


def _actuator_index(value, path: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(path, "expected an actuator name or 1-based index")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        key = value.strip().lower()
        aliases = {"aileron": "delta_a", "elevator": "delta_e", "rudder": "delta_r"}
        key = aliases.get(key, key)
        if not key.startswith(("thr_", "delta_")):
            key = "thr_" + key
        if key in ACTUATOR_NAMES:
            return ACTUATOR_NAMES.index(key) + 1
    raise ConfigError(path, f"unknown actuator {value!r}")


def _parse_faults(doc, path="faults") -> List[FaultEvent]:
    if doc is None:
        return []
    if not isinstance(doc, list):
        raise ConfigError(path, "expected a list of fault events")
    events = []
    for i, item in enumerate(doc):
        sub = f"{path}[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(sub, "expected a mapping")
        unknown = set(item) - {"time", "actuator", "effectiveness", "recovery"}
        if unknown:
            raise ConfigError(f"{sub}.{sorted(unknown)[0]}", "unknown field")
        for key in ("time", "actuator", "effectiveness"):
            if key not in item:
                raise ConfigError(f"{sub}.{key}", "missing required field")
        try:
            events.append(FaultEvent(
                time=parse_quantity(item["time"], "time", f"{sub}.time"),
                actuator_index=_actuator_index(item["actuator"], f"{sub}.actuator"),
                new_effectiveness=parse_quantity(item["effectiveness"], "dimensionless",
                                                 f"{sub}.effectiveness"),
                recovery=bool(item.get("recovery", False)),
            ))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(sub, str(exc)) from None
    return events


def load_gains(document) -> BaselineGains:
    doc = yaml.safe_load(document) if isinstance(document, str) else document
    if not isinstance(doc, dict):
        raise ConfigError("gains", "expected a mapping of channel -> [kpo, kp, ki, kd]")
    vecs = {}
    for name in CHANNELS:
        if name not in doc:
            raise ConfigError(f"gains.{name}", "missing channel")
        g = doc[name]
        if isinstance(g, dict):
            g = [g.get(k) for k in ("outer_kp", "kp", "ki", "kd")]
        if not isinstance(g, list) or len(g) != 4 or not all(isinstance(x, (int, float)) for x in g):
            raise ConfigError(f"gains.{name}", "expected [outer_kp, kp, ki, kd]")
        vecs[name] = [float(x) for x in g]
    return to_baseline_gains(vecs)


def dump_gains(gains) -> str:
    if isinstance(gains, BaselineGains):
        gains = {n: c.as_vector() for n, c in gains.channels().items()}
    return yaml.safe_dump({n: [float(x) for x in gains[n]] for n in CHANNELS}, sort_keys=False)


def _build(cls, values: dict, path: str):
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None


def load_scenario(document: Union[str, dict, Path]) -> Scenario:
    """Parse and validate a scenario document (YAML text, mapping or path).

    A shipped scenario may be referenced by name (``"nofault"``, ...).
    """
    if isinstance(document, Path) or (isinstance(document, str) and "\n" not in document
                                      and (document.endswith((".yaml", ".yml"))
                                           or document in SHIPPED_SCENARIOS)):
        document = _read_document(str(document))
    doc = yaml.safe_load(document) if isinstance(document, str) else copy.deepcopy(document)
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "scenario document must be a mapping")
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")

    vehicle = _build(VehicleParams, parse_section(doc.get("vehicle"), _VEHICLE_SCHEMA, "vehicle"),
                     "vehicle")
    surfaces = _build(SurfaceDerivatives, parse_section(doc.get("surfaces"), _SURFACE_SCHEMA,
                                                        "surfaces"), "surfaces")
    aero_vals = parse_section(doc.get("aero"), _AERO_SCHEMA, "aero")
    aero = _build(AeroModel, {**aero_vals, "surfaces": surfaces}, "aero")
    mission = _build(Mission, parse_section(doc.get("mission"), _MISSION_SCHEMA, "mission"),
                     "mission")

    alloc_doc = doc.get("allocator") or {}
    if not isinstance(alloc_doc, dict):
        raise ConfigError("allocator", "expected a mapping")
    unknown = set(alloc_doc) - {"W1", "W2", "gamma", "u_desired", "max_iterations", "tolerance"}
    if unknown:
        raise ConfigError(f"allocator.{sorted(unknown)[0]}", "unknown field")
    alloc_vals = dict(alloc_doc)
    if alloc_vals.get("W1") == "range":
        # preference normalised by actuator travel
        alloc_vals["W1"] = 1.0 / (vehicle.upper_bounds - vehicle.lower_bounds)
    for key in ("gamma", "tolerance"):
        if key in alloc_vals:
            alloc_vals[key] = float(alloc_vals[key])
    allocator = _build(AllocatorConfig, alloc_vals, "allocator")

    gains_doc = doc.get("gains", "default")
    tune = False
    gains = None
    if gains_doc == "tune":
        tune = True
    elif gains_doc != "default":
        gains = load_gains(gains_doc)

    top = {}
    for key, dim in (("duration", "time"), ("dt_physics", "time"), ("dt_control", "time")):
        if key in doc:
            top[key] = parse_quantity(doc[key], dim, key)
    if "reallocation" in doc and not isinstance(doc["reallocation"], bool):
        raise ConfigError("reallocation", "expected true or false")
    if "seed" in doc and (isinstance(doc["seed"], bool) or not isinstance(doc["seed"], int)):
        raise ConfigError("seed", "expected an integer")
    faults = _parse_faults(doc.get("faults"))
    return _build(Scenario, dict(
        name=str(doc.get("name", "custom")), vehicle=vehicle, aero=aero, gains=gains,
        tune_on_load=tune, allocator=allocator, mission=mission, faults=tuple(faults),
        reallocation=doc.get("reallocation", True), seed=doc.get("seed", 0), **top,
    ), "<root>")


def _read_document(ref: str) -> str:
    if ref in SHIPPED_SCENARIOS:
        return resources.files("vtolftc").joinpath(f"scenarios/{ref}.yaml").read_text()
    return Path(ref).read_text()


def canonical_document(s: Scenario) -> dict:
    """Fully materialised scenario with canonical units, suitable for echoing."""
    v, a, m = s.vehicle, s.aero, s.mission

    def deriv(name):
        d = getattr(a.surfaces, name)
        if hasattr(d, "points"):
            return [[float(V), float(c)] for V, c in d.points]
        if callable(d):
            raise ValueError(f"{name} is an opaque callable and cannot be echoed")
        return float(d)

    vehicle = {key: format_quantity(getattr(v, key), dim) for key, dim in _VEHICLE_SCHEMA.items()
               if not dim.startswith(("list:", "matrix:"))}
    vehicle["inertia"] = [[float(x) for x in row] for row in v.inertia]
    vehicle["surface_limits"] = [format_quantity(x, "angle") for x in v.surface_limits]
    vehicle["throttle_limits"] = [format_quantity(x, "percent") for x in v.throttle_limits]
    ud = s.allocator.u_desired
    return {
        "name": s.name,
        "duration": format_quantity(s.duration, "time"),
        "dt_physics": format_quantity(s.dt_physics, "time"),
        "dt_control": format_quantity(s.dt_control, "time"),
        "seed": s.seed,
        "reallocation": s.reallocation,
        "vehicle": vehicle,
        "aero": {key: format_quantity(getattr(a, key), dim) for key, dim in _AERO_SCHEMA.items()},
        "surfaces": {"C_l_da": deriv("C_l_da"), "C_m_de": deriv("C_m_de"),
                     "C_n_dr": deriv("C_n_dr"), "rho": format_quantity(a.surfaces.rho, "density")},
        "mission": {key: format_quantity(getattr(m, key), dim) for key, dim in _MISSION_SCHEMA.items()},
        "allocator": {
            "W1": [float(x) for x in s.allocator.W1], "W2": [float(x) for x in s.allocator.W2],
            "gamma": float(s.allocator.gamma),
            "u_desired": ud if isinstance(ud, str) else [float(x) for x in ud],
            "max_iterations": int(s.allocator.max_iterations),
            "tolerance": float(s.allocator.tolerance),
        },
        "gains": yaml.safe_load(dump_gains(s.gains)),
        "faults": [{"time": format_quantity(e.time, "time"),
                    "actuator": ACTUATOR_NAMES[e.actuator_index - 1],
                    "effectiveness": float(e.new_effectiveness),
                    **({"recovery": True} if e.recovery else {})} for e in s.faults],
    }


# ---------------------------------------------------------------- mission

def mission_mode(t: float, V: float, mode: Mode, mission: Mission) -> Mode:
    """One-way latch: multicopter -> transition -> fixed-wing."""
    if mode == Mode.FIXED_WING:
        return mode
    if t < mission.transition_start:
        return Mode.MULTICOPTER
    if V >= mission.critical_airspeed:
        return Mode.FIXED_WING
    return Mode.TRANSITION


# ---------------------------------------------------------------- traces

STATE_COLUMNS = ("x", "y", "z", "u", "v", "w", "phi", "theta", "psi", "p", "q", "r", "H")
VC_COLUMNS = ("v_Faz", "v_Max", "v_May", "v_Maz")
ACHIEVED_COLUMNS = ("bwu_Faz", "bwu_Max", "bwu_May", "bwu_Maz")
COLUMNS = (
    ("t",) + STATE_COLUMNS + ("V", "mode", "h_cmd", "theta_ref", "horiz_thrust")
    + VC_COLUMNS + tuple(f"u_{n}" for n in ACTUATOR_NAMES) + ACHIEVED_COLUMNS
    + tuple(f"w_{n}" for n in ACTUATOR_NAMES) + ("alloc_iters",)
)
UNITS = {
    "t": "s", "x": "m", "y": "m", "z": "m", "u": "m/s", "v": "m/s", "w": "m/s",
    "phi": "rad", "theta": "rad", "psi": "rad", "p": "rad/s", "q": "rad/s", "r": "rad/s",
    "H": "m", "V": "m/s", "mode": "-", "h_cmd": "m", "theta_ref": "rad", "horiz_thrust": "N",
    "v_Faz": "N", "v_Max": "N*m", "v_May": "N*m", "v_Maz": "N*m",
    "bwu_Faz": "N", "bwu_Max": "N*m", "bwu_May": "N*m", "bwu_Maz": "N*m",
    "alloc_iters": "-",
}
for _n in ACTUATOR_NAMES:
    UNITS[f"u_{_n}"] = "%" if _n.startswith("thr") else "rad"
    UNITS[f"w_{_n}"] = "-"
_COL = {name: i for i, name in enumerate(COLUMNS)}


@dataclass
class Trace:
    data: np.ndarray
    columns: tuple = COLUMNS
    dt_control: float = 0.01
    failed: bool = False
    failure: str = ""
    notes: list = field(default_factory=list)
    scenario_name: str = ""

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self["t"]


def run_scenario(s: Scenario, *, reallocation: Optional[bool] = None) -> Trace:
    """Closed-loop simulation of one scenario arm."""
    realloc = s.reallocation if reallocation is None else reallocation
    p, aero, mission = s.vehicle, s.aero, s.mission
    alloc_cfg = s.allocator
    surf_cfg = restrict_config(alloc_cfg, rows=[1, 2, 3], columns=[AILERON, ELEVATOR, RUDDER])
    ctrl = BaselineController(s.gains, p.mass, p.g)
    body = RigidBody(p)
    wrench = WrenchModel(p, aero)
    lb, ub = p.lower_bounds, p.upper_bounds

    n_sub = int(round(s.dt_control / s.dt_physics))
    n_ticks = int(math.floor(s.duration / s.dt_control + 1e-9)) + 1
    events = list(s.faults)
    change_times = sorted({e.time for e in events})

    thr, _ = trim_hover(p)
    x = [0.0, 0.0, -mission.hover_altitude] + [0.0] * 9
    psi0 = x[8]
    u_prev = np.concatenate([np.full(N_ROTORS, thr), np.zeros(3)])
    mode = Mode.MULTICOPTER
    t_switch = None
    rotors_at_switch = None
    theta_ref = 0.0
    rows = []
    failed, failure, notes = False, "", []
    ones = np.ones(N_ACTUATORS)

    def true_w(t):
        return effectiveness_at(events, t).w if events and t >= change_times[0] else ones

    for k in range(n_ticks):
        t = k * s.dt_control
        ub_, vb, wb = x[3], x[4], x[5]
        phi, theta, psi = x[6], x[7], x[8]
        V = math.sqrt(ub_ * ub_ + vb * vb + wb * wb)
        new_mode = mission_mode(t, V, mode, mission)
        if new_mode == Mode.FIXED_WING and mode != Mode.FIXED_WING:
            t_switch = t
            rotors_at_switch = u_prev[:N_ROTORS].copy()
            theta_ref = theta
        mode = new_mode

        w_true = true_w(t)
        w_hat = w_true if realloc else ones
        B = build_allocation_matrix(p, aero.surfaces, V).B

        H = -x[2]
        sph, cph = math.sin(phi), math.cos(phi)
        sth, cth = math.sin(theta), math.cos(theta)
        h_dot = sth * ub_ - sph * cth * vb - cph * cth * wb
        h_cmd = mission.hover_altitude

        if mode != Mode.FIXED_WING:
            theta_ref = 0.0
            f_az = ctrl.altitude_step(h_cmd, H, h_dot, s.dt_control)
        else:
            fade = 1.0 if mission.rotor_fade == 0 else max(
                0.0, 1.0 - (t - t_switch) / mission.rotor_fade)
            rotor_cmd = rotors_at_switch * fade
            rotor_force = float(B[0, :N_ROTORS] @ (w_hat[:N_ROTORS] * rotor_cmd))
            lift_needed = p.weight + rotor_force  # rotor_force is negative (upward)
            qS = 0.5 * aero.surfaces.rho * V * V * p.wing_area
            alpha_ff = aero.alpha_for_lift(lift_needed / qS) if qS > 0 else 0.0
            target = (alpha_ff + mission.fw_altitude_gain * (h_cmd - H)
                      - mission.fw_climb_rate_gain * h_dot)
            target = min(max(target, mission.fw_pitch_min), mission.fw_pitch_max)
            step = mission.fw_pitch_rate * s.dt_control
            theta_ref += min(max(target - theta_ref, -step), step)
            f_az = rotor_force

        yaw_cmd = psi + wrap_angle(psi0 - psi)
        moments = ctrl.attitude_step((0.0, theta_ref, yaw_cmd), (phi, theta, psi),
                                     (x[9], x[10], x[11]), s.dt_control)
        v = np.array([f_az, *moments])

        if mode != Mode.FIXED_WING:
            res = wls_allocate(B, w_hat, v, p, alloc_cfg, u_prev=u_prev, lb=lb, ub=ub)
            u = res.u
            iters = res.iterations
        else:
            rotor_part = B[1:, :N_ROTORS] @ (w_hat[:N_ROTORS] * rotor_cmd)
            sub_B = B[1:, N_ROTORS:]
            res = wls_allocate(sub_B, w_hat[N_ROTORS:], v[1:] - rotor_part, p, surf_cfg,
                               u_prev=u_prev[N_ROTORS:], lb=lb[N_ROTORS:], ub=ub[N_ROTORS:])
            u = np.concatenate([rotor_cmd, res.u])
            iters = res.iterations
        u = np.clip(u, lb, ub)
        achieved = B @ (w_true * u)
        thrust_h = mission.horizontal_thrust(t, t_switch)

        rows.append([t, *x, H, V, float(mode), h_cmd, theta_ref, thrust_h, *v, *u,
                     *achieved, *w_true, float(iters)])
        u_prev = u
        if k == n_ticks - 1:
            break

        u_list = u.tolist()
        for j in range(n_sub):
            ts = t + j * s.dt_physics
            wl = true_w(ts).tolist()
            th = mission.horizontal_thrust(ts, t_switch)
            x = step_rk4(x, lambda y: wrench(y, u_list, wl, th), s.dt_physics, body=body)
        if abs(math.cos(x[7])) < 1e-3:
            notes.append(f"t={t:.3f}: pitch near +-90 deg, Euler kinematics singular")
        if not all(math.isfinite(c) for c in x) or max(abs(c) for c in x) > DIVERGENCE_LIMIT:
            failed, failure = True, f"state diverged at t={t + s.dt_control:.3f} s"
            break
        x[6], x[7], x[8] = wrap_angle(x[6]), wrap_angle(x[7]), wrap_angle(x[8])

    return Trace(data=np.array(rows), dt_control=s.dt_control, failed=failed, failure=failure,
                 notes=notes, scenario_name=s.name)


# ---------------------------------------------------------------- metrics

@dataclass
class Metrics:
    max_altitude_dev: float
    max_roll_deg: float
    max_pitch_dev_deg: float
    max_yaw_dev_deg: float
    transition_duration: Optional[float]
    vc_total_variation: np.ndarray
    allocation_residual_rms: float
    saturation_fraction: np.ndarray
    surface_rms: np.ndarray
    partial: bool = False
    window: tuple = (0.0, 0.0)

    def as_row(self) -> dict:
        row = {
            "max_altitude_dev_m": self.max_altitude_dev,
            "max_roll_deg": self.max_roll_deg,
            "max_pitch_dev_deg": self.max_pitch_dev_deg,
            "max_yaw_dev_deg": self.max_yaw_dev_deg,
            "transition_duration_s": self.transition_duration,
            "alloc_residual_rms": self.allocation_residual_rms,
            "aileron_rms_rad": float(self.surface_rms[0]),
            "elevator_rms_rad": float(self.surface_rms[1]),
            "rudder_rms_rad": float(self.surface_rms[2]),
            "partial": self.partial,
        }
        for name, tv in zip(VC_COLUMNS, self.vc_total_variation):
            row[f"tv_{name}"] = float(tv)
        return row


def transition_duration(trace: Trace, s: Scenario) -> Optional[float]:
    mode = trace["mode"]
    idx = np.flatnonzero(mode == Mode.FIXED_WING)
    if len(idx) == 0:
        return None
    return float(trace.t[idx[0]] - s.mission.transition_start)


def compute_metrics(trace: Trace, s: Scenario, window_start: Optional[float] = None) -> Metrics:
    """Deviation and effort metrics over ``[window_start, end]``.

    The window defaults to the first fault time, or the whole run when the
    scenario has no faults. The transition duration is always whole-run.
    """
    if len(trace) == 0:
        raise ValueError("trace is empty")
    if window_start is None:
        window_start = s.first_fault_time or 0.0
    sel = trace.t >= window_start - 1e-12
    if not sel.any():
        sel = np.ones(len(trace), dtype=bool)
    d = trace.data[sel]

    def col(name):
        return d[:, _COL[name]]

    psi0 = trace["psi"][0]
    yaw_dev = np.array([wrap_angle(a - psi0) for a in col("psi")])
    vc = d[:, [_COL[c] for c in VC_COLUMNS]]
    tv = np.sum(np.abs(np.diff(vc, axis=0)), axis=0) if len(vc) > 1 else np.zeros(4)
    ach = d[:, [_COL[c] for c in ACHIEVED_COLUMNS]]
    powered = col("mode") != Mode.FIXED_WING
    resid = (ach - vc)[powered]
    resid_rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1)))) if len(resid) else 0.0
    U = d[:, [_COL[f"u_{n}"] for n in ACTUATOR_NAMES]]
    lb, ub = s.vehicle.lower_bounds, s.vehicle.upper_bounds
    span = ub - lb
    sat = np.mean((U <= lb + 1e-9 * span) | (U >= ub - 1e-9 * span), axis=0)
    surf_rms = np.sqrt(np.mean(U[:, N_ROTORS:] ** 2, axis=0))
    return Metrics(
        max_altitude_dev=float(np.max(np.abs(col("H") - col("h_cmd")))),
        max_roll_deg=float(np.degrees(np.max(np.abs(col("phi"))))),
        max_pitch_dev_deg=float(np.degrees(np.max(np.abs(col("theta") - col("theta_ref"))))),
        max_yaw_dev_deg=float(np.degrees(np.max(np.abs(yaw_dev)))),
        transition_duration=transition_duration(trace, s),
        vc_total_variation=tv,
        allocation_residual_rms=resid_rms,
        saturation_fraction=sat,
        surface_rms=surf_rms,
        partial=trace.failed,
        window=(float(d[0, 0]), float(d[-1, 0])),
    )


def channel_authority(params: VehicleParams) -> np.ndarray:
    """Largest magnitude each virtual-control channel can reach on rotors alone at rest."""
    B = build_allocation_matrix(params, SurfaceDerivatives(), 0.0).B[:, :N_ROTORS]
    lb, ub = params.lower_bounds[:N_ROTORS], params.upper_bounds[:N_ROTORS]
    hi = np.sum(np.maximum(B * ub, B * lb), axis=1)
    lo = np.sum(np.minimum(B * ub, B * lb), axis=1)
    return np.maximum(np.abs(hi), np.abs(lo))


def steady_mask(trace: Trace, s: Scenario, settle: float = 1.0) -> np.ndarray:
    """Ticks at least ``settle`` seconds away from faults, transition start and mode switches."""
    t = trace.t
    events = [e.time for e in s.faults] + [s.mission.transition_start]
    mode = trace["mode"]
    events += list(t[1:][np.diff(mode) != 0])
    mask = np.ones(len(t), dtype=bool)
    for te in events:
        mask &= ~((t >= te - 1e-12) & (t < te + settle))
    return mask


def max_reversal_fraction(trace: Trace, s: Scenario, settle: float = 1.0) -> np.ndarray:
    """Largest sample-to-sample sign reversal of each virtual-control channel.

    A reversal at tick k is a step up followed by a step down (or vice versa);
    its size is the smaller of the two steps. Only reversals wholly inside
    steady segments count. Returned as a fraction of channel authority.
    """
    vc = np.column_stack([trace[c] for c in VC_COLUMNS])
    if len(vc) < 3:
        return np.zeros(4)
    d = np.diff(vc, axis=0)
    rev = np.where(d[:-1] * d[1:] < 0, np.minimum(np.abs(d[:-1]), np.abs(d[1:])), 0.0)
    m = steady_mask(trace, s, settle)
    ok = m[:-2] & m[1:-1] & m[2:]
    rev = rev[ok]
    if len(rev) == 0:
        return np.zeros(4)
    return rev.max(axis=0) / channel_authority(s.vehicle)


# ---------------------------------------------------------------- comparison

_COMPARE_METRICS = ("max_altitude_dev_m", "max_roll_deg", "max_pitch_dev_deg", "max_yaw_dev_deg",
                    "transition_duration_s", "alloc_residual_rms", "aileron_rms_rad",
                    "elevator_rms_rad", "rudder_rms_rad")


@dataclass
class ComparisonReport:
    labels: List[str]
    rows: List[dict]
    ratios: Dict[str, Dict[str, float]]

    def table(self) -> List[List[str]]:
        header = ["run"] + list(_COMPARE_METRICS) + ["partial"]
        out = [header]
        for label, row in zip(self.labels, self.rows):
            cells = [label]
            for m in _COMPARE_METRICS:
                val = row.get(m)
                cells.append("n/a" if val is None else f"{val:.6g}")
            cells.append(str(row.get("partial", False)))
            out.append(cells)
        return out

    def to_text(self) -> str:
        tab = self.table()
        widths = [max(len(r[i]) for r in tab) for i in range(len(tab[0]))]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in tab]
        for pair, ratios in self.ratios.items():
            parts = ", ".join(f"{k}={v:.3g}" for k, v in ratios.items())
            lines.append(f"ratio {pair}: {parts}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerows(self.table())


def compare_runs(runs: Sequence[tuple], window_start: Optional[float] = None) -> ComparisonReport:
    """Side-by-side metrics for ``(label, trace, scenario)`` triples.

    Deviation ratios are reported for every ordered pair ``a/b`` on the
    attitude channels. All traces must share the control tick.
    """
    if not runs:
        raise ValueError("nothing to compare")
    ticks = {round(tr.dt_control, 12) for _, tr, _ in runs}
    if len(ticks) > 1:
        raise ValueError(f"traces have mismatched control ticks: {sorted(ticks)}")
    if window_start is None:
        starts = [sc.first_fault_time for _, _, sc in runs if sc.first_fault_time is not None]
        window_start = min(starts) if starts else 0.0
    labels, rows = [], []
    for label, tr, sc in runs:
        labels.append(label)
        rows.append(compute_metrics(tr, sc, window_start).as_row())
    ratios = {}
    keys = ("max_roll_deg", "max_pitch_dev_deg", "max_yaw_dev_deg", "max_altitude_dev_m")
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            if i == j:
                continue
            ratios[f"{a}/{b}"] = {
                k: (rows[i][k] / rows[j][k]) if rows[j][k] > 0 else math.inf for k in keys
            }
    return ComparisonReport(labels, rows, ratios)


# ---------------------------------------------------------------- CSV

def export_csv(trace: Trace, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{c} [{UNITS[c]}]" for c in trace.columns])
            for row in trace.data:
                writer.writerow([format(float(v), ".17g") for v in row])
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc


def read_csv(path) -> Trace:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = tuple(h.rsplit(" [", 1)[0] for h in header)
        data = [[float(v) for v in row] for row in reader]
    arr = np.array(data) if data else np.zeros((0, len(cols)))
    dt = float(arr[1, 0] - arr[0, 0]) if len(arr) > 1 else 0.0
    return Trace(data=arr, columns=cols, dt_control=round(dt, 12), scenario_name=path.stem)
