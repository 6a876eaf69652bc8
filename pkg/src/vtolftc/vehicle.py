"""Vehicle parameters, actuator command/health vectors and fault timelines.

Actuator ordering is fixed throughout the package::

    [Thr_1a, Thr_1b, Thr_2a, Thr_2b, Thr_3a, Thr_3b, Thr_4a, Thr_4b, da, de, dr]

Rotor throttles are in percent, surface deflections in radians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

N_ACTUATORS = 11
N_ROTORS = 8
ACTUATOR_NAMES = (
    "thr_1a", "thr_1b", "thr_2a", "thr_2b",
    "thr_3a", "thr_3b", "thr_4a", "thr_4b",
    "delta_a", "delta_e", "delta_r",
)
AILERON, ELEVATOR, RUDDER = 8, 9, 10


def _as_inertia(value) -> np.ndarray:
    J = np.asarray(value, dtype=float)
    if J.shape != (3, 3):
        raise ValueError(f"inertia must be 3x3, got shape {J.shape}")
    return J


@dataclass(frozen=True)
class VehicleParams:
    """Physical description of the dual-system VTOL.

    Defaults describe a 6.4 kg airframe with a 2.25 m span. The rotor lever
    arms are a plausible layout for that span and can be overridden.
    """

    mass: float = 6.4
    inertia: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.3724, 0.0, 0.0083], [0.0, 0.7237, 0.0], [0.0083, 0.0, 1.0868]]
        )
    )
    wing_span: float = 2.25
    wing_area: float = 0.5625
    mean_chord: float = 0.25
    cruise_speed: float = 15.0
    k_T: float = 0.164
    k_M: float = 1.89e-3
    l_f: float = 0.6
    l_1: float = 0.9
    l_2: float = 0.45
    l_3: float = 0.45
    l_4: float = 0.9
    # half-ranges in rad for aileron, elevator, rudder
    surface_limits: tuple = (0.55, 0.5, 0.69)
    throttle_limits: tuple = (0.0, 100.0)
    g: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "inertia", _as_inertia(self.inertia))
        object.__setattr__(self, "surface_limits", tuple(float(x) for x in self.surface_limits))
        object.__setattr__(self, "throttle_limits", tuple(float(x) for x in self.throttle_limits))
        self.validate()

    def validate(self) -> None:
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        J = self.inertia
        if np.any(np.diag(J) <= 0):
            raise ValueError("diagonal inertia entries must be positive")
        if not np.allclose(J, J.T):
            raise ValueError("inertia must be symmetric")
        if not (self.k_T > 0 and self.k_M > 0):
            raise ValueError("k_T and k_M must be positive")
        for name in ("l_f", "l_1", "l_2", "l_3", "l_4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"lever arm {name} must be positive")
        if len(self.surface_limits) != 3 or any(x <= 0 for x in self.surface_limits):
            raise ValueError("surface_limits must be three positive half-ranges (rad)")
        lo, hi = self.throttle_limits
        if not lo < hi:
            raise ValueError("throttle_limits must satisfy lower < upper")

    @property
    def weight(self) -> float:
        return self.mass * self.g

    @property
    def lower_bounds(self) -> np.ndarray:
        lo = np.full(N_ACTUATORS, self.throttle_limits[0])
        lo[N_ROTORS:] = [-x for x in self.surface_limits]
        return lo

    @property
    def upper_bounds(self) -> np.ndarray:
        hi = np.full(N_ACTUATORS, self.throttle_limits[1])
        hi[N_ROTORS:] = self.surface_limits
        return hi

    def rotor_positions(self) -> np.ndarray:
        """Body-frame (x forward, y right) position of each vertical rotor.

        Rotor pairs 1 and 4 sit on the left boom (y = -l_f), 2 and 3 on the
        right; 1 and 2 are forward of the CG, 3 and 4 behind it. This is the
        placement implied by the signs of the allocation matrix rows.
        """
        lf = self.l_f
        return np.array([
            [self.l_1, -lf], [self.l_2, -lf],
            [self.l_1, lf], [self.l_2, lf],
            [-self.l_3, lf], [-self.l_4, lf],
            [-self.l_3, -lf], [-self.l_4, -lf],
        ])

    def with_overrides(self, **kwargs) -> "VehicleParams":
        return replace(self, **kwargs)


# yaw reaction torque sign per rotor, positive = +M_az per unit throttle
ROTOR_SPIN = np.array([-1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class EffectivenessState:
    """Per-actuator health ``w`` and channel loss factors ``gamma``."""

    w: np.ndarray = field(default_factory=lambda: np.ones(N_ACTUATORS))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).copy()
        gamma = np.asarray(self.gamma, dtype=float).copy()
        if w.shape != (N_ACTUATORS,):
            raise ValueError(f"w must have {N_ACTUATORS} entries")
        if gamma.shape != (4,):
            raise ValueError("gamma must have 4 entries")
        if np.any((w < 0) | (w > 1)):
            raise ValueError("effectiveness entries must lie in [0, 1]")
        if np.any((gamma < 0) | (gamma > 0.5)):
            raise ValueError("loss factors must lie in [0, 0.5]")
        w.flags.writeable = False
        gamma.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "gamma", gamma)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.w)

    @property
    def is_healthy(self) -> bool:
        return bool(np.all(self.w == 1.0))


@dataclass(frozen=True, order=True)
class FaultEvent:
    """Step change of one actuator's effectiveness.

    ``actuator_index`` is 1-based to match the rotor naming (1 = Thr_1a,
    11 = rudder). ``recovery`` marks an event allowed to raise effectiveness.
    """

    time: float
    actuator_index: int
    new_effectiveness: float
    recovery: bool = False

    def __post_init__(self):
        if not 1 <= self.actuator_index <= N_ACTUATORS:
            raise ValueError(f"actuator_index must be in 1..{N_ACTUATORS}")
        if not 0.0 <= self.new_effectiveness <= 1.0:
            raise ValueError("new_effectiveness must be in [0, 1]")
        if not math.isfinite(self.time) or self.time < 0:
            raise ValueError("fault time must be finite and non-negative")


def validate_events(events: Sequence[FaultEvent]) -> None:
    """Reject unsorted timelines and faults that self-heal without a recovery tag."""
    times = [e.time for e in events]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("fault events must be sorted by time")
    current = np.ones(N_ACTUATORS)
    for e in events:
        i = e.actuator_index - 1
        if e.new_effectiveness > current[i] and not e.recovery:
            raise ValueError(
                f"event at t={e.time} raises effectiveness of actuator "
                f"{e.actuator_index} without a recovery flag"
            )
        current[i] = e.new_effectiveness


def effectiveness_at(events: Iterable[FaultEvent], t: float) -> EffectivenessState:
    w = np.ones(N_ACTUATORS)
    for e in events:
        if e.time > t:
            break
        w[e.actuator_index - 1] = e.new_effectiveness
    return EffectivenessState(w=w)


def clamp_actuators(u, params: VehicleParams) -> np.ndarray:
    return np.clip(np.asarray(u, dtype=float), params.lower_bounds, params.upper_bounds)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class RigidBodyState:
    """NED position, body velocity, Euler attitude and body rates."""

    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (0.0, 0.0, 0.0)
    attitude: tuple = (0.0, 0.0, 0.0)
    rates: tuple = (0.0, 0.0, 0.0)

    @property
    def altitude(self) -> float:
        return -self.position[2]

    def as_array(self) -> np.ndarray:
        return np.array([*self.position, *self.velocity, *self.attitude, *self.rates], dtype=float)

    @classmethod
    def from_array(cls, x) -> "RigidBodyState":
        x = [float(v) for v in x]
        att = tuple(wrap_angle(a) for a in x[6:9])
        return cls(tuple(x[0:3]), tuple(x[3:6]), att, tuple(x[9:12]))

    @classmethod
    def hover(cls, altitude: float, heading: float = 0.0) -> "RigidBodyState":
        return cls(position=(0.0, 0.0, -float(altitude)), attitude=(0.0, 0.0, float(heading)))
