"""P-PID cascade baseline law and the mixed-sensitivity weighting functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class WeightingParams:
    """Parameters of the sensitivity weight ``Ws`` and control-sensitivity weight ``Wr``.

    ``M`` bounds the sensitivity peak, ``A`` the steady-state error, ``omega_b``
    sets the closed-loop bandwidth; ``r_max / u_max`` is the high-frequency
    gain of ``Wr`` and ``omega_a`` the actuator bandwidth.
    """

    M: float = 1.096
    A: float = 0.001
    omega_b: float = 0.8
    r_max: float = 1.0
    u_max: float = 1.0
    omega_a: float = 5.0

    def __post_init__(self):
        if not self.M > 1:
            raise ValueError("M must exceed 1")
        if not 0 < self.A < 1:
            raise ValueError("A must lie in (0, 1)")
        if not (self.omega_b > 0 and self.omega_a > 0 and self.u_max > 0 and self.r_max > 0):
            raise ValueError("omega_b, omega_a, r_max and u_max must be positive")

    def scaled(self, factor: float) -> "ScaledWeights":
        return ScaledWeights(self, factor)

    def ws(self, s):
        return (s / self.M + self.omega_b) / (s + self.A * self.omega_b)

    def wr(self, s):
        return (self.r_max / self.u_max * s + self.omega_a * 1e-3) / (s + self.omega_a)


@dataclass(frozen=True)
class ScaledWeights:
    """Both weights multiplied by a common constant."""

    base: WeightingParams
    factor: float

    def ws(self, s):
        return self.factor * self.base.ws(s)

    def wr(self, s):
        return self.factor * self.base.wr(s)


def ws_response(p: WeightingParams, omega):
    if np.any(np.asarray(omega) < 0):
        raise ValueError("frequency must be non-negative")
    return p.ws(1j * np.asarray(omega, dtype=float))


def wr_response(p: WeightingParams, omega):
    if np.any(np.asarray(omega) < 0):
        raise ValueError("frequency must be non-negative")
    return p.wr(1j * np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    N: float = 50.0
    limit: float = math.inf

    def __post_init__(self):
        if self.ki < 0:
            raise ValueError("ki must be non-negative")
        if not self.N > 0:
            raise ValueError("derivative filter coefficient N must be positive")
        if not self.limit > 0:
            raise ValueError("output limit must be positive")


@dataclass(frozen=True)
class CascadeGains:
    """Outer proportional gain plus the inner PID of one channel."""

    outer_kp: float
    inner: PidGains
    rate_limit: float = math.inf

    def as_vector(self) -> np.ndarray:
        return np.array([self.outer_kp, self.inner.kp, self.inner.ki, self.inner.kd])

    @classmethod
    def from_vector(cls, x, N: float = 50.0, limit: float = math.inf,
                    rate_limit: float = math.inf) -> "CascadeGains":
        kpo, kp, ki, kd = (float(v) for v in x)
        return cls(kpo, PidGains(kp, ki, kd, N, limit), rate_limit)


@dataclass
class PidState:
    gains: PidGains
    integral: float = 0.0
    derivative: float = 0.0
    prev_error: Optional[float] = None

    def reset(self) -> None:
        self.integral = 0.0
        self.derivative = 0.0
        self.prev_error = None


def pid_step(state: PidState, error: float, dt: float) -> float:
    """Advance a parallel PID with filtered derivative and clamping anti-windup.

    The derivative ``kd N s / (s + N)`` is discretised by backward Euler, so
    a ramp of slope ``a`` settles exactly to ``kd * a``. The integral (of the
    error) is frozen whenever the output is saturated and the error pushes
    further into saturation; ``ki * integral`` is also kept within the limit.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = state.gains
    prev = error if state.prev_error is None else state.prev_error
    state.derivative = (state.derivative + g.kd * g.N * (error - prev)) / (1.0 + g.N * dt)
    state.prev_error = error

    p_term = g.kp * error
    candidate = state.integral + error * dt
    out = p_term + g.ki * candidate + state.derivative
    if abs(out) > g.limit and out * error > 0:
        candidate = state.integral
    if g.ki > 0 and math.isfinite(g.limit):
        bound = g.limit / g.ki
        candidate = min(max(candidate, -bound), bound)
    state.integral = candidate
    out = p_term + g.ki * state.integral + state.derivative
    return min(max(out, -g.limit), g.limit)


@dataclass
class CascadeLoop:
    gains: CascadeGains
    pid: PidState = field(init=False)

    def __post_init__(self):
        self.pid = PidState(self.gains.inner)

    def step(self, command: float, measured: float, rate: float, dt: float) -> float:
        rl = self.gains.rate_limit
        rate_cmd = min(max(self.gains.outer_kp * (command - measured), -rl), rl)
        return pid_step(self.pid, rate_cmd - rate, dt)

    def reset(self) -> None:
        self.pid.reset()


@dataclass(frozen=True)
class BaselineGains:
    altitude: CascadeGains
    roll: CascadeGains
    pitch: CascadeGains
    yaw: CascadeGains

    def channels(self):
        return {"altitude": self.altitude, "roll": self.roll, "pitch": self.pitch, "yaw": self.yaw}


class BaselineController:
    """Altitude and attitude P-PID cascades producing the virtual control.

    The altitude inner PID acts on the climb rate and outputs an upward force
    increment; the weight feedforward is added so ``F_az = -m g`` at trim.
    """

    def __init__(self, gains: BaselineGains, mass: float, g: float = 9.81):
        self.gains = gains
        self.mass = mass
        self.g = g
        self.altitude = CascadeLoop(gains.altitude)
        self.roll = CascadeLoop(gains.roll)
        self.pitch = CascadeLoop(gains.pitch)
        self.yaw = CascadeLoop(gains.yaw)

    def reset(self) -> None:
        for loop in (self.altitude, self.roll, self.pitch, self.yaw):
            loop.reset()

    def altitude_step(self, h_cmd: float, h: float, h_dot: float, dt: float) -> float:
        return -self.mass * self.g - self.altitude.step(h_cmd, h, h_dot, dt)

    def attitude_step(self, att_cmd, attitude, rates, dt: float):
        return (
            self.roll.step(att_cmd[0], attitude[0], rates[0], dt),
            self.pitch.step(att_cmd[1], attitude[1], rates[1], dt),
            self.yaw.step(att_cmd[2], attitude[2], rates[2], dt),
        )


def altitude_cascade_step(controller: BaselineController, h_cmd: float, h: float,
                          h_dot: float, dt: float) -> float:
    return controller.altitude_step(h_cmd, h, h_dot, dt)


def attitude_cascade_step(controller: BaselineController, att_cmd, attitude, rates, dt: float):
    return controller.attitude_step(att_cmd, attitude, rates, dt)
