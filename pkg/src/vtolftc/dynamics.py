"""Rigid-body 6-DOF dynamics, hover trim and the decoupled design model.

The simulator state is a flat 12-vector ``[x, y, z, u, v, w, phi, theta,
psi, p, q, r]`` (NED position, body velocity, Euler angles, body rates).
The hot path works on plain floats; numpy is only used at the edges.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Tuple

import numpy as np

from .effectors import SurfaceDerivatives, dynamic_pressure, rotor_columns, surface_gain
from .vehicle import N_ROTORS, RigidBodyState, VehicleParams


class InfeasibleVehicleError(ValueError):
    """The rotors cannot hold the vehicle in hover."""


class GimbalProximityWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class AeroModel:
    """Wing lift/drag with a linear lift curve that goes flat past stall."""

    CL0: float = 0.3
    CL_alpha: float = 4.5
    alpha_stall: float = math.radians(12.0)
    CD0: float = 0.035
    k: float = 0.05
    surfaces: SurfaceDerivatives = field(default_factory=SurfaceDerivatives)

    def __post_init__(self):
        if self.CL0 < 0:
            raise ValueError("CL0 must be non-negative")
        if not self.CD0 > 0:
            raise ValueError("CD0 must be positive")
        if self.k < 0 or self.alpha_stall <= 0:
            raise ValueError("invalid drag-polar or stall parameters")

    def lift_coefficient(self, alpha: float) -> float:
        a = min(max(alpha, -self.alpha_stall), self.alpha_stall)
        return self.CL0 + self.CL_alpha * a

    def drag_coefficient(self, alpha: float) -> float:
        cl = self.lift_coefficient(alpha)
        return self.CD0 + self.k * cl * cl

    def alpha_for_lift(self, CL: float) -> float:
        """Inverse of the linear part of the lift curve, clipped at stall."""
        a = (CL - self.CL0) / self.CL_alpha
        return min(max(a, -self.alpha_stall), self.alpha_stall)


def trim_hover(params: VehicleParams):
    """Equal-throttle hover: ``8 k_T Thr = m g``."""
    thr = params.weight / (N_ROTORS * params.k_T)
    if thr > params.throttle_limits[1]:
        raise InfeasibleVehicleError(
            f"hover needs {thr:.2f} % throttle, above the {params.throttle_limits[1]:.0f} % limit"
        )
    return thr, RigidBodyState()


class WrenchModel:
    """Body-frame force and moment of the vehicle for given commands.

    Rotor thrust/torque and surface moments are scaled by the true
    effectiveness ``w``; the scripted horizontal thrust acts along body x.
    """

    def __init__(self, params: VehicleParams, aero: AeroModel):
        self.params = params
        self.aero = aero
        self._rotor = rotor_columns(params).tolist()
        self._rho = aero.surfaces.rho

    def __call__(self, x, u, w, horiz_thrust: float):
        p = self.params
        aero = self.aero
        m, g = p.mass, p.g
        _, _, _, ub, vb, wb, phi, theta, _psi, _, _, _ = x
        sph, cph = math.sin(phi), math.cos(phi)
        sth, cth = math.sin(theta), math.cos(theta)

        fx = -m * g * sth + horiz_thrust
        fy = m * g * sph * cth
        fz = m * g * cph * cth
        mx = my = mz = 0.0
        r0, r1, r2, r3 = self._rotor
        for i in range(N_ROTORS):
            c = w[i] * u[i]
            if c:
                fz += r0[i] * c
                mx += r1[i] * c
                my += r2[i] * c
                mz += r3[i] * c

        V2 = ub * ub + vb * vb + wb * wb
        if V2 > 1e-12:
            V = math.sqrt(V2)
            qS = 0.5 * self._rho * V2 * p.wing_area
            alpha = math.atan2(wb, ub)
            cl = aero.lift_coefficient(alpha)
            cd = aero.CD0 + aero.k * cl * cl
            lift, drag = qS * cl, qS * cd
            fx += -drag * ub / V + lift * math.sin(alpha)
            fy += -drag * vb / V
            fz += -drag * wb / V - lift * math.cos(alpha)
            surf = aero.surfaces
            mx += qS * p.wing_span * surf.value("C_l_da", V) * w[8] * u[8]
            my += qS * p.mean_chord * surf.value("C_m_de", V) * w[9] * u[9]
            mz += qS * p.wing_span * surf.value("C_n_dr", V) * w[10] * u[10]
        return (fx, fy, fz), (mx, my, mz)


def total_wrench(state, u, W, params: VehicleParams, aero: AeroModel, horiz_thrust: float = 0.0):
    """Net body-frame ``(force, moment)`` including gravity."""
    x = state.as_array() if isinstance(state, RigidBodyState) else np.asarray(state, dtype=float)
    w = getattr(W, "w", W)
    F, M = WrenchModel(params, aero)(x.tolist(), list(map(float, u)), list(map(float, w)), horiz_thrust)
    return np.array(F), np.array(M)


class RigidBody:
    """Equations of motion for a rigid body with a full inertia tensor."""

    def __init__(self, params: VehicleParams):
        self.mass = params.mass
        J = np.asarray(params.inertia, dtype=float)
        self.J = J.tolist()
        self.Jinv = np.linalg.inv(J).tolist()

    def derivative(self, x, force, moment):
        _, _, _, u, v, w, phi, theta, psi, p, q, r = x
        fx, fy, fz = force
        mx, my, mz = moment
        m = self.mass
        du = fx / m + r * v - q * w
        dv = fy / m + p * w - r * u
        dw = fz / m + q * u - p * v

        sph, cph = math.sin(phi), math.cos(phi)
        sth, cth = math.sin(theta), math.cos(theta)
        sps, cps = math.sin(psi), math.cos(psi)
        # body -> NED rotation applied to velocity
        dx = cth * cps * u + (sph * sth * cps - cph * sps) * v + (cph * sth * cps + sph * sps) * w
        dy = cth * sps * u + (sph * sth * sps + cph * cps) * v + (cph * sth * sps - sph * cps) * w
        dz = -sth * u + sph * cth * v + cph * cth * w

        tth = sth / cth
        dphi = p + (q * sph + r * cph) * tth
        dtheta = q * cph - r * sph
        dpsi = (q * sph + r * cph) / cth

        J, Ji = self.J, self.Jinv
        hx = J[0][0] * p + J[0][1] * q + J[0][2] * r
        hy = J[1][0] * p + J[1][1] * q + J[1][2] * r
        hz = J[2][0] * p + J[2][1] * q + J[2][2] * r
        tx = mx - (q * hz - r * hy)
        ty = my - (r * hx - p * hz)
        tz = mz - (p * hy - q * hx)
        dp = Ji[0][0] * tx + Ji[0][1] * ty + Ji[0][2] * tz
        dq = Ji[1][0] * tx + Ji[1][1] * ty + Ji[1][2] * tz
        dr = Ji[2][0] * tx + Ji[2][1] * ty + Ji[2][2] * tz
        return [dx, dy, dz, du, dv, dw, dphi, dtheta, dpsi, dp, dq, dr]


def step_rk4(state, wrench_fn: Callable, dt: float, params: VehicleParams = None, body: RigidBody = None):
    """One classical Runge-Kutta step.

    ``wrench_fn(x)`` returns body-frame ``(force, moment)`` for the 12-vector
    ``x``; commands are held constant across the step. Accepts and returns a
    :class:`RigidBodyState` or a plain sequence, matching the input type.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if body is None:
        body = RigidBody(params or VehicleParams())
    as_state = isinstance(state, RigidBodyState)
    x = state.as_array().tolist() if as_state else [float(v) for v in state]
    if abs(math.cos(x[7])) < 1e-3:
        warnings.warn("pitch angle near +-90 deg: Euler kinematics singular", GimbalProximityWarning)

    def f(y):
        F, M = wrench_fn(y)
        return body.derivative(y, F, M)

    h2 = 0.5 * dt
    k1 = f(x)
    k2 = f([a + h2 * b for a, b in zip(x, k1)])
    k3 = f([a + h2 * b for a, b in zip(x, k2)])
    k4 = f([a + dt * b for a, b in zip(x, k3)])
    h6 = dt / 6.0
    out = [a + h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4)]
    return RigidBodyState.from_array(out) if as_state else out


@dataclass(frozen=True)
class LinearModel:
    """Decoupled design model: one scaled double integrator per channel.

    ``heave`` is the gain from upward force increment to altitude
    acceleration, ``(1 - gamma_T) / m``; the rotational gains are
    ``(1 - gamma) / J`` about the body axes.
    """

    heave: float
    roll: float
    pitch: float
    yaw: float
    gravity: float = 9.81

    def gain(self, channel: str) -> float:
        if channel == "altitude":
            return self.heave
        return getattr(self, channel)

    def gains(self) -> np.ndarray:
        return np.array([self.heave, self.roll, self.pitch, self.yaw])


def linearize_heave_attitude(params: VehicleParams, gamma: Sequence[float]) -> LinearModel:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (4,) or np.any(gamma < 0) or np.any(gamma > 0.5):
        raise ValueError("gamma must be 4 loss factors in [0, 0.5]")
    J = params.inertia
    gT, gL, gM, gN = gamma
    return LinearModel(
        heave=(1 - gT) / params.mass,
        roll=(1 - gL) / J[0, 0],
        pitch=(1 - gM) / J[1, 1],
        yaw=(1 - gN) / J[2, 2],
        gravity=params.g,
    )
