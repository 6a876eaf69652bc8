"""Actuator force/moment models and the airspeed-dependent allocation matrix."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .vehicle import N_ACTUATORS, N_ROTORS, ROTOR_SPIN, EffectivenessState, VehicleParams

RHO_SEA_LEVEL = 1.225

Derivative = Union[float, Callable[[float], float]]


class _Table:
    """Linear interpolation in airspeed, held flat outside the table."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("derivative table must be a list of (airspeed, value) pairs")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("derivative table airspeeds must be strictly increasing")
        self.points = pts.copy()
        self._V, self._C = self.points[:, 0], self.points[:, 1]

    def __call__(self, v: float) -> float:
        return float(np.interp(v, self._V, self._C))

    def __eq__(self, other):
        return isinstance(other, _Table) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


def _table(points) -> Callable[[float], float]:
    return _Table(points)


@dataclass(frozen=True)
class SurfaceDerivatives:
    """Per-radian control-moment derivatives of the three surfaces.

    Each derivative may be a constant or a callable of airspeed; pass a list
    of ``(V, value)`` pairs to get linear interpolation. Sign convention:
    positive aileron gives positive roll moment, positive elevator gives
    nose-down moment (``C_m_de < 0``) and positive rudder gives negative yaw
    moment (``C_n_dr < 0``).
    """

    C_l_da: Derivative = 0.12
    C_m_de: Derivative = -0.6
    C_n_dr: Derivative = -0.08
    rho: float = RHO_SEA_LEVEL

    def __post_init__(self):
        for name in ("C_l_da", "C_m_de", "C_n_dr"):
            value = getattr(self, name)
            if isinstance(value, (list, tuple, np.ndarray)):
                object.__setattr__(self, name, _table(value))
        if not self.rho > 0:
            raise ValueError("air density must be positive")
        if not callable(self.C_m_de) and not self.C_m_de < 0:
            raise ValueError("C_m_de must be negative (conventional elevator)")

    def value(self, name: str, V: float) -> float:
        d = getattr(self, name)
        return float(d(V)) if callable(d) else float(d)


def dynamic_pressure(V: float, rho: float = RHO_SEA_LEVEL) -> float:
    return 0.5 * rho * V * V


def rotor_force_moment(throttle, k_T: float, k_M: float):
    """Thrust (N) and reaction torque magnitude (N m) of a vertical rotor."""
    return k_T * throttle, k_M * throttle


_AXES = {"roll": "C_l_da", "pitch": "C_m_de", "yaw": "C_n_dr"}


def surface_gain(V: float, derivs: SurfaceDerivatives, params: VehicleParams, axis: str) -> float:
    """Moment per radian of deflection on ``axis`` at airspeed ``V``."""
    if axis not in _AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {sorted(_AXES)}")
    if V < 0:
        raise ValueError("airspeed must be non-negative")
    ref = params.mean_chord if axis == "pitch" else params.wing_span
    return dynamic_pressure(V, derivs.rho) * params.wing_area * ref * derivs.value(_AXES[axis], V)


def surface_moment(deflection: float, V: float, derivs: SurfaceDerivatives,
                   params: VehicleParams, axis: str) -> float:
    return surface_gain(V, derivs, params, axis) * deflection


def rotor_columns(params: VehicleParams) -> np.ndarray:
    """The 4x8 airspeed-independent rotor block of the allocation matrix."""
    pos = params.rotor_positions()
    kT, kM = params.k_T, params.k_M
    cols = np.empty((4, N_ROTORS))
    cols[0] = -kT
    cols[1] = -pos[:, 1] * kT  # M_x = -y * thrust
    cols[2] = pos[:, 0] * kT   # M_y = x * thrust
    cols[3] = ROTOR_SPIN * kM
    return cols


@dataclass(frozen=True)
class AllocationMatrix:
    B: np.ndarray
    airspeed_used: float

    def __array__(self, dtype=None, copy=None):
        return self.B if dtype is None else self.B.astype(dtype)


def build_allocation_matrix(params: VehicleParams, derivs: SurfaceDerivatives,
                            V: float) -> AllocationMatrix:
    """Rows [F_az, M_ax, M_ay, M_az]; columns follow the actuator ordering."""
    if V < 0:
        raise ValueError("airspeed must be non-negative")
    B = np.zeros((4, N_ACTUATORS))
    B[:, :N_ROTORS] = rotor_columns(params)
    B[1, 8] = surface_gain(V, derivs, params, "roll")
    B[2, 9] = surface_gain(V, derivs, params, "pitch")
    B[3, 10] = surface_gain(V, derivs, params, "yaw")
    B.flags.writeable = False
    return AllocationMatrix(B=B, airspeed_used=float(V))


def _w_vector(W) -> np.ndarray:
    if isinstance(W, EffectivenessState):
        return W.w
    W = np.asarray(W, dtype=float)
    return np.diag(W) if W.ndim == 2 else W


def effector_wrench(B, W, u) -> np.ndarray:
    """Achieved virtual control ``B diag(w) u``."""
    B = np.asarray(B, dtype=float)
    return B @ (_w_vector(W) * np.asarray(u, dtype=float))
