import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vtolftc.vehicle import (
    EffectivenessState, FaultEvent, RigidBodyState, VehicleParams, clamp_actuators,
    effectiveness_at, validate_events, wrap_angle,
)


def test_defaults_and_bounds(params):
    assert params.weight == pytest.approx(62.784)
    assert params.lower_bounds.tolist() == [0.0] * 8 + [-0.55, -0.5, -0.69]
    assert params.upper_bounds.tolist() == [100.0] * 8 + [0.55, 0.5, 0.69]


@pytest.mark.parametrize("kwargs", [
    {"mass": 0.0},
    {"inertia": [[1, 0.1, 0], [0, 1, 0], [0, 0, 1]]},
    {"inertia": [[-1, 0, 0], [0, 1, 0], [0, 0, 1]]},
    {"k_T": -0.1},
    {"l_f": 0.0},
    {"surface_limits": (0.5, 0.5)},
    {"throttle_limits": (100, 0)},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        VehicleParams(**kwargs)


def test_rotor_positions_match_boom_layout(params):
    pos = params.rotor_positions()
    assert pos.shape == (8, 2)
    # pairs 1 and 4 on the left boom, 2 and 3 on the right
    assert np.all(pos[[0, 1, 6, 7], 1] < 0) and np.all(pos[[2, 3, 4, 5], 1] > 0)
    assert np.all(pos[:4, 0] > 0) and np.all(pos[4:, 0] < 0)


def test_effectiveness_state_validation():
    with pytest.raises(ValueError):
        EffectivenessState(w=np.full(11, 1.2))
    with pytest.raises(ValueError):
        EffectivenessState(gamma=[0, 0, 0.6, 0])
    state = EffectivenessState()
    assert state.is_healthy
    with pytest.raises(ValueError):
        state.w[0] = 0.5


def test_fault_timeline():
    events = [FaultEvent(22.0, 2, 0.0), FaultEvent(22.0, 10, 0.5)]
    validate_events(events)
    assert effectiveness_at(events, 21.99).is_healthy
    w = effectiveness_at(events, 22.0).w
    assert w[1] == 0.0 and w[9] == 0.5 and w.sum() == pytest.approx(9.5)


def test_fault_timeline_rejections():
    with pytest.raises(ValueError):
        validate_events([FaultEvent(23.0, 2, 0.0), FaultEvent(22.0, 3, 0.0)])
    with pytest.raises(ValueError):
        validate_events([FaultEvent(22.0, 2, 0.0), FaultEvent(30.0, 2, 1.0)])
    validate_events([FaultEvent(22.0, 2, 0.0), FaultEvent(30.0, 2, 1.0, recovery=True)])
    with pytest.raises(ValueError):
        FaultEvent(1.0, 12, 0.0)
    with pytest.raises(ValueError):
        FaultEvent(-1.0, 1, 0.0)


def test_clamp(params):
    u = clamp_actuators(np.r_[np.full(8, 120.0), 1.0, -1.0, 0.1], params)
    assert u.tolist() == [100.0] * 8 + [0.55, -0.5, 0.1]


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_pi_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_state_roundtrip():
    s = RigidBodyState.hover(30.0, heading=0.3)
    assert s.altitude == 30.0
    assert RigidBodyState.from_array(s.as_array()) == s
