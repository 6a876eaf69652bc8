import numpy as np
import pytest

from vtolftc.effectors import (
    SurfaceDerivatives, build_allocation_matrix, dynamic_pressure, effector_wrench,
    rotor_force_moment, surface_gain,
)
from vtolftc.vehicle import EffectivenessState


def test_rotor_block_signs(params):
    B = build_allocation_matrix(params, SurfaceDerivatives(), 0.0).B
    kT, kM, lf = params.k_T, params.k_M, params.l_f
    # rows written out entry by entry from the boom layout
    expected = np.array([
        [-kT] * 8,
        [kT * lf, kT * lf, -kT * lf, -kT * lf, -kT * lf, -kT * lf, kT * lf, kT * lf],
        [kT * params.l_1, kT * params.l_2, kT * params.l_1, kT * params.l_2,
         -kT * params.l_3, -kT * params.l_4, -kT * params.l_3, -kT * params.l_4],
        [-kM, kM, kM, -kM, kM, -kM, -kM, kM],
    ])
    assert np.allclose(B[:, :8], expected, rtol=0, atol=1e-15)
    assert np.all(B[:, 8:] == 0.0)


def test_surface_columns_scale_with_dynamic_pressure(params):
    d = SurfaceDerivatives()
    B = build_allocation_matrix(params, d, 15.0).B
    q = 0.5 * 1.225 * 15.0 ** 2
    assert B[1, 8] == pytest.approx(q * params.wing_area * params.wing_span * 0.12)
    assert B[2, 9] == pytest.approx(q * params.wing_area * params.mean_chord * -0.6)
    assert B[3, 10] == pytest.approx(q * params.wing_area * params.wing_span * -0.08)
    assert B[1:, 8:][~np.eye(3, dtype=bool)].tolist() == [0.0] * 6
    assert dynamic_pressure(15.0) == pytest.approx(q)


def test_tabulated_derivative_interpolates(params):
    d = SurfaceDerivatives(C_l_da=[(0.0, 0.1), (20.0, 0.2)])
    g = surface_gain(10.0, d, params, "roll")
    assert g == pytest.approx(dynamic_pressure(10.0) * params.wing_area * params.wing_span * 0.15)


def test_bad_inputs(params):
    with pytest.raises(ValueError):
        surface_gain(10.0, SurfaceDerivatives(), params, "heave")
    with pytest.raises(ValueError):
        build_allocation_matrix(params, SurfaceDerivatives(), -1.0)
    with pytest.raises(ValueError):
        SurfaceDerivatives(C_l_da=[(5.0, 0.1), (1.0, 0.2)])
    with pytest.raises(ValueError):
        SurfaceDerivatives(C_m_de=0.3)


def test_matrix_is_read_only(params):
    B = build_allocation_matrix(params, SurfaceDerivatives(), 5.0).B
    with pytest.raises(ValueError):
        B[0, 0] = 1.0


def test_effector_wrench_respects_effectiveness(params):
    B = build_allocation_matrix(params, SurfaceDerivatives(), 0.0).B
    u = np.r_[np.full(8, 50.0), 0, 0, 0]
    healthy = effector_wrench(B, EffectivenessState(), u)
    assert healthy[0] == pytest.approx(-8 * params.k_T * 50.0)
    assert np.allclose(healthy[1:], 0.0, atol=1e-12)
    w = np.ones(11)
    w[1] = 0.0
    faulted = effector_wrench(B, w, u)
    assert faulted[0] == pytest.approx(-7 * params.k_T * 50.0)
    assert rotor_force_moment(50.0, params.k_T, params.k_M) == pytest.approx((8.2, 0.0945))
