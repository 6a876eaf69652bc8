import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oracles import enumerate_bounds, kkt_violation, random_instances, stacked
from vtolftc.allocator import (
    ITERATION_LIMIT, OPTIMAL, AllocatorConfig, WLSAllocator, active_set_bls, restrict_config,
    stack_problem, wls_allocate,
)
from vtolftc.effectors import SurfaceDerivatives, build_allocation_matrix


@pytest.fixture
def B_hover(params):
    return build_allocation_matrix(params, SurfaceDerivatives(), 0.0).B


def test_stack_problem_scaling(B_hover):
    cfg = AllocatorConfig(gamma=1e6)
    A, b = stack_problem(B_hover, np.ones(11), np.zeros(4), np.zeros(11), cfg)
    assert A.shape == (15, 11) and b.shape == (15,)
    assert np.allclose(A[:4], 1000.0 * B_hover)
    assert np.array_equal(A[4:], np.eye(11))
    assert not b.any()


def test_stack_problem_objective_identity(B_hover):
    rng = np.random.default_rng(0)
    cfg = AllocatorConfig(W1=rng.uniform(0.5, 2, 11), W2=rng.uniform(0.5, 2, 4), gamma=1e4)
    w, v, ud, u = rng.uniform(size=11), rng.normal(size=4), rng.normal(size=11), rng.normal(size=11)
    A, b = stack_problem(B_hover, w, v, ud, cfg)
    direct = np.sum((cfg.W1 * (u - ud)) ** 2) + cfg.gamma * np.sum((cfg.W2 * (B_hover @ (w * u) - v)) ** 2)
    assert np.sum((A @ u - b) ** 2) == pytest.approx(direct, rel=1e-12)


def test_hover_allocation(params, B_hover):
    r = wls_allocate(B_hover, np.ones(11), [-params.weight, 0, 0, 0], params)
    assert r.status == OPTIMAL
    assert np.allclose(r.u[:8], params.weight / (8 * params.k_T), atol=1e-6)
    assert np.allclose(r.u[8:], 0.0, atol=1e-12)


def test_zero_demand_gives_zero(params, B_hover):
    r = wls_allocate(B_hover, np.ones(11), np.zeros(4), params)
    assert np.allclose(r.u, 0.0) and np.allclose(r.residual, 0.0)
    assert r.iterations >= 0


def test_failed_actuator_goes_to_desired(params, B_hover):
    w = np.ones(11)
    w[[1, 3]] = 0.0
    ud = np.full(11, 0.0)
    ud[1] = 30.0
    cfg = AllocatorConfig(u_desired=ud)
    r = wls_allocate(B_hover, w, [-params.weight, 0, 0, 0], params, cfg)
    assert r.u[1] == pytest.approx(30.0, abs=1e-9)
    assert r.u[3] == pytest.approx(0.0, abs=1e-9)


def test_unattainable_demand_saturates_without_error(params, B_hover):
    r = wls_allocate(B_hover, np.ones(11), [-500.0, 0, 0, 0], params)
    assert np.allclose(r.u[:8], 100.0)
    assert r.residual[0] > 0


def test_warm_start_and_previous_policy(params, B_hover):
    v = [-params.weight, 1.0, 0.5, 0.01]
    cold = wls_allocate(B_hover, np.ones(11), v, params)
    warm = wls_allocate(B_hover, np.ones(11), v, params, u_prev=cold.u)
    assert np.allclose(warm.u, cold.u, atol=1e-8)
    assert warm.iterations <= cold.iterations
    prev = wls_allocate(B_hover, np.ones(11), v, params, AllocatorConfig(u_desired="previous"),
                        u_prev=cold.u)
    assert np.allclose(prev.u, cold.u, atol=1e-6)


def test_iteration_limit_reported():
    inst = random_instances(1, 11, seed=5)
    A, b = stacked(inst)
    u, _, iters, status = active_set_bls(A[0], b[0], inst["lb"][0], inst["ub"][0],
                                         inst["lb"][0], max_iterations=1)
    assert status in (ITERATION_LIMIT, OPTIMAL)
    assert iters <= 1
    assert np.all(u >= inst["lb"][0]) and np.all(u <= inst["ub"][0])


def test_active_set_input_errors():
    A, b = np.eye(2), np.ones(2)
    with pytest.raises(ValueError):
        active_set_bls(A, b, [0, 0], [1, 1], [2, 0])
    with pytest.raises(ValueError):
        active_set_bls(A, b, [1, 0], [1, 1], [1, 0])


def test_config_validation():
    with pytest.raises(ValueError):
        AllocatorConfig(gamma=10.0)
    with pytest.raises(ValueError):
        AllocatorConfig(W1=np.r_[np.ones(10), 0.0])
    with pytest.raises(ValueError):
        AllocatorConfig(u_desired="middle")
    sub = restrict_config(AllocatorConfig(W1=np.arange(1, 12.0)), rows=[1, 2, 3], columns=[8, 9, 10])
    assert sub.W1.tolist() == [9.0, 10.0, 11.0] and sub.W2.shape == (3,)


def test_against_enumeration_small_batch(params):
    inst = random_instances(60, 6, seed=11, gamma_range=(1e3, 1e10))
    A, b = stacked(inst)
    _, best = enumerate_bounds(A, b, inst["lb"], inst["ub"])
    for k in range(60):
        u, *_ = active_set_bls(A[k], b[k], inst["lb"][k], inst["ub"][k],
                               np.clip(np.zeros(6), inst["lb"][k], inst["ub"][k]))
        f = np.sum((A[k] @ u - b[k]) ** 2)
        assert f <= best[k] * (1 + 1e-6) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 11))
def test_property_feasible_and_kkt(seed, n_u):
    inst = random_instances(1, n_u, seed=seed)
    A, b = stacked(inst)
    lb, ub = inst["lb"], inst["ub"]
    u, active, _, status = active_set_bls(A[0], b[0], lb[0], ub[0], np.clip(0.0, lb[0], ub[0]))
    assert status == OPTIMAL
    assert np.all(u >= lb[0]) and np.all(u <= ub[0])
    free_grad, wrong = kkt_violation(A, b, u[None], lb, ub)
    assert free_grad[0] < 1e-6 and wrong[0] < 1e-6
    for i, side in active:
        assert u[i] == (lb[0][i] if side == -1 else ub[0][i])


def test_estimator_api(params, B_hover):
    alloc = WLSAllocator(gamma=1e8)
    assert alloc.get_params()["gamma"] == 1e8
    assert clone(alloc).get_params() == alloc.get_params()
    with pytest.raises(NotFittedError):
        alloc.transform([[0, 0, 0, 0]])
    alloc.fit(B_hover, np.ones(11), params)
    V = [[-params.weight, 0, 0, 0], [-params.weight, 0.5, -0.5, 0.0]]
    U = alloc.transform(V)
    assert U.shape == (2, 11)
    assert np.allclose(alloc.predict(V), V, atol=1e-3)
    with pytest.raises(ValueError):
        alloc.transform([[0, 0, 0]])
    with pytest.raises(ValueError):
        WLSAllocator().fit(np.zeros((3, 11)))
