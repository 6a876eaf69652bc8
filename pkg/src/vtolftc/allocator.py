"""Weighted-least-squares control allocation with an active-set box solver.

The allocation problem solved every control tick is::

    min_u  ||W1 (u - u_d)||^2 + gamma ||W2 (B W u - v)||^2
    s.t.   u_min <= u <= u_max

It is rewritten as a bounded least-squares problem ``min ||A u - b||^2`` and
solved with a primal active-set method working on the bound constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_2d, check_diagonal_weight, check_matrix, check_vector
from .effectors import _w_vector
from .vehicle import N_ACTUATORS, VehicleParams

OPTIMAL = "optimal"
ITERATION_LIMIT = "iteration-limit"

# relative pivot threshold for the column-pivoted QR used on the free subproblem
PIVOT_THRESHOLD = 1e-12


def _size(weight, default: int) -> int:
    arr = np.asarray(weight)
    return default if arr.ndim == 0 else arr.shape[0]


@dataclass(frozen=True)
class AllocatorConfig:
    W1: object = 1.0
    W2: object = 1.0
    gamma: float = 1e10
    u_desired: Union[str, np.ndarray] = "zero"
    max_iterations: int = 100
    tolerance: float = 1e-9

    def __post_init__(self):
        # scalars expand to the full 4 x 11 problem; vectors keep their own size
        object.__setattr__(self, "W1", check_diagonal_weight(self.W1, _size(self.W1, N_ACTUATORS), "W1"))
        object.__setattr__(self, "W2", check_diagonal_weight(self.W2, _size(self.W2, 4), "W2"))
        if self.gamma < 1e3:
            raise ValueError("gamma must be >= 1e3 so the allocation error dominates")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        ud = self.u_desired
        if isinstance(ud, str):
            if ud not in ("zero", "previous"):
                raise ValueError("u_desired must be 'zero', 'previous' or an explicit vector")
        else:
            object.__setattr__(self, "u_desired", check_vector(ud, len(self.W1), "u_desired"))

    def desired(self, u_prev: Optional[np.ndarray], n: int = N_ACTUATORS) -> np.ndarray:
        if isinstance(self.u_desired, str):
            if self.u_desired == "previous" and u_prev is not None:
                return np.asarray(u_prev, dtype=float)
            return np.zeros(n)
        return self.u_desired


def restrict_config(cfg: AllocatorConfig, rows, columns) -> AllocatorConfig:
    """Config for the sub-problem on the given allocation-matrix rows and columns."""
    ud = cfg.u_desired
    if not isinstance(ud, str):
        ud = ud[list(columns)]
    return replace(cfg, W1=cfg.W1[list(columns)], W2=cfg.W2[list(rows)], u_desired=ud)


@dataclass
class AllocationResult:
    u: np.ndarray
    residual: np.ndarray
    cost: float
    iterations: int
    active_set: list = field(default_factory=list)
    status: str = OPTIMAL


def stack_problem(B, W, v, u_d, cfg: AllocatorConfig):
    """Return ``(A, b)`` with ``||A u - b||^2`` equal to the weighted objective."""
    B = np.asarray(B, dtype=float)
    n_v, n_u = B.shape
    w = _w_vector(W)
    if w.shape != (n_u,):
        raise ValueError(f"effectiveness must have {n_u} entries, got {w.shape}")
    v = check_vector(v, n_v, "v")
    u_d = check_vector(u_d, n_u, "u_d")
    W1, W2 = cfg.W1, cfg.W2
    if W1.shape != (n_u,) or W2.shape != (n_v,):
        raise ValueError(f"weights do not match a {n_v}x{n_u} allocation problem")
    sg = np.sqrt(cfg.gamma)
    A = np.vstack([sg * W2[:, None] * B * w[None, :], np.diag(W1)])
    b = np.concatenate([sg * W2 * v, W1 * u_d])
    return A, b


def _free_step(A_free: np.ndarray, r: np.ndarray) -> np.ndarray:
    # gelsy: complete orthogonal factorisation with column pivoting, minimum-norm on rank loss
    p, *_ = scipy.linalg.lstsq(A_free, r, cond=PIVOT_THRESHOLD,
                               lapack_driver="gelsy", check_finite=False)
    return p


def active_set_bls(A, b, lb, ub, u0, max_iterations: int = 100, tolerance: float = 1e-9):
    """Minimise ``||A u - b||^2`` over the box ``lb <= u <= ub``.

    Returns ``(u, active_set, iterations, status)``. ``active_set`` lists
    ``(index, side)`` pairs with side -1 for the lower bound and +1 for the
    upper bound. ``iterations`` counts working-set changes, so an already
    optimal start reports zero. Every iterate is feasible; on hitting the
    iteration limit the last iterate is returned with status
    ``"iteration-limit"``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    lb = check_vector(lb, n, "lb")
    ub = check_vector(ub, n, "ub")
    u = check_vector(u0, n, "u0").copy()
    if np.any(lb >= ub):
        raise ValueError("lower bounds must be strictly below upper bounds")
    slack = 1e-12 * np.maximum(1.0, ub - lb)
    if np.any(u < lb - slack) or np.any(u > ub + slack):
        raise ValueError("initial point must be feasible")
    u = np.clip(u, lb, ub)

    # working set: 0 free, -1 held at lower bound, +1 held at upper bound
    ws = np.zeros(n, dtype=int)
    ws[u <= lb] = -1
    ws[u >= ub] = 1
    u[ws == -1] = lb[ws == -1]
    u[ws == 1] = ub[ws == 1]

    lam_tol = tolerance * max(1.0, float(np.sum(A * A)))
    changes = 0
    status = ITERATION_LIMIT
    # each pass changes the working set by exactly one bound or terminates
    while changes <= max_iterations:
        free = ws == 0
        p = np.zeros(n)
        if free.any():
            p[free] = _free_step(A[:, free], b - A @ u)
        u_try = u + p
        if np.all(u_try >= lb - slack) and np.all(u_try <= ub + slack):
            u = np.clip(u_try, lb, ub)
            g = A.T @ (A @ u - b)
            lam = np.where(ws == -1, g, np.where(ws == 1, -g, 0.0))
            i = int(np.argmin(lam))
            if lam[i] >= -lam_tol:
                status = OPTIMAL
                break
            ws[i] = 0
        else:
            alpha = np.full(n, np.inf)
            dec = free & (p < 0)
            inc = free & (p > 0)
            alpha[dec] = (lb[dec] - u[dec]) / p[dec]
            alpha[inc] = (ub[inc] - u[inc]) / p[inc]
            i = int(np.argmin(alpha))  # first blocking bound on ties
            step = min(max(alpha[i], 0.0), 1.0)
            u = np.clip(u + step * p, lb, ub)
            if p[i] < 0:
                u[i], ws[i] = lb[i], -1
            else:
                u[i], ws[i] = ub[i], 1
        changes += 1
    else:
        changes = max_iterations

    active = [(int(i), int(ws[i])) for i in np.flatnonzero(ws)]
    return u, active, changes, status


def wls_allocate(B, W, v, params: VehicleParams, cfg: Optional[AllocatorConfig] = None,
                 u_prev=None, lb=None, ub=None) -> AllocationResult:
    """Allocate virtual control ``v`` onto the actuators.

    ``B`` must be rebuilt for the current airspeed before calling. ``W`` is
    the effectiveness the allocator believes in (the estimate, or identity
    when reallocation is disabled). Saturation is a valid outcome and does
    not raise.
    """
    cfg = cfg or AllocatorConfig()
    B = np.asarray(B, dtype=float)
    n_u = B.shape[1]
    lb = params.lower_bounds if lb is None else np.asarray(lb, dtype=float)
    ub = params.upper_bounds if ub is None else np.asarray(ub, dtype=float)
    u_d = cfg.desired(u_prev, n_u)
    A, b = stack_problem(B, W, v, u_d, cfg)
    u0 = np.zeros(n_u) if u_prev is None else np.asarray(u_prev, dtype=float)
    u0 = np.clip(u0, lb, ub)
    u, active, iters, status = active_set_bls(A, b, lb, ub, u0, cfg.max_iterations, cfg.tolerance)
    w = _w_vector(W)
    residual = B @ (w * u) - np.asarray(v, dtype=float)
    cost = float(np.sum((A @ u - b) ** 2))
    return AllocationResult(u=u, residual=residual, cost=cost, iterations=iters,
                            active_set=active, status=status)


class WLSAllocator(TransformerMixin, BaseEstimator):
    """Estimator-style wrapper around :func:`wls_allocate`.

    ``fit`` stores the current effector model (allocation matrix and the
    believed effectiveness); ``transform`` maps a batch of virtual controls
    ``(n, 4)`` to actuator commands ``(n, n_u)``, warm-starting each row from
    the previous solution.

    Examples
    --------
    >>> from vtolftc import VehicleParams, SurfaceDerivatives, build_allocation_matrix
    >>> p = VehicleParams()
    >>> B = build_allocation_matrix(p, SurfaceDerivatives(), 0.0).B
    >>> alloc = WLSAllocator().fit(B, params=p)
    >>> round(float(alloc.transform([[-p.weight, 0, 0, 0]])[0, 0]), 2)
    47.85
    """

    def __init__(self, W1=1.0, W2=1.0, gamma=1e10, u_desired="zero",
                 max_iterations=100, tolerance=1e-9):
        self.W1 = W1
        self.W2 = W2
        self.gamma = gamma
        self.u_desired = u_desired
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    @property
    def config(self) -> AllocatorConfig:
        return AllocatorConfig(W1=self.W1, W2=self.W2, gamma=self.gamma,
                               u_desired=self.u_desired, max_iterations=self.max_iterations,
                               tolerance=self.tolerance)

    def fit(self, B, w=None, params: Optional[VehicleParams] = None, lb=None, ub=None):
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != 4:
            raise ValueError(f"B must be 4 x n_u, got {B.shape}")
        n_u = B.shape[1]
        self.B_ = check_matrix(B, B.shape, "B")
        self.w_ = np.ones(n_u) if w is None else check_vector(_w_vector(w), n_u, "w")
        self.params_ = params or VehicleParams()
        self.lb_ = self.params_.lower_bounds if lb is None else check_vector(lb, n_u, "lb")
        self.ub_ = self.params_.upper_bounds if ub is None else check_vector(ub, n_u, "ub")
        self.config_ = self.config
        self.n_features_in_ = 4
        return self

    def _check_fitted(self):
        if not hasattr(self, "B_"):
            raise NotFittedError("call fit(B, w) before allocating")

    def allocate(self, v, u_prev=None) -> AllocationResult:
        self._check_fitted()
        return wls_allocate(self.B_, self.w_, v, self.params_, self.config_,
                            u_prev=u_prev, lb=self.lb_, ub=self.ub_)

    def transform(self, X):
        self._check_fitted()
        X = check_2d(X, 4)
        out = np.empty((len(X), self.B_.shape[1]))
        u_prev = None
        for k, v in enumerate(X):
            u_prev = self.allocate(v, u_prev).u
            out[k] = u_prev
        return out

    def predict(self, X):
        """Achieved wrench ``B W u`` for each allocated row of ``X``."""
        U = self.transform(X)
        return (U * self.w_) @ self.B_.T
