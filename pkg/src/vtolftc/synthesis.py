"""Fixed-structure mixed-sensitivity tuning and robust-stability gridding.

Each channel of the linear design model is a scaled double integrator
``g / s^2`` closed by a P-PID cascade: an outer proportional gain on the
tracked variable commands its rate, and an inner PID with filtered derivative
``C(s) = kp + ki/s + kd N s / (s + N)`` acts on the rate error. With
``numC = (kp + kd N) s^2 + (kp N + ki) s + ki N`` the closed loop is::

    P(s) = s^3 (s + N) + g numC(s) (s + kpo)
    S(s) = s (s^2 (s + N) + g numC(s)) / P(s)     # reference -> tracking error
    R(s) = kpo s^2 numC(s) / P(s)                 # reference -> plant input
    T(s) = g kpo numC(s) / P(s)                   # S + T = 1
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence

import numpy as np
from scipy import optimize, signal
from sklearn.base import BaseEstimator

from .control import BaselineGains, CascadeGains, WeightingParams
from .dynamics import LinearModel, linearize_heave_attitude
from .vehicle import VehicleParams

CHANNELS = ("altitude", "roll", "pitch", "yaw")
UNSTABLE_PENALTY = 1e3
MAGNITUDE_CEILING = 1e6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def default_grid(n: int = 400) -> np.ndarray:
    return np.logspace(-3, 3, n)


@dataclass(frozen=True)
class LoopDefinition:
    name: str
    plant_gain: float
    weights: WeightingParams
    grid: np.ndarray = field(default_factory=default_grid)
    N: float = 50.0

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if len(grid) < 400 or grid[0] > 1e-3 * (1 + 1e-12) or grid[-1] < 1e3 * (1 - 1e-12):
            raise ValueError("frequency grid must cover [1e-3, 1e3] rad/s with >= 400 points")
        object.__setattr__(self, "grid", grid)

    def with_plant_gain(self, gain: float) -> "LoopDefinition":
        return LoopDefinition(self.name, gain, self.weights, self.grid, self.N)


def _gain_vector(gains) -> np.ndarray:
    if isinstance(gains, CascadeGains):
        return gains.as_vector()
    x = np.asarray(gains, dtype=float)
    if x.shape != (4,):
        raise ValueError("gains must be [outer_kp, kp, ki, kd]")
    return x


def _polys(plant_gain: float, gains, N: float):
    kpo, kp, ki, kd = _gain_vector(gains)
    num_c = np.array([kp + kd * N, kp * N + ki, ki * N])
    s3sN = np.array([1.0, N, 0.0, 0.0, 0.0])
    char = s3sN + np.concatenate([[0.0], plant_gain * np.polymul(num_c, [1.0, kpo])])
    s_num = np.polymul([1.0, 0.0], np.polyadd([1.0, N, 0.0, 0.0], plant_gain * num_c))
    r_num = kpo * np.polymul([1.0, 0.0, 0.0], num_c)
    t_num = plant_gain * kpo * num_c
    return char, s_num, r_num, t_num


def closed_loop_poles(plant_gain: float, gains, N: float = 50.0) -> np.ndarray:
    char = _polys(plant_gain, gains, N)[0]
    return np.roots(np.trim_zeros(char, "f"))


def closed_loop_response(loop: LoopDefinition, gains, omega):
    """Return ``(S(jw), R(jw))`` evaluated on ``omega``.

    Frequencies landing exactly on an imaginary-axis pole are nudged by a
    relative 1e-9 and reported through the ``flagged`` attribute of the
    returned tuple's companion :func:`closed_loop_response_flagged`.
    """
    S, R, _ = closed_loop_response_flagged(loop, gains, omega)
    return S, R


def closed_loop_response_flagged(loop: LoopDefinition, gains, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    char, s_num, r_num, _ = _polys(loop.plant_gain, gains, loop.N)
    den = np.polyval(char, 1j * omega)
    flagged = np.abs(den) == 0.0
    if flagged.any():
        omega = np.where(flagged, np.where(omega == 0, 1e-9, omega * (1 + 1e-9)), omega)
        den = np.polyval(char, 1j * omega)
    s = 1j * omega
    return np.polyval(s_num, s) / den, np.polyval(r_num, s) / den, flagged


def complementary_response(loop: LoopDefinition, gains, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    char, _, _, t_num = _polys(loop.plant_gain, gains, loop.N)
    s = 1j * omega
    return np.polyval(t_num, s) / np.polyval(char, s)


def _golden_max(f: Callable[[float], float], a: float, b: float, iters: int):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc > fd else (d, fd)


def hinf_norm_grid(response, grid=None, levels: int = 3, iters_per_level: int = 10) -> float:
    """Peak magnitude of a frequency response.

    ``response`` is either a callable ``omega -> complex array`` or an array
    of samples already evaluated on ``grid``. With a callable the grid
    maximiser is refined by golden-section search in log-frequency between
    its grid neighbours, ``levels`` rounds of ``iters_per_level`` steps.
    """
    if not callable(response):
        return float(np.max(np.abs(np.asarray(response))))
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    mags = np.abs(response(grid))
    k = int(np.argmax(mags))
    best = float(mags[k])
    if len(grid) < 3:
        return best
    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, len(grid) - 1)])

    def f(logw):
        return float(np.abs(response(np.array([math.exp(logw)]))[0]))

    for _ in range(levels):
        x, fx = _golden_max(f, lo, hi, iters_per_level)
        if fx > best:
            best = fx
        width = (hi - lo) * _GOLDEN ** iters_per_level
        lo, hi = x - width, x + width
    return best


def instability_measure(plant_gain: float, gains, N: float = 50.0) -> float:
    """Largest closed-loop pole real part (>= 0 means not asymptotically stable)."""
    poles = closed_loop_poles(plant_gain, gains, N)
    return float(np.max(poles.real))


def mixed_sensitivity_cost(gains, loop: LoopDefinition, weights=None, refine: bool = True) -> float:
    """``max(||Ws S||_inf, ||Wr R||_inf)``; below 1 means every requirement is met.

    Unstable or marginal loops return ``1e3 + max(Re pole)`` so a derivative-free
    optimiser is pushed back into the stabilising region.
    """
    x = _gain_vector(gains)
    if not np.all(np.isfinite(x)):
        return UNSTABLE_PENALTY * 10
    w = weights or loop.weights
    worst = instability_measure(loop.plant_gain, x, loop.N)
    if worst >= 0:
        return UNSTABLE_PENALTY + worst
    grid = loop.grid
    S, R = closed_loop_response(loop, x, grid)
    if np.max(np.abs(S)) > MAGNITUDE_CEILING or np.max(np.abs(R)) > MAGNITUDE_CEILING:
        return UNSTABLE_PENALTY
    s = 1j * grid
    ws_s = np.abs(w.ws(s) * S)
    wr_r = np.abs(w.wr(s) * R)
    if not refine:
        return float(max(ws_s.max(), wr_r.max()))

    def ws_fn(om):
        return w.ws(1j * om) * closed_loop_response(loop, x, om)[0]

    def wr_fn(om):
        return w.wr(1j * om) * closed_loop_response(loop, x, om)[1]

    return max(hinf_norm_grid(ws_fn, grid), hinf_norm_grid(wr_fn, grid))


def initial_gains(loop: LoopDefinition) -> np.ndarray:
    """Loop-shaping starting point: inner rate loop about 4x faster than the outer loop."""
    wb = loop.weights.omega_b
    kpo = 1.5 * wb
    wi = 4.0 * kpo
    kp = wi / loop.plant_gain
    return np.array([kpo, kp, 0.2 * kp * wi, 0.05 * kp / wi])


class TuningError(RuntimeError):
    pass


def tune_fixed_structure(loop: LoopDefinition, initial=None, budget: int = 3000,
                         restarts: int = 5, seed: int = 0):
    """Minimise the mixed-sensitivity cost over positive P-PID gains.

    Nelder-Mead runs in log-gain space; the first start uses ``initial``,
    later restarts use the incumbent with simplexes of decreasing size drawn
    from ``seed``. Returns ``(gains, cost)``.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    x0 = np.log(np.maximum(_gain_vector(initial if initial is not None else initial_gains(loop)), 1e-9))

    def cost(z):
        return mixed_sensitivity_cost(np.exp(z), loop, refine=False)

    best_z, best_f = x0, cost(x0)
    per_run = max(budget // restarts, 20)
    for k in range(restarts):
        scale = 0.5 / (1 + k)
        simplex = best_z + scale * np.vstack([np.zeros(4), np.eye(4) * rng.choice([-1, 1], 4)])
        simplex[1:] += 0.1 * scale * rng.standard_normal((4, 4))
        res = optimize.minimize(cost, best_z, method="Nelder-Mead",
                                options={"initial_simplex": simplex, "maxfev": per_run,
                                         "xatol": 1e-6, "fatol": 1e-9})
        if res.fun < best_f:
            best_z, best_f = res.x, float(res.fun)
    if best_f >= UNSTABLE_PENALTY:
        raise TuningError(f"no stabilising gains found for loop {loop.name!r}")
    gains = np.exp(best_z)
    return gains, mixed_sensitivity_cost(gains, loop)


def step_metrics(plant_gain: float, gains, N: float = 50.0, t_end: float = 30.0,
                 band: float = 0.02, n: int = 6001):
    """Settling time (``band`` criterion) and overshoot of the reference step."""
    char, _, _, t_num = _polys(plant_gain, gains, N)
    t = np.linspace(0.0, t_end, n)
    _, y = signal.step(signal.lti(t_num, char), T=t)
    final = 1.0
    outside = np.flatnonzero(np.abs(y - final) > band * final)
    settling = 0.0 if len(outside) == 0 else float(t[min(outside[-1] + 1, n - 1)])
    overshoot = max(0.0, float(np.max(y) - final) / final)
    return settling, overshoot


def default_loops(params: Optional[VehicleParams] = None, grid=None) -> Dict[str, LoopDefinition]:
    """Design loops for the four channels at nominal (fault-free) plant gains.

    ``u_max`` is the channel authority of the rotor columns at zero airspeed
    beyond hover trim; ``r_max`` is the largest reference step the channel is
    expected to track.
    """
    p = params or VehicleParams()
    lin = linearize_heave_attitude(p, np.zeros(4))
    grid = default_grid() if grid is None else grid
    from .effectors import rotor_columns

    rc = rotor_columns(p)
    trim = p.weight / (8 * p.k_T)
    hi = p.throttle_limits[1]
    # moment authority about trim: push positive entries to full, negative ones to zero
    def authority(row):
        return float(np.sum(np.where(row > 0, row * (hi - trim), -row * trim)))

    specs = {
        "altitude": (lin.heave, WeightingParams(omega_b=0.8, r_max=1.0,
                                                u_max=8 * p.k_T * hi - p.weight)),
        "roll": (lin.roll, WeightingParams(omega_b=4.3, r_max=math.radians(10),
                                           u_max=authority(rc[1]))),
        "pitch": (lin.pitch, WeightingParams(omega_b=4.3, r_max=math.radians(10),
                                             u_max=authority(rc[2]))),
        # rotor yaw authority at hover is under 1 N m, so the yaw loop is slower
        "yaw": (lin.yaw, WeightingParams(omega_b=1.0, r_max=math.radians(2),
                                         u_max=authority(rc[3]))),
    }
    return {name: LoopDefinition(name, gain, w, grid) for name, (gain, w) in specs.items()}


# output and rate limits used when tuned gains are turned into controller loops
CHANNEL_LIMITS = {
    "altitude": (60.0, 2.0),
    "roll": (40.0, 1.5),
    "pitch": (40.0, 1.5),
    "yaw": (10.0, 0.5),
}


def to_baseline_gains(gains: Mapping[str, Sequence[float]], N: float = 50.0) -> BaselineGains:
    """Attach output/rate limits to tuned ``[kpo, kp, ki, kd]`` vectors."""
    loops = {}
    for name in CHANNELS:
        limit, rate_limit = CHANNEL_LIMITS[name]
        g = gains[name]
        loops[name] = g if isinstance(g, CascadeGains) else CascadeGains.from_vector(
            g, N=N, limit=limit, rate_limit=rate_limit)
    return BaselineGains(**loops)


def channel_state_matrix(plant_gain: float, gains, N: float = 50.0) -> np.ndarray:
    """Closed-loop state matrix of one channel, states ``[y, y_dot, integral, filter]``."""
    kpo, kp, ki, kd = _gain_vector(gains)
    g = plant_gain
    # rate-loop error e = -kpo*y - y_dot (zero reference)
    e = np.array([-kpo, -1.0, 0.0, 0.0])
    u = (kp + kd * N) * e + np.array([0.0, 0.0, ki, -kd * N * N])
    return np.vstack([
        [0.0, 1.0, 0.0, 0.0],
        g * u,
        e,
        e + np.array([0.0, 0.0, 0.0, -N]),
    ])


@dataclass
class StabilityReport:
    points: np.ndarray
    max_real: np.ndarray
    margin: float = 0.0

    @property
    def worst_index(self) -> int:
        return int(np.argmax(self.max_real))

    @property
    def worst_case(self):
        k = self.worst_index
        return self.points[k], float(self.max_real[k])

    @property
    def robustly_stable(self) -> bool:
        return bool(np.all(self.max_real < -self.margin))

    @property
    def verdict(self) -> str:
        return "robustly stable" if self.robustly_stable else "not robustly stable"

    def rows(self):
        for pt, m in zip(self.points, self.max_real):
            yield (*map(float, pt), float(m))


def _channel_vectors(gains) -> Dict[str, np.ndarray]:
    if isinstance(gains, BaselineGains):
        gains = gains.channels()
    return {name: _gain_vector(gains[name]) for name in CHANNELS}


def robust_stability_grid(gains, gamma_steps: int = 5, params: Optional[VehicleParams] = None,
                          N: float = 50.0, margin: float = 0.0, gamma_max: float = 0.5,
                          gamma_values: Optional[Sequence[Sequence[float]]] = None) -> StabilityReport:
    """Eigenvalue sweep of the four closed-loop channels over the loss-factor box.

    Gains stay at their nominal (fault-free) values; every point of the
    uniform ``gamma_steps``-per-axis grid over ``[0, gamma_max]^4`` scales the
    plant gains and the block-diagonal 16-state matrix is checked.
    ``gamma_values`` overrides the grid with explicit points, e.g. for
    deliberately out-of-box test cases.
    """
    if gamma_values is None:
        if gamma_steps < 2:
            raise ValueError("gamma_steps must be >= 2")
        axis = np.linspace(0.0, gamma_max, gamma_steps)
        points = np.array(list(itertools.product(axis, repeat=4)))
    else:
        points = np.atleast_2d(np.asarray(gamma_values, dtype=float))
        if points.shape[1] != 4:
            raise ValueError("gamma_values must be points of 4 loss factors")
    p = params or VehicleParams()
    nominal = linearize_heave_attitude(p, np.zeros(4)).gains()
    vecs = _channel_vectors(gains)
    max_real = np.empty(len(points))
    for k, gamma in enumerate(points):
        blocks = [channel_state_matrix(nominal[i] * (1 - gamma[i]), vecs[name], N)
                  for i, name in enumerate(CHANNELS)]
        A = np.zeros((16, 16))
        for i, blk in enumerate(blocks):
            A[4 * i:4 * i + 4, 4 * i:4 * i + 4] = blk
        max_real[k] = np.max(np.linalg.eigvals(A).real)
    return StabilityReport(points=points, max_real=max_real, margin=margin)


class StructuredHinfTuner(BaseEstimator):
    """Tune the four P-PID cascades against their mixed-sensitivity weights.

    ``fit(loops)`` takes a mapping of channel name to :class:`LoopDefinition`
    (defaults to :func:`default_loops`) and stores ``gains_`` and ``costs_``.
    ``score`` returns the negated worst weighted norm so that larger is
    better, as with scikit-learn scorers.
    """

    def __init__(self, budget=3000, restarts=5, seed=0):
        self.budget = budget
        self.restarts = restarts
        self.seed = seed

    def fit(self, loops: Optional[Mapping[str, LoopDefinition]] = None, y=None):
        loops = dict(loops) if loops is not None else default_loops()
        self.loops_ = loops
        self.gains_ = {}
        self.costs_ = {}
        for name, loop in loops.items():
            g, c = tune_fixed_structure(loop, budget=self.budget, restarts=self.restarts,
                                        seed=self.seed)
            self.gains_[name] = g
            self.costs_[name] = c
        return self

    def baseline_gains(self) -> BaselineGains:
        return to_baseline_gains(self.gains_)

    def score(self, loops=None, y=None) -> float:
        loops = self.loops_ if loops is None else loops
        return -max(mixed_sensitivity_cost(self.gains_[n], l) for n, l in loops.items())
