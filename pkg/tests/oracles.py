"""Reference solvers that share no code with the package allocator."""
import itertools

import numpy as np


def random_instances(n, n_u, seed, gamma_range=(1e3, 1e4)):
    """Seeded WLS problems: random B, diagonal W with some zeros, random boxes."""
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(n, 4, n_u))
    w = rng.uniform(0.0, 1.0, size=(n, n_u))
    w[rng.random((n, n_u)) < 0.2] = 0.0
    lo = rng.uniform(-2.0, 0.5, size=(n, n_u))
    hi = lo + rng.uniform(0.2, 3.0, size=(n, n_u))
    v = rng.normal(scale=3.0, size=(n, 4))
    W1 = rng.uniform(0.5, 2.0, size=(n, n_u))
    W2 = rng.uniform(0.5, 2.0, size=(n, 4))
    ud = rng.uniform(lo, hi)
    gamma = np.exp(rng.uniform(*np.log(gamma_range), size=n))
    return dict(B=B, w=w, lb=lo, ub=hi, v=v, W1=W1, W2=W2, ud=ud, gamma=gamma)


def stacked(inst):
    """Batched ``A``, ``b`` for ``||A u - b||^2``, built directly from the objective."""
    B, w, W1, W2 = inst["B"], inst["w"], inst["W1"], inst["W2"]
    sg = np.sqrt(inst["gamma"])[:, None, None]
    top = sg * W2[:, :, None] * B * w[:, None, :]
    n, n_u = w.shape
    bottom = np.zeros((n, n_u, n_u))
    idx = np.arange(n_u)
    bottom[:, idx, idx] = W1
    A = np.concatenate([top, bottom], axis=1)
    b = np.concatenate([sg[:, :, 0] * W2 * inst["v"], W1 * inst["ud"]], axis=1)
    return A, b


def objective(A, b, u):
    r = np.einsum("nij,nj->ni", A, u) - b
    return np.sum(r * r, axis=1)


def projected_gradient(A, b, lb, ub, tol=1e-10, max_iter=200000):
    """FISTA with adaptive restart on the box, run until the projected step stalls."""
    H = np.einsum("nki,nkj->nij", A, A)
    c = np.einsum("nki,nk->ni", A, b)
    L = np.linalg.eigvalsh(H)[:, -1][:, None]
    x = np.clip(np.zeros_like(lb), lb, ub)
    y, t = x.copy(), np.ones((len(x), 1))
    for _ in range(max_iter):
        g = np.einsum("nij,nj->ni", H, y) - c
        x_new = np.clip(y - g / L, lb, ub)
        step = np.max(np.abs(x_new - x) / np.maximum(1.0, np.abs(x_new)), axis=1)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        restart = (np.sum((y - x_new) * (x_new - x), axis=1) > 0)[:, None]
        y = np.where(restart, x_new, x_new + (t - 1) / t_new * (x_new - x))
        t = np.where(restart, 1.0, t_new)
        x = x_new
        if np.all(step < tol):
            break
    return x


def enumerate_bounds(A, b, lb, ub):
    """Exact box-constrained LS by trying every lower/free/upper pattern.

    Feasible stationary points of every pattern are candidates; the global
    minimiser of a convex problem is among them.
    """
    n, _, n_u = A.shape
    best = np.full(n, np.inf)
    best_u = np.zeros((n, n_u))
    for pattern in itertools.product((-1, 0, 1), repeat=n_u):
        pat = np.array(pattern)
        u = np.where(pat == -1, lb, np.where(pat == 1, ub, 0.0))
        free = np.flatnonzero(pat == 0)
        if len(free):
            fixed = np.flatnonzero(pat != 0)
            r = b - np.einsum("nij,nj->ni", A[:, :, fixed], u[:, fixed])
            Af = A[:, :, free]
            sol = np.linalg.solve(np.einsum("nki,nkj->nij", Af, Af),
                                  np.einsum("nki,nk->ni", Af, r)[..., None])[..., 0]
            u[:, free] = sol
        feasible = np.all((u >= lb - 1e-12) & (u <= ub + 1e-12), axis=1)
        f = np.where(feasible, objective(A, b, u), np.inf)
        better = f < best
        best[better] = f[better]
        best_u[better] = u[better]
    return best_u, best


def kkt_violation(A, b, u, lb, ub, atol=1e-9):
    """Return (worst free-gradient ratio, worst wrong-sign multiplier ratio) per instance.

    Both are scaled by the spectral norm of ``A^T A``.
    """
    g = np.einsum("nki,nk->ni", A, np.einsum("nij,nj->ni", A, u) - b)
    scale = np.linalg.norm(np.einsum("nki,nkj->nij", A, A), ord=2, axis=(1, 2))[:, None]
    span = ub - lb
    at_lb = u <= lb + atol * span
    at_ub = u >= ub - atol * span
    free = ~(at_lb | at_ub)
    free_grad = np.max(np.where(free, np.abs(g), 0.0) / scale, axis=1)
    # at a lower bound the gradient must be >= 0, at an upper bound <= 0
    wrong = np.maximum(np.where(at_lb, -g, 0.0), np.where(at_ub, g, 0.0))
    return free_grad, np.max(wrong / scale, axis=1)
