"""Small input-checking helpers shared by the estimators."""
from __future__ import annotations

import numpy as np


def check_vector(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_matrix(x, shape: tuple, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_diagonal_weight(x, n: int, name: str) -> np.ndarray:
    """Accept a scalar, a length-n vector or an n x n diagonal matrix; return the diagonal."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    elif arr.ndim == 2:
        if arr.shape != (n, n) or np.any(arr - np.diag(np.diag(arr))):
            raise ValueError(f"{name} must be an {n}x{n} diagonal matrix")
        arr = np.diag(arr).copy()
    if arr.shape != (n,):
        raise ValueError(f"{name} must have {n} diagonal entries")
    if np.any(arr <= 0):
        raise ValueError(f"{name} diagonal entries must be positive")
    return arr


def check_2d(X, n_features: int, name: str = "X") -> np.ndarray:
    """Promote a single sample to a batch and check the feature count."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} columns, got shape {arr.shape}")
    return arr
