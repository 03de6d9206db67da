from __future__ import annotations

from typing import Callable

import numpy as np

# magnitudes below this are compared in absolute terms
REL_FLOOR = 1e-6


def numeric_grad(f: Callable[[], float], arr: np.ndarray, eps: float = 1e-5, idx=None) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    positions = range(flat.size) if idx is None else idx
    for i in positions:
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, idx=None) -> float:
    a = analytic.reshape(-1)
    n = numeric.reshape(-1)
    if idx is not None:
        a, n = a[idx], n[idx]
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
    return float(np.max(np.abs(a - n) / denom))


def check_arrays(
    f: Callable[[], float],
    arrays: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    eps: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Max relative error per named array; optionally on a random entry subset."""
    errors = {}
    for name, arr in arrays.items():
        idx = None
        if max_entries is not None and arr.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(arr.size, size=max_entries, replace=False))
        num = numeric_grad(f, arr, eps, idx)
        errors[name] = relative_error(analytic[name], num, idx)
    return errors
