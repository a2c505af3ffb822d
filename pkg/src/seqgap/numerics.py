"""Small dense linear-algebra and log-space helpers.

Everything is float64 and pure; inputs are never mutated. The heavy
per-step recursions live in ``seqgap._kernels``; these are the reference
primitives the rest of the package (and its tests) lean on.
"""

from __future__ import annotations

import numpy as np


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with explicit shape checking."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matvec expects a 2-d matrix, got shape {m.shape}")
    if v.ndim != 1:
        raise ValueError(f"matvec expects a 1-d vector, got shape {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax along ``axis`` (max-subtraction before exp)."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """log(softmax(z)) without forming the softmax."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Elementwise logistic function, stable for large |z|."""
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """log(sigmoid(z)) computed as -log(1 + exp(-z)) without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return -np.logaddexp(0.0, -z)


def log_sum_exp(v: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Overflow-safe log(sum(exp(v))).

    Rejects empty input; tolerates -inf entries (zero probabilities) but
    not NaN or +inf.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty vector is undefined")
    if np.isnan(v).any() or np.isposinf(v).any():
        raise ValueError("log_sum_exp requires entries in [-inf, inf)")
    m = np.max(v, axis=axis, keepdims=axis is not None)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - (m if axis is not None else float(m))), axis=axis))
    out = out + (np.squeeze(m, axis=axis) if axis is not None else float(m))
    return out if axis is not None else float(out)


def log_mean_exp(v: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """log of the arithmetic mean of exp(v); the chain aggregation rule."""
    v = np.asarray(v, dtype=np.float64)
    n = v.size if axis is None else v.shape[axis]
    return log_sum_exp(v, axis=axis) - np.log(n)


def require_finite(name: str, a: np.ndarray) -> None:
    """Raise if ``a`` contains NaN or infinities."""
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
