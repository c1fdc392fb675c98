"""Flat parameter-vector math with a fixed summation order.

Model parameters travel through the simulator as 1-D float64 arrays.
All reductions over them (dot products, distances, the round
aggregation) accumulate strictly left to right so that repeated runs
of the same scenario reproduce byte-identical numbers. The hot loops
live in a compiled extension when it built; otherwise a pure NumPy
fallback with identical bit-level behaviour is used. `backend_name()`
reports which one is active.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

try:
    from fedwatch import _kernels as _impl

    _BACKEND = "compiled"
except ImportError:  # pragma: no cover - depends on build environment
    from fedwatch import _kernels_py as _impl

    _BACKEND = "python"


class DimensionMismatch(ValueError):
    """Operands do not share the same parameter dimension."""


class ZeroNormError(ValueError):
    """Cosine similarity requested against a zero-norm vector."""


def backend_name() -> str:
    """Return 'compiled' or 'python' depending on the active kernels."""
    return _BACKEND


def as_params(values, dim: int | None = None) -> np.ndarray:
    """Validate and return a parameter vector.

    Accepts anything array-like; the result is a C-contiguous float64
    1-D array. Rejects empty, non-1-D and non-finite input, and a
    dimension mismatch when `dim` is given. Entering all vectors
    through this gate keeps NaN/Inf out of the training loop.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"parameter vector must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("parameter vector must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector contains NaN or Inf")
    if dim is not None and arr.size != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {arr.size}")
    return arr


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"dims differ: {a.shape[0]} vs {b.shape[0]}")
    return (np.ascontiguousarray(a, dtype=np.float64),
            np.ascontiguousarray(b, dtype=np.float64))


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Strict left-to-right dot product."""
    a, b = _check_pair(a, b)
    return float(_impl.strict_dot(a, b))


def norm(a: np.ndarray) -> float:
    """Euclidean norm via the strict dot product."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    return math.sqrt(_impl.strict_dot(a, a))


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two parameter vectors."""
    a, b = _check_pair(a, b)
    return math.sqrt(_impl.strict_sqdist(a, b))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1].

    Raises ZeroNormError if either operand has zero norm: similarity
    against a degenerate vector is undefined and the caller decides
    what that means.
    """
    a, b = _check_pair(a, b)
    na = math.sqrt(_impl.strict_dot(a, a))
    nb = math.sqrt(_impl.strict_dot(b, b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine similarity undefined for zero-norm vector")
    sim = _impl.strict_dot(a, b) / (na * nb)
    return min(1.0, max(-1.0, sim))


def linear_combine(base: np.ndarray,
                   deltas: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Return base + sum(coeff * vec) accumulated in the given order.

    The sum runs left to right over `deltas`; zero coefficients are
    skipped so they cannot perturb base entries (e.g. -0.0 staying
    -0.0). A fresh array is returned, base is never modified.
    """
    base = np.ascontiguousarray(base, dtype=np.float64)
    out = base.copy()
    for coeff, vec in deltas:
        if vec.shape[0] != base.shape[0]:
            raise DimensionMismatch(
                f"dims differ: {base.shape[0]} vs {vec.shape[0]}")
        if coeff == 0.0:
            continue
        _impl.strict_accumulate(out, float(coeff),
                                np.ascontiguousarray(vec, dtype=np.float64))
    return out
