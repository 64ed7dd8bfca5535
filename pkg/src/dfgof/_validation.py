"""Input validation helpers shared by the public API."""

from __future__ import annotations

import hashlib

import numpy as np

from .exceptions import DimensionMismatch, InvalidModel

UNIT_TOL = 1e-12
PROB_SUM_TOL = 1e-9


def as_vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_unit_vector(x, name="vector", tol=UNIT_TOL) -> np.ndarray:
    """Return ``x`` as a float array after checking it has unit norm and m >= 2."""
    arr = as_vector(x, name)
    if arr.size < 2:
        raise DimensionMismatch(f"{name} must have dimension >= 2, got {arr.size}")
    norm = np.linalg.norm(arr)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must have unit norm, got {norm!r}")
    return arr


def check_same_dim(*arrays, names=None):
    sizes = [np.shape(a)[-1] for a in arrays]
    if len(set(sizes)) > 1:
        label = ", ".join(names) if names else "inputs"
        raise DimensionMismatch(f"dimension mismatch between {label}: {sizes}")
    return sizes[0]


def check_probabilities(p, name="probs", tol=PROB_SUM_TOL) -> np.ndarray:
    arr = as_vector(p, name)
    if arr.size < 2:
        raise InvalidModel(f"{name} needs at least 2 cells, got {arr.size}")
    if np.any(arr <= 0):
        bad = np.flatnonzero(arr <= 0) + 1
        raise InvalidModel(f"{name} must be strictly positive; cells {bad.tolist()} are not")
    total = float(np.sum(arr))
    if abs(total - 1.0) > tol:
        raise InvalidModel(f"{name} must sum to 1, got sum {total!r}")
    return arr


def check_counts(counts, name="counts") -> np.ndarray:
    arr = np.asarray(counts)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError(f"{name} must be integers")
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"{name} must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    if arr.sum() <= 0:
        raise ValueError(f"{name} must have positive total")
    return arr


def array_hash(*arrays) -> str:
    """Short content hash used to bind results to the inputs that made them."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=float)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:16]
