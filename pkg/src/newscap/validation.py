"""Input validation helpers used at public entry points."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EmptyPatchError


def as_matrix(x, name: str) -> np.ndarray:
    """Coerce to a 2-D float array, rejecting anything else."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got ndim={arr.ndim}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    return arr


def as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got ndim={arr.ndim}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    return arr


def require_same_dim(a: int, b: int, what: str) -> None:
    if a != b:
        raise DimensionError(f"{what}: dimension mismatch ({a} vs {b})")


def require_patch_rows(mat: np.ndarray, owner: str) -> None:
    if mat.shape[0] < 1:
        raise EmptyPatchError(f"{owner}: patch matrix has no rows")
