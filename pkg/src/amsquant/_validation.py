"""Input validation shared by the library entry points and the estimator."""

from __future__ import annotations

import os

import numpy as np
from sklearn.utils import check_array


def check_weights(weights) -> np.ndarray:
    """Return ``weights`` as a finite, non-empty 2-D float64 array."""
    arr = check_array(
        weights,
        dtype=[np.float64, np.float32, np.float16],
        ensure_all_finite=False,
        ensure_2d=True,
        input_name="weights",
    )
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite weight")
    return np.asarray(arr, dtype=np.float64)


def check_activations(x, cols: int) -> np.ndarray:
    """Return activations as a ``(batch, cols)`` float16 array."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != cols:
        raise ValueError(f"activations of shape {np.shape(x)} do not match {cols} input columns")
    if arr.shape[0] < 1:
        raise ValueError("batch must be at least 1")
    return arr.astype(np.float16)


def effective_n_jobs(n_jobs: int | None) -> int:
    """``None`` means 1; zero or negative means every available CPU."""
    if n_jobs is None:
        return 1
    if n_jobs <= 0:
        return os.cpu_count() or 1
    return int(n_jobs)
