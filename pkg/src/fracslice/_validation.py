"""Input checks and seeded random streams."""

from __future__ import annotations

import zlib

import numpy as np
from sklearn.utils import check_array


def check_points(X, dim=None, name="X"):
    """2D float array of points, optionally with a fixed number of columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, input_name=name)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {dim}")
    return X


def check_point(x, dim):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dim or not np.all(np.isfinite(x)):
        raise ValueError(f"expected a finite point in R^{dim}")
    return x


def rng_stream(seed, name):
    """Independent generator for purpose ``name`` derived from ``seed``.

    Adding a new stream name never changes the draws of existing ones.
    """
    if seed is None:
        raise ValueError("a seed is required")
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])
