"""Small input-validation helpers shared by the estimators and functions."""

import numpy as np


def as_vector(x, name="x", length=None):
    """Return ``x`` as a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(X, name="X", n_features=None, min_samples=1):
    """Return ``X`` as a finite 2-D float64 array of shape (n_samples, n_features)."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if n_features is None or arr.size == n_features else arr
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_samples:
        raise ValueError(f"{name} needs at least {min_samples} samples, got {arr.shape[0]}")
    if n_features is not None and arr.shape[1] != n_features:
        raise ValueError(
            f"{name} has {arr.shape[1]} features, expected {n_features}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


INTONATIONS = ("statement", "question")


def as_binary_labels(y):
    """Map labels to 0 (statement) / 1 (question).

    Accepts the strings ``"statement"`` / ``"question"``, booleans or 0/1.
    """
    out = []
    for label in y:
        if isinstance(label, str):
            if label not in INTONATIONS:
                raise ValueError(f"unknown intonation label {label!r}")
            out.append(INTONATIONS.index(label))
        else:
            v = int(label)
            if v not in (0, 1):
                raise ValueError(f"binary label must be 0 or 1, got {label!r}")
            out.append(v)
    return np.asarray(out, dtype=np.int64)
