"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np
from sklearn.utils import check_array

UNLABELED = -1


def check_features(X, name="X", allow_empty=False):
    X = check_array(
        X,
        dtype=np.float64,
        ensure_2d=True,
        ensure_min_samples=0 if allow_empty else 1,
        input_name=name,
    )
    return X


def check_labels(y, n_samples, n_classes=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(
            f"{name} has {y.shape[0]} entries but there are {n_samples} samples"
        )
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError(f"{name} must hold integer class indices")
    y = y.astype(np.intp)
    if y.size and y.min() < 0:
        raise ValueError(f"{name} contains negative class indices")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise ValueError(
            f"{name} contains class index {y.max()} but only {n_classes} classes"
        )
    return y


def check_soft_labels(q, n_rows, n_classes, atol=1e-12):
    """Validate a row-stochastic M x K responsibility matrix."""
    q = np.asarray(q, dtype=np.float64)
    if n_rows == 0 and q.size == 0:
        return np.zeros((0, n_classes))
    if q.shape != (n_rows, n_classes):
        raise ValueError(f"soft labels must have shape {(n_rows, n_classes)}, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("soft labels must be finite")
    if q.min() < 0:
        raise ValueError("soft labels must be nonnegative")
    row_err = np.abs(q.sum(axis=1) - 1.0)
    if row_err.max() > atol:
        raise ValueError(
            f"soft label rows must sum to one (worst deviation {row_err.max():.3g})"
        )
    return q


def split_semi_supervised(X, y):
    """Separate rows marked ``-1`` (unlabeled) from labeled rows.

    Labels may be arbitrary hashables for the labeled part; they are encoded
    to ``0..K-1`` in sorted order, as scikit-learn classifiers do.
    """
    X = check_features(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ValueError("y must be one-dimensional with one entry per row of X")
    unlabeled = y == UNLABELED
    if unlabeled.all():
        raise ValueError("at least one labeled sample is required")
    classes, codes = np.unique(y[~unlabeled], return_inverse=True)
    return X[~unlabeled], codes.astype(np.intp), X[unlabeled], classes
