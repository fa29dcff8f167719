"""Data ingestion, preprocessing and the labeled / unlabeled / test split."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features

PREPROCESS_FORMAT = "mcplda.preprocess"
PREPROCESS_VERSION = 1
MAX_SPLIT_ATTEMPTS = 10_000


@dataclass
class RawDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: list | None = None
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError("features and labels differ in length")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels must lie in 0..n_classes-1")
        if np.bincount(self.labels, minlength=self.n_classes).min() == 0:
            raise ValueError("every class must appear at least once")

    def with_features(self, features):
        return RawDataset(
            features, self.labels, self.n_classes,
            class_names=list(self.class_names),
        )


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.intp)

    @property
    def n_samples(self):
        return self.features.shape[0]


@dataclass
class UnlabeledSet:
    features: np.ndarray
    oracle_labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("unlabeled features must be a 2-D array")
        if self.oracle_labels is not None:
            self.oracle_labels = np.asarray(self.oracle_labels, dtype=np.intp)
            if self.oracle_labels.shape[0] != self.features.shape[0]:
                raise ValueError("oracle labels and features differ in length")

    @property
    def n_samples(self):
        return self.features.shape[0]

    @classmethod
    def empty(cls, n_features):
        return cls(np.zeros((0, n_features)), np.zeros(0, dtype=np.intp))


@dataclass(frozen=True)
class SplitSpec:
    """Split sizes; ``labeled_size=None`` means ``2 d + K``."""

    seed: int = 0
    labeled_size: int | None = None
    unlabeled_fraction: float = 0.5

    def __post_init__(self):
        if not 0 < self.unlabeled_fraction < 1:
            raise ValueError("unlabeled_fraction must lie in (0, 1)")


def load_csv(path, label_column=-1, header="auto"):
    """Read a numeric CSV with one label column.

    ``label_column`` is a header name or a 0-based index (negative counts from
    the end). Labels are remapped to ``0..K-1`` in order of first appearance;
    the original values are kept in ``class_names``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: file is empty")

    if header == "auto":
        if _is_name(label_column):
            header = True
        else:
            header = not _all_numeric(rows[0], skip=_resolve_index(label_column, rows[0], None))
    names = [c.strip() for c in rows[0]] if header else None
    body = rows[1:] if header else rows
    width = len(rows[0])
    col = _resolve_index(label_column, rows[0], names)

    features, raw_labels = [], []
    first_line = 2 if header else 1
    for lineno, row in enumerate(body, start=first_line):
        if len(row) != width:
            raise ValueError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        vals = []
        for j, cell in enumerate(row):
            if j == col:
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: row {lineno}, column {j}: cannot parse {cell!r} as a number"
                ) from None
            if not math.isfinite(v):
                raise ValueError(f"{path}: row {lineno}, column {j}: non-finite value {cell!r}")
            vals.append(v)
        features.append(vals)
        raw_labels.append(row[col].strip())

    class_names = list(dict.fromkeys(raw_labels))
    if len(class_names) < 2:
        raise ValueError(f"{path}: need at least 2 classes, found {len(class_names)}")
    code = {c: i for i, c in enumerate(class_names)}
    feature_names = None
    if names is not None:
        feature_names = [n for j, n in enumerate(names) if j != col]
    return RawDataset(
        features=np.asarray(features, dtype=np.float64).reshape(len(body), width - 1),
        labels=np.array([code[c] for c in raw_labels], dtype=np.intp),
        n_classes=len(class_names),
        feature_names=feature_names,
        class_names=class_names,
    )


def _all_numeric(row, skip):
    for j, c in enumerate(row):
        if j == skip:
            continue
        try:
            float(c)
        except ValueError:
            return False
    return True


def _is_name(label_column):
    return isinstance(label_column, str) and not label_column.lstrip("-").isdigit()


def _resolve_index(label_column, first_row, names):
    width = len(first_row)
    if _is_name(label_column):
        if names is None or label_column not in names:
            raise ValueError(f"label column {label_column!r} not found in header")
        return names.index(label_column)
    idx = int(label_column)
    if not -width <= idx < width:
        raise ValueError(f"label column index {idx} out of range for {width} columns")
    return idx % width


@dataclass(frozen=True, eq=False)
class PreprocessModel:
    """Feature mask, unit-variance scaling and PCA basis, applied in that order."""

    mask: np.ndarray
    scales: np.ndarray
    basis: np.ndarray
    retain: float
    retained_variance: float = 1.0

    @property
    def n_features_in(self):
        return self.mask.shape[0]

    @property
    def n_components(self):
        return self.basis.shape[0]

    @classmethod
    def identity(cls, n_features):
        return cls(
            mask=np.ones(n_features, dtype=bool),
            scales=np.ones(n_features),
            basis=np.eye(n_features),
            retain=1.0,
        )

    def to_dict(self):
        return {
            "format": PREPROCESS_FORMAT,
            "version": PREPROCESS_VERSION,
            "n_features_in": int(self.n_features_in),
            "n_components": int(self.n_components),
            "mask": self.mask.astype(bool).tolist(),
            "scales": self.scales.tolist(),
            "basis": self.basis.ravel().tolist(),
            "retain": self.retain,
            "retained_variance": self.retained_variance,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != PREPROCESS_FORMAT or doc.get("version") != PREPROCESS_VERSION:
            raise ValueError("not a supported preprocessing document")
        mask = np.asarray(doc["mask"], dtype=bool)
        return cls(
            mask=mask,
            scales=np.asarray(doc["scales"], dtype=np.float64),
            basis=np.asarray(doc["basis"], dtype=np.float64).reshape(
                doc["n_components"], int(mask.sum())
            ),
            retain=float(doc["retain"]),
            retained_variance=float(doc["retained_variance"]),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)


def fit_preprocess(features, retain=0.999, zero_var_tol=1e-12):
    X = check_features(features)
    if not 0 < retain <= 1:
        raise ValueError("retain must lie in (0, 1]")
    if X.shape[0] < 2:
        raise ValueError("preprocessing needs at least two rows")
    var = X.var(axis=0, ddof=1)
    mask = var > zero_var_tol * var.max()
    if not mask.any():
        raise ValueError("all features have zero variance")
    scales = 1.0 / np.sqrt(var[mask])
    S = X[:, mask] * scales
    S = S - S.mean(axis=0)
    _, sv, vt = np.linalg.svd(S, full_matrices=False)
    explained = sv**2 / np.sum(sv**2)
    cum = np.cumsum(explained)
    n_comp = int(np.searchsorted(cum, retain - 1e-12) + 1)
    n_comp = min(n_comp, vt.shape[0])
    return PreprocessModel(
        mask=mask,
        scales=scales,
        basis=vt[:n_comp],
        retain=float(retain),
        retained_variance=float(cum[n_comp - 1]),
    )


def apply_preprocess(model, features):
    X = check_features(features)
    if X.shape[1] != model.n_features_in:
        raise ValueError(
            f"expected {model.n_features_in} raw features, got {X.shape[1]}"
        )
    return (X[:, model.mask] * model.scales) @ model.basis.T


class Preprocessor(TransformerMixin, BaseEstimator):
    """Drop constant features, scale to unit variance, keep leading PCA axes."""

    def __init__(self, retain=0.999, zero_var_tol=1e-12):
        self.retain = retain
        self.zero_var_tol = zero_var_tol

    def fit(self, X, y=None):
        self.model_ = fit_preprocess(X, self.retain, self.zero_var_tol)
        self.n_features_in_ = self.model_.n_features_in
        self.n_components_ = self.model_.n_components
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return apply_preprocess(self.model_, X)


def default_labeled_size(n_features, n_classes):
    return 2 * n_features + n_classes


def split_indices(labels, n_classes, spec, n_features):
    """Index arrays (labeled, unlabeled, test) following the split protocol."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    size = spec.labeled_size
    if size is None:
        size = default_labeled_size(n_features, n_classes)
    if size < n_classes:
        raise ValueError(f"labeled_size {size} is smaller than the number of classes")
    if size + 2 > n:
        raise ValueError(f"labeled_size {size} leaves fewer than 2 of {n} rows")
    if np.bincount(labels, minlength=n_classes).min() == 0:
        raise ValueError("some class has no instances; cannot label every class")

    rng = np.random.default_rng(spec.seed)
    for _ in range(MAX_SPLIT_ATTEMPTS):
        lab = rng.choice(n, size=size, replace=False)
        if np.unique(labels[lab]).shape[0] == n_classes:
            break
    else:
        raise RuntimeError(
            f"no labeled draw covering all classes after {MAX_SPLIT_ATTEMPTS} attempts"
        )
    rest = np.setdiff1d(np.arange(n), lab)
    rest = rng.permutation(rest)
    n_unl = int(math.floor(spec.unlabeled_fraction * rest.shape[0] + 0.5))
    n_unl = min(max(n_unl, 1), rest.shape[0] - 1)
    return np.sort(lab), np.sort(rest[:n_unl]), np.sort(rest[n_unl:])


def split(data, spec):
    """Return ``(labeled, unlabeled, test)`` for an already preprocessed dataset."""
    lab, unl, test = split_indices(
        data.labels, data.n_classes, spec, data.features.shape[1]
    )
    X, y = data.features, data.labels
    return (
        LabeledDataset(X[lab], y[lab], data.n_classes),
        UnlabeledSet(X[unl], y[unl]),
        LabeledDataset(X[test], y[test], data.n_classes),
    )
