"""Reference estimators: fully labeled oracle, constrained LDA, self-training.

The constrained estimator is a reconstruction of the closed-form procedure
that enforces the total-mean and covariance-decomposition constraints with
the help of unlabeled data; its residuals are reported for auditing.
"""

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .lda import (
    IllPosedError,
    LdaModel,
    WellPosedness,
    _one_hot,
    _weighted_fit,
    check_well_posed,
    classify,
    fit_supervised,
)


@dataclass
class ConstrainedFitDiagnostics:
    mean_residual_before: float
    mean_residual_after: float
    cov_residual: float
    projected: bool
    n_clipped: int = 0
    cov_residual_final: float = 0.0

    def to_dict(self):
        return {
            "mean_residual_before": self.mean_residual_before,
            "mean_residual_after": self.mean_residual_after,
            "cov_residual": self.cov_residual,
            "cov_residual_final": self.cov_residual_final,
            "projected": self.projected,
            "n_clipped": self.n_clipped,
            "reconstruction": True,
        }


@dataclass
class SelfTrainingResult:
    model: LdaModel
    labels: np.ndarray
    rounds: int
    converged: bool


def _augment(labeled, features, labels):
    return LabeledDataset(
        np.vstack([labeled.features, features]),
        np.concatenate([labeled.labels, labels]),
        labeled.n_classes,
    )


def fit_optimal(labeled, unlabeled, wp=WellPosedness()):
    """Supervised fit on the labeled data plus the unlabeled data with true labels."""
    if unlabeled.oracle_labels is None:
        raise ValueError("oracle labels are required for the optimal estimate")
    if unlabeled.features.shape[0] == 0:
        return fit_supervised(labeled, wp)
    Z = np.vstack([labeled.features, unlabeled.features])
    W = np.vstack([
        _one_hot(labeled.labels, labeled.n_classes),
        _one_hot(unlabeled.oracle_labels, labeled.n_classes),
    ])
    return _weighted_fit(Z, W, wp)


def _between_scatter(priors, means, center):
    D = means - center
    return (D * priors[:, None]).T @ D


def fit_constrained(labeled, unlabeled, wp=WellPosedness()):
    """Shift the supervised class means onto the all-data mean and set the
    within-class covariance to total minus between-class covariance.

    Returns ``(model, diagnostics)``.
    """
    sup = fit_supervised(labeled, wp)
    if unlabeled.features.shape[0] == 0:
        return sup, ConstrainedFitDiagnostics(0.0, 0.0, 0.0, False)

    Z = np.vstack([labeled.features, unlabeled.features])
    center = Z.mean(axis=0)
    pi = sup.priors
    delta = center - pi @ sup.means
    means = sup.means + delta

    C = Z - center
    total = C.T @ C / Z.shape[0]
    between = _between_scatter(pi, means, center)
    cov = total - between
    cov = 0.5 * (cov + cov.T)
    cov_residual = float(np.linalg.norm(total - between - cov))
    if wp.ridge:
        cov = cov + wp.ridge * np.eye(cov.shape[0])

    projected, n_clipped = False, 0
    evals, evecs = np.linalg.eigh(cov)
    # floor relative to the total covariance, which bounds cov from above
    floor = 2.0 * wp.pd_rel * np.trace(total) / total.shape[0]
    if evals.min() <= floor:
        n_clipped = int(np.sum(evals < floor))
        evals = np.maximum(evals, floor)
        cov = (evecs * evals) @ evecs.T
        cov = 0.5 * (cov + cov.T)
        projected = True
    check_well_posed(cov, wp)

    model = LdaModel(priors=pi, means=means, covariance=cov)
    diag = ConstrainedFitDiagnostics(
        mean_residual_before=float(np.linalg.norm(center - pi @ sup.means)),
        mean_residual_after=float(np.linalg.norm(center - pi @ means)),
        cov_residual=cov_residual,
        projected=projected,
        n_clipped=n_clipped,
        cov_residual_final=float(np.linalg.norm(total - between - cov)),
    )
    return model, diag


def fit_self_training(labeled, unlabeled, wp=WellPosedness(), max_rounds=100):
    """Label all of U with the current model and refit until labels stop changing."""
    model = fit_supervised(labeled, wp)
    U = unlabeled.features
    if U.shape[0] == 0:
        return SelfTrainingResult(model, np.zeros(0, dtype=np.intp), 0, True)
    current = classify(model, U)
    for rounds in range(1, max_rounds + 1):
        model = fit_supervised(_augment(labeled, U, current), wp)
        new = classify(model, U)
        if np.array_equal(new, current):
            return SelfTrainingResult(model, current, rounds, True)
        current = new
    return SelfTrainingResult(model, current, max_rounds, False)

