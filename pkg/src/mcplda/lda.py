"""Linear discriminant analysis: parameter container, ML fits, likelihoods.

All log-densities use the shared-covariance Gaussian class model

    log p(x, k) = log pi_k - d/2 log(2 pi) - 1/2 logdet(S) - 1/2 (x - mu_k)' S^-1 (x - mu_k)

with ``logdet`` taken as the sum of log singular values of ``S``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._validation import check_features, check_labels, check_soft_labels

LOG_2PI = np.log(2.0 * np.pi)
MODEL_FORMAT = "mcplda.lda_model"
MODEL_VERSION = 1


class IllPosedError(ValueError):
    """The (weighted) within-class covariance is not positive definite."""


@dataclass(frozen=True)
class WellPosedness:
    """Positive-definiteness requirement for fitted covariances.

    ``pd_rel`` scales with ``trace(S) / d`` so the check does not depend on
    the units of the features. ``ridge`` is added to the diagonal of every
    fitted covariance before the check.
    """

    pd_rel: float = 1e-10
    ridge: float = 0.0

    def __post_init__(self):
        if not self.pd_rel > 0:
            raise ValueError("pd_rel must be positive")
        if not self.ridge >= 0:
            raise ValueError("ridge must be nonnegative")

    def pd_tol(self, covariance):
        d = covariance.shape[0]
        return self.pd_rel * np.trace(covariance) / d


def _freeze(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LdaModel:
    priors: np.ndarray
    means: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        priors = _freeze(self.priors)
        means = np.atleast_2d(_freeze(self.means))
        cov = np.atleast_2d(_freeze(self.covariance))
        if priors.ndim != 1 or means.shape[0] != priors.shape[0]:
            raise ValueError("priors and means disagree on the number of classes")
        if cov.shape != (means.shape[1], means.shape[1]):
            raise ValueError("covariance shape does not match the feature dimension")
        if priors.min() < 0 or abs(priors.sum() - 1.0) > 1e-12:
            raise ValueError("priors must lie on the probability simplex")
        if np.abs(cov - cov.T).max() > 1e-10 * max(1.0, np.abs(cov).max()):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariance", cov)

    @property
    def n_classes(self):
        return self.priors.shape[0]

    @property
    def n_features(self):
        return self.means.shape[1]

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "n_classes": int(self.n_classes),
            "n_features": int(self.n_features),
            "priors": self.priors.tolist(),
            "means": self.means.ravel().tolist(),
            "covariance": self.covariance.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != MODEL_FORMAT:
            raise ValueError(f"not an LDA model document: format={doc.get('format')!r}")
        if doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported LDA model version {doc.get('version')!r}")
        k, d = doc["n_classes"], doc["n_features"]
        return cls(
            priors=np.asarray(doc["priors"]),
            means=np.asarray(doc["means"]).reshape(k, d),
            covariance=np.asarray(doc["covariance"]).reshape(d, d),
        )

    def equals(self, other, atol=0.0):
        return (
            self.priors.shape == other.priors.shape
            and self.means.shape == other.means.shape
            and np.allclose(self.priors, other.priors, rtol=0, atol=atol)
            and np.allclose(self.means, other.means, rtol=0, atol=atol)
            and np.allclose(self.covariance, other.covariance, rtol=0, atol=atol)
        )


def logdet_svd(matrix):
    """Log-determinant of a positive definite matrix from its singular values."""
    s = np.linalg.svd(matrix, compute_uv=False)
    return float(np.sum(np.log(s)))


def check_well_posed(covariance, wp):
    eig_min = np.linalg.eigvalsh(covariance).min()
    tol = wp.pd_tol(covariance)
    if not (tol > 0 and eig_min > tol):
        raise IllPosedError(
            f"covariance is not positive definite: smallest eigenvalue {eig_min:.3e}"
            f" <= tolerance {tol:.3e}"
        )


def _weighted_fit(Z, W, wp):
    """ML estimates for LDA from per-row class weights ``W`` (rows sum to one)."""
    n = Z.shape[0]
    mass = W.sum(axis=0)
    if np.any(mass <= 0):
        empty = np.flatnonzero(mass <= 0).tolist()
        raise IllPosedError(f"classes {empty} receive zero total weight")
    priors = mass / n
    priors = priors / priors.sum()
    means = (W.T @ Z) / mass[:, None]
    d = Z.shape[1]
    cov = np.zeros((d, d))
    for k in range(W.shape[1]):
        C = Z - means[k]
        cov += (C * W[:, k, None]).T @ C
    cov /= n
    cov = 0.5 * (cov + cov.T)
    if wp.ridge:
        cov = cov + wp.ridge * np.eye(d)
    check_well_posed(cov, wp)
    return LdaModel(priors=priors, means=means, covariance=cov)


def _one_hot(labels, n_classes):
    W = np.zeros((labels.shape[0], n_classes))
    W[np.arange(labels.shape[0]), labels] = 1.0
    return W


def fit_supervised(data, wp=WellPosedness()):
    """Closed-form ML estimate on hard-labeled data (covariance divisor N)."""
    X = check_features(data.features)
    y = check_labels(data.labels, X.shape[0], data.n_classes)
    if X.shape[0] < 2:
        raise ValueError("at least two labeled samples are required")
    return _weighted_fit(X, _one_hot(y, data.n_classes), wp)


def fit_weighted(labeled, unlabeled, q, wp=WellPosedness()):
    """ML estimate when the unlabeled rows carry soft labels ``q`` (M x K)."""
    X = check_features(labeled.features)
    y = check_labels(labeled.labels, X.shape[0], labeled.n_classes)
    K = labeled.n_classes
    U = unlabeled.features
    if U.shape[0] == 0:
        return fit_supervised(labeled, wp)
    if U.shape[1] != X.shape[1]:
        raise ValueError("labeled and unlabeled features differ in dimension")
    q = check_soft_labels(q, U.shape[0], K)
    Z = np.vstack([X, U])
    W = np.vstack([_one_hot(y, K), q])
    return _weighted_fit(Z, W, wp)


def _whitening(model):
    u, s, _ = np.linalg.svd(model.covariance, hermitian=True)
    return u / np.sqrt(s), float(np.sum(np.log(s)))


def joint_log_densities(model, features):
    """``n x K`` matrix of ``log pi_k g(x | mu_k, S)``; ``-inf`` where ``pi_k = 0``."""
    Z = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if Z.shape[1] != model.n_features:
        raise ValueError(
            f"expected {model.n_features} features, got {Z.shape[1]}"
        )
    W, logdet = _whitening(model)
    Zw = Z @ W
    Mw = model.means @ W
    maha = ((Zw[:, None, :] - Mw[None, :, :]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore"):
        log_priors = np.log(model.priors)
    d = model.n_features
    return log_priors - 0.5 * (d * LOG_2PI + logdet) - 0.5 * maha


def joint_log_density(model, x, k):
    return float(joint_log_densities(model, np.reshape(x, (1, -1)))[0, k])


def log_likelihood(model, data, normalize=True):
    """Sum (or per-object mean) of the joint log-density at the true labels."""
    X = check_features(data.features)
    y = check_labels(data.labels, X.shape[0], model.n_classes)
    ll = joint_log_densities(model, X)[np.arange(X.shape[0]), y]
    total = float(np.sum(ll))
    return total / X.shape[0] if normalize else total


def posteriors(model, features):
    logp = joint_log_densities(model, features)
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def classify(model, features):
    # argmax returns the first maximum, i.e. ties go to the smallest class index
    return np.argmax(joint_log_densities(model, features), axis=1)


def error_rate(model, test):
    y = check_labels(test.labels, test.features.shape[0], model.n_classes)
    return float(np.mean(classify(model, test.features) != y))
