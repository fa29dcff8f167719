"""scikit-learn compatible estimators.

Semi-supervised estimators follow the ``sklearn.semi_supervised`` convention:
rows of ``X`` whose label in ``y`` is ``-1`` are unlabeled.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines, lda, mcpl
from ._validation import check_features, split_semi_supervised
from .dataset import LabeledDataset, UnlabeledSet


class _LDAClassifierBase(ClassifierMixin, BaseEstimator):

    def _wp(self):
        return lda.WellPosedness(pd_rel=self.pd_rel, ridge=self.ridge)

    def _prepare(self, X, y):
        Xl, yl, Xu, classes = split_semi_supervised(X, y)
        self.classes_ = classes
        self.n_features_in_ = Xl.shape[1]
        labeled = LabeledDataset(Xl, yl, len(classes))
        return labeled, UnlabeledSet(Xu)

    def decision_function(self, X):
        """Joint log-densities ``log pi_k g(x | mu_k, S)``, one column per class."""
        check_is_fitted(self, "model_")
        return lda.joint_log_densities(self.model_, check_features(X))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return lda.posteriors(self.model_, check_features(X))

    def predict_log_proba(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self.predict_proba(X))

    def log_likelihood(self, X, y, normalize=True):
        """Per-object (or summed) joint log-likelihood of labeled data."""
        check_is_fitted(self, "model_")
        codes = np.searchsorted(self.classes_, y)
        if np.any(self.classes_[np.clip(codes, 0, len(self.classes_) - 1)] != y):
            raise ValueError("y contains labels unseen during fit")
        data = LabeledDataset(check_features(X), codes, len(self.classes_))
        return lda.log_likelihood(self.model_, data, normalize=normalize)


class SupervisedLDA(_LDAClassifierBase):
    """Maximum-likelihood LDA on the labeled rows only (``-1`` rows are ignored)."""

    def __init__(self, ridge=0.0, pd_rel=1e-10):
        self.ridge = ridge
        self.pd_rel = pd_rel

    def fit(self, X, y):
        labeled, _ = self._prepare(X, y)
        self.model_ = lda.fit_supervised(labeled, self._wp())
        return self


class MCPLDA(_LDAClassifierBase):
    """Semi-supervised LDA by maximum contrastive pessimistic likelihood.

    The fitted parameters never have a lower log-likelihood than the
    supervised fit on the labeled plus unlabeled data, whatever the true
    labels of the unlabeled rows are.

    Attributes
    ----------
    model_ : LdaModel
    supervised_model_ : LdaModel
    q_ : ndarray of shape (n_unlabeled, n_classes)
        Pessimistic soft labels of the unlabeled rows.
    gain_ : float
        Worst-case log-likelihood gain over the supervised fit.
    n_iter_, converged_
    """

    def __init__(
        self,
        max_iter=1000,
        tol=1e-6,
        alpha0=1.0,
        q_init="uniform",
        select="best",
        ridge=0.0,
        pd_rel=1e-10,
        record_trace=False,
    ):
        self.max_iter = max_iter
        self.tol = tol
        self.alpha0 = alpha0
        self.q_init = q_init
        self.select = select
        self.ridge = ridge
        self.pd_rel = pd_rel
        self.record_trace = record_trace

    def fit(self, X, y):
        labeled, unlabeled = self._prepare(X, y)
        wp = self._wp()
        cfg = mcpl.SolverConfig(
            max_iters=self.max_iter,
            objective_tol=self.tol,
            step_base=self.alpha0,
            q_init=self.q_init,
            select=self.select,
            record_trace=self.record_trace,
        )
        self.supervised_model_ = lda.fit_supervised(labeled, wp)
        res = mcpl.solve(labeled, unlabeled, self.supervised_model_, cfg, wp)
        self.model_ = res.model
        self.q_ = res.q
        self.gain_ = res.gain
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.trace_ = res.trace
        return self


class ConstrainedLDA(_LDAClassifierBase):
    """Supervised LDA adjusted to the all-data mean and total covariance."""

    def __init__(self, ridge=0.0, pd_rel=1e-10):
        self.ridge = ridge
        self.pd_rel = pd_rel

    def fit(self, X, y):
        labeled, unlabeled = self._prepare(X, y)
        self.model_, self.diagnostics_ = baselines.fit_constrained(
            labeled, unlabeled, self._wp()
        )
        return self


class SelfTrainingLDA(_LDAClassifierBase):
    """Hard-label self-training of LDA on all unlabeled rows."""

    def __init__(self, max_rounds=100, ridge=0.0, pd_rel=1e-10):
        self.max_rounds = max_rounds
        self.ridge = ridge
        self.pd_rel = pd_rel

    def fit(self, X, y):
        labeled, unlabeled = self._prepare(X, y)
        res = baselines.fit_self_training(labeled, unlabeled, self._wp(), self.max_rounds)
        self.model_ = res.model
        self.transduction_ = self.classes_[res.labels]
        self.n_iter_ = res.rounds
        self.converged_ = res.converged
        return self
