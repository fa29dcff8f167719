"""Contrastive pessimistic likelihood and the alternating maximin solver.

The objective for parameters ``theta`` against the supervised fit ``sup`` is

    CL(theta, q) = [L(theta | X) - L(sup | X)]
                   + sum_i sum_k q_ki [log p(u_i, k | theta) - log p(u_i, k | sup)]

It is linear in the soft labels ``q``, so the pessimistic inner minimum over
the product of simplices is attained at a vertex and can be computed exactly.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_soft_labels
from .lda import (
    LdaModel,
    WellPosedness,
    _weighted_fit,
    joint_log_densities,
    posteriors,
)

RESULT_FORMAT = "mcplda.solve_result"
RESULT_VERSION = 1


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 1000
    objective_tol: float = 1e-6
    step_base: float = 1.0
    q_init: str = "uniform"
    select: str = "best"
    record_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.objective_tol > 0:
            raise ValueError("objective_tol must be positive")
        if not self.step_base > 0:
            raise ValueError("step_base must be positive")
        if self.q_init not in ("uniform", "supervised"):
            raise ValueError("q_init must be 'uniform' or 'supervised'")
        if self.select not in ("best", "last"):
            raise ValueError("select must be 'best' or 'last'")


@dataclass
class SolveResult:
    model: LdaModel
    q: np.ndarray
    gain: float
    iterations: int
    converged: bool
    fell_back: bool = False
    trace: list = field(default_factory=list)

    def to_dict(self, max_q_rows=1000):
        doc = {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "model": self.model.to_dict(),
            "gain": self.gain,
            "iterations": self.iterations,
            "converged": self.converged,
            "fell_back": self.fell_back,
            "trace": list(self.trace),
        }
        if self.q.shape[0] <= max_q_rows:
            doc["q"] = self.q.tolist()
        else:
            doc["q"] = None
            doc["q_shape"] = list(self.q.shape)
        return doc


def _xlogy_safe(weights, values):
    # 0 * (-inf) := 0 so that boundary soft labels are well defined
    with np.errstate(invalid="ignore"):
        return np.where(weights == 0, 0.0, weights * values)


def _labeled_contrast(theta, theta_sup, labeled):
    rows = np.arange(labeled.features.shape[0])
    y = labeled.labels
    a = joint_log_densities(theta, labeled.features)[rows, y]
    b = joint_log_densities(theta_sup, labeled.features)[rows, y]
    return float(np.sum(a - b))


def q_gradient(theta, theta_sup, unlabeled):
    """Per-point, per-class log-density contrasts (the gradient of CL in q)."""
    if unlabeled.features.shape[0] == 0:
        return np.zeros((0, theta.n_classes))
    a = joint_log_densities(theta, unlabeled.features)
    b = joint_log_densities(theta_sup, unlabeled.features)
    with np.errstate(invalid="ignore"):
        g = a - b
    # -inf - -inf: both models put zero mass on the class, no contrast
    return np.where(np.isnan(g), 0.0, g)


def contrastive_likelihood(theta, theta_sup, labeled, unlabeled, q, validate=True):
    """Log-likelihood gain of ``theta`` over ``theta_sup`` under soft labels ``q``.

    With ``validate=False`` any real ``M x K`` matrix is accepted, which
    evaluates the linear extension of the objective off the simplex.
    """
    M = unlabeled.features.shape[0]
    if validate:
        q = check_soft_labels(q, M, theta.n_classes)
    else:
        q = np.asarray(q, dtype=np.float64).reshape(M, theta.n_classes)
    value = _labeled_contrast(theta, theta_sup, labeled)
    if M:
        value += float(np.sum(_xlogy_safe(q, q_gradient(theta, theta_sup, unlabeled))))
    return value


def pessimistic_gain(theta, theta_sup, labeled, unlabeled):
    """Exact minimum of the contrastive likelihood over all soft labelings.

    Returns ``(value, q_min)`` with ``q_min`` one-hot on the per-point argmin
    (ties go to the smallest class index).
    """
    value = _labeled_contrast(theta, theta_sup, labeled)
    g = q_gradient(theta, theta_sup, unlabeled)
    q_min = np.zeros_like(g)
    if g.shape[0]:
        k_star = np.argmin(g, axis=1)
        q_min[np.arange(g.shape[0]), k_star] = 1.0
        value += float(np.sum(g[np.arange(g.shape[0]), k_star]))
    return value, q_min


def project_simplex(v):
    """Euclidean projection of each row of ``v`` onto the probability simplex.

    Sort-and-threshold: for a row sorted in decreasing order ``u``, the
    threshold is ``(sum_{j<=r} u_j - 1) / r`` for the largest ``r`` with a
    positive entry after shifting.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite values onto the simplex")
    single = v.ndim == 1
    V = np.atleast_2d(v)
    K = V.shape[1]
    u = -np.sort(-V, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    r = np.arange(1, K + 1)
    active = u - css / r > 0
    rho = K - 1 - np.argmax(active[:, ::-1], axis=1)
    tau = css[np.arange(V.shape[0]), rho] / (rho + 1)
    w = np.maximum(V - tau[:, None], 0.0)
    return w[0] if single else w


def _initial_q(cfg, theta_sup, unlabeled):
    M, K = unlabeled.features.shape[0], theta_sup.n_classes
    if cfg.q_init == "supervised":
        return posteriors(theta_sup, unlabeled.features)
    return np.full((M, K), 1.0 / K)


def solve(labeled, unlabeled, theta_sup, cfg=SolverConfig(), wp=WellPosedness()):
    """Alternate the weighted ML refit in ``theta`` with projected descent in ``q``.

    Every iterate pairs soft labels ``q_t`` with ``theta_t = fit_weighted(q_t)``
    and is scored by its exact pessimistic gain. ``cfg.select`` picks the
    reported iterate: the last one, or the one with the largest gain. If the
    chosen iterate has a negative gain the supervised model (gain exactly
    zero) is returned instead.
    """
    X, y = labeled.features, labeled.labels
    U = unlabeled.features
    M, K = U.shape[0], theta_sup.n_classes
    if M == 0:
        return SolveResult(theta_sup, np.zeros((0, K)), 0.0, 0, True)
    if U.shape[1] != X.shape[1]:
        raise ValueError("labeled and unlabeled features differ in dimension")

    N = X.shape[0]
    rows = np.arange(N)
    Z = np.vstack([X, U])
    W = np.zeros((N + M, K))
    W[rows, y] = 1.0
    sup_lab = joint_log_densities(theta_sup, X)[rows, y]
    sup_unl = joint_log_densities(theta_sup, U)

    q = _initial_q(cfg, theta_sup, unlabeled)
    trace = []
    prev = None
    converged = False
    best = None
    for t in range(1, cfg.max_iters + 1):
        W[N:] = q
        theta = _weighted_fit(Z, W, wp)
        dens = joint_log_densities(theta, Z)
        with np.errstate(invalid="ignore"):
            grad = dens[N:] - sup_unl
        grad = np.where(np.isnan(grad), 0.0, grad)
        gain = float(np.sum(dens[rows, y] - sup_lab)) + float(np.sum(grad.min(axis=1)))
        if not math.isfinite(gain):
            raise FloatingPointError(f"non-finite maximin objective at iteration {t}")
        if cfg.record_trace:
            trace.append(gain)
        if cfg.select == "last" or best is None or gain > best[0]:
            best = (gain, theta, q)
        if prev is not None and abs(gain - prev) < cfg.objective_tol:
            converged = True
            break
        prev = gain
        if t == cfg.max_iters:
            break
        q = project_simplex(q - (cfg.step_base / t) * grad)

    gain, theta, q = best
    if gain < 0:
        return SolveResult(theta_sup, q, 0.0, t, converged, fell_back=True, trace=trace)
    return SolveResult(theta, q, gain, t, converged, trace=trace)
