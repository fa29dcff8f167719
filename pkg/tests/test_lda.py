import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from mcplda.dataset import LabeledDataset, UnlabeledSet
from mcplda.lda import (
    IllPosedError,
    LdaModel,
    WellPosedness,
    classify,
    error_rate,
    fit_supervised,
    fit_weighted,
    joint_log_densities,
    joint_log_density,
    log_likelihood,
    logdet_svd,
    posteriors,
)

from synth import gaussian_instance, random_soft_labels, toy_1d


def test_supervised_toy_values():
    X, _ = toy_1d()
    m = fit_supervised(X)
    np.testing.assert_allclose(m.priors, [0.5, 0.5])
    np.testing.assert_allclose(m.means, [[1.0], [5.0]])
    np.testing.assert_allclose(m.covariance, [[1.0]])


def test_weighted_toy_values():
    X, U = toy_1d()
    q = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    m = fit_weighted(X, U, q)
    np.testing.assert_allclose(m.priors, [0.5, 0.5])
    # class 0 gets 0, 2, 1 and half of 3; class 1 mirrors it
    np.testing.assert_allclose(m.means, [[9 / 7], [33 / 7]])
    np.testing.assert_allclose(m.covariance, [[52 / 49]])


def test_joint_log_density_value():
    m = LdaModel(priors=[0.5, 0.5], means=[[0.0], [3.0]], covariance=[[1.0]])
    assert joint_log_density(m, [0.0], 0) == pytest.approx(np.log(0.5) - 0.5 * np.log(2 * np.pi))
    assert joint_log_density(m, [0.0], 0) == pytest.approx(-1.6120857137642188, abs=1e-12)


def test_densities_match_scipy():
    rng = np.random.default_rng(0)
    X, _ = gaussian_instance(rng, 3, 3, 20, 0)
    m = fit_supervised(X)
    Z = rng.normal(size=(7, 3))
    got = joint_log_densities(m, Z)
    for k in range(3):
        ref = np.log(m.priors[k]) + multivariate_normal(m.means[k], m.covariance).logpdf(Z)
        np.testing.assert_allclose(got[:, k], ref, rtol=1e-10)


def test_zero_prior_gives_minus_inf():
    m = LdaModel(priors=[1.0, 0.0], means=[[0.0], [1.0]], covariance=[[1.0]])
    dens = joint_log_densities(m, [[0.3]])
    assert np.isfinite(dens[0, 0]) and dens[0, 1] == -np.inf
    np.testing.assert_allclose(posteriors(m, [[0.3]]), [[1.0, 0.0]])


def test_classify_tie_smallest_index():
    m = LdaModel(priors=[0.5, 0.5], means=[[-1.0], [1.0]], covariance=[[1.0]])
    assert classify(m, [[0.0]])[0] == 0
    assert classify(m, [[0.5]])[0] == 1


def test_error_rate_and_loglik():
    X, _ = toy_1d()
    m = fit_supervised(X)
    assert error_rate(m, X) == 0.0
    total = log_likelihood(m, X, normalize=False)
    assert log_likelihood(m, X) == pytest.approx(total / 4)
    # four points at unit distance from their class mean
    expected = 4 * (np.log(0.5) - 0.5 * np.log(2 * np.pi) - 0.5)
    assert total == pytest.approx(expected)


def test_ill_posed_raises():
    X = LabeledDataset([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], [0, 0, 1, 1], 2)
    with pytest.raises(IllPosedError):
        fit_supervised(X)
    # a ridge restores positive definiteness
    m = fit_supervised(X, WellPosedness(ridge=1e-3))
    assert np.linalg.eigvalsh(m.covariance).min() > 0


def test_empty_class_raises():
    X = LabeledDataset([[0.0], [1.0], [2.0]], [0, 0, 0], 2)
    with pytest.raises(IllPosedError, match="zero total weight"):
        fit_supervised(X)


def test_bad_inputs():
    with pytest.raises(ValueError):
        fit_supervised(LabeledDataset([[0.0]], [0], 1))
    with pytest.raises(ValueError):
        fit_supervised(LabeledDataset([[0.0], [1.0]], [0, 2], 2))
    with pytest.raises(ValueError):
        LdaModel(priors=[0.6, 0.6], means=[[0.0], [1.0]], covariance=[[1.0]])
    with pytest.raises(ValueError):
        LdaModel(priors=[1.0], means=[[0.0, 0.0]], covariance=[[1.0, 0.5], [0.0, 1.0]])
    X, U = toy_1d()
    with pytest.raises(ValueError):
        fit_weighted(X, U, np.full((3, 2), 0.6))
    with pytest.raises(ValueError):
        WellPosedness(pd_rel=0.0)


def test_model_is_read_only():
    X, _ = toy_1d()
    m = fit_supervised(X)
    with pytest.raises(ValueError):
        m.means[0, 0] = 3.0


def test_model_round_trip():
    rng = np.random.default_rng(3)
    X, _ = gaussian_instance(rng, 4, 3, 20, 0)
    m = fit_supervised(X)
    doc = json.loads(json.dumps(m.to_dict()))
    back = LdaModel.from_dict(doc)
    assert back.equals(m)
    np.testing.assert_array_equal(back.covariance, m.covariance)
    with pytest.raises(ValueError):
        LdaModel.from_dict({**doc, "format": "other"})
    with pytest.raises(ValueError):
        LdaModel.from_dict({**doc, "version": 2})


def test_weighted_with_empty_unlabeled_is_supervised():
    X, _ = toy_1d()
    m = fit_weighted(X, UnlabeledSet.empty(1), np.zeros((0, 2)))
    assert m.equals(fit_supervised(X))


@st.composite
def instances(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    d = draw(st.integers(1, 4))
    K = draw(st.integers(2, 4))
    M = draw(st.integers(1, 12))
    rng = np.random.default_rng(seed)
    X, U = gaussian_instance(rng, d, K, 2 * d + K + 3, M)
    q = random_soft_labels(rng, M, K, interior=draw(st.booleans()))
    return X, U, q


@settings(max_examples=60, deadline=None)
@given(instances())
def test_weighted_fit_invariants(inst):
    X, U, q = inst
    m = fit_weighted(X, U, q)
    N, M = X.n_samples, U.n_samples
    Z = np.vstack([X.features, U.features])
    W = np.vstack([np.eye(X.n_classes)[X.labels], q])
    # priors are the class masses, the prior-weighted mean is the data mean
    np.testing.assert_allclose(m.priors, W.sum(0) / (N + M), atol=1e-12)
    np.testing.assert_allclose(m.priors @ m.means, Z.mean(0), atol=1e-10)
    # within + between = total covariance
    C = Z - Z.mean(0)
    total = C.T @ C / (N + M)
    D = m.means - Z.mean(0)
    between = (D * m.priors[:, None]).T @ D
    np.testing.assert_allclose(m.covariance + between, total, atol=1e-9)
    assert np.linalg.eigvalsh(m.covariance).min() > 0


@settings(max_examples=60, deadline=None)
@given(instances())
def test_one_hot_weighted_equals_supervised(inst):
    X, U, _ = inst
    q = np.eye(X.n_classes)[U.oracle_labels]
    full = LabeledDataset(
        np.vstack([X.features, U.features]), np.concatenate([X.labels, U.oracle_labels]), X.n_classes
    )
    try:
        ref = fit_supervised(full)
    except IllPosedError:
        return
    assert fit_weighted(X, U, q).equals(ref, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(instances())
def test_posteriors_are_distributions(inst):
    X, U, _ = inst
    m = fit_supervised(X)
    P = posteriors(m, U.features)
    np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-12)
    assert P.min() >= 0
    np.testing.assert_array_equal(classify(m, U.features), np.argmax(P, axis=1))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_logdet_matches_slogdet(d, seed):
    A = np.random.default_rng(seed).normal(size=(d, d))
    S = A @ A.T + 0.1 * np.eye(d)
    sign, ref = np.linalg.slogdet(S)
    assert sign > 0
    assert logdet_svd(S) == pytest.approx(ref, rel=1e-10, abs=1e-10)
