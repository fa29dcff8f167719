"""Random problem instances for the test-suite."""

import numpy as np

from mcplda.dataset import LabeledDataset, UnlabeledSet


def gaussian_instance(rng, d, K, N, M, spread=2.0):
    """Labeled/unlabeled draws from K Gaussians with a shared random covariance.

    The first K labeled points cover every class once.
    """
    means = rng.normal(scale=spread, size=(K, d))
    A = rng.normal(size=(d, d))
    L = np.linalg.cholesky(A @ A.T / d + 0.5 * np.eye(d))
    y = np.concatenate([np.arange(K), rng.integers(0, K, N - K)])
    v = rng.integers(0, K, M)
    X = means[y] + rng.normal(size=(N, d)) @ L.T
    U = means[v] + rng.normal(size=(M, d)) @ L.T
    return LabeledDataset(X, y, K), UnlabeledSet(U, v)


def full_labeled(labeled, unlabeled):
    return LabeledDataset(
        np.vstack([labeled.features, unlabeled.features]),
        np.concatenate([labeled.labels, unlabeled.oracle_labels]),
        labeled.n_classes,
    )


def random_soft_labels(rng, M, K, interior=True):
    q = rng.dirichlet(np.ones(K), size=M)
    if interior:
        q = 0.8 * q + 0.2 / K
    return q


def toy_1d():
    X = LabeledDataset(np.array([[0.0], [2.0], [4.0], [6.0]]), [0, 0, 1, 1], 2)
    U = UnlabeledSet(np.array([[1.0], [3.0], [5.0]]), [0, 1, 1])
    return X, U


def write_gaussian_csv(path, n=120, d=3, K=2, seed=0, header=True):
    """Write a labeled Gaussian-mixture CSV with the label in the last column."""
    rng = np.random.default_rng(seed)
    means = rng.normal(scale=1.5, size=(K, d))
    y = np.arange(n) % K
    X = means[y] + rng.normal(size=(n, d))
    lines = []
    if header:
        lines.append(",".join([f"f{j}" for j in range(d)] + ["class"]))
    for row, label in zip(X, y):
        lines.append(",".join(repr(float(v)) for v in row) + f",{label}")
    path.write_text("\n".join(lines) + "\n")
    return path
