"""Error metrics for probability estimates and label recovery."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConsistencyError, DegenerateEvaluationError, ParameterError
from .netcore import as_adjacency, as_labels, as_mask

MAX_PERMUTATION_K = 10
_PERM_CHUNK = 50_000


def _pair(theta_hat, theta_star):
    th = np.asarray(theta_hat, dtype=float)
    ts = np.asarray(theta_star, dtype=float)
    if th.shape != ts.shape or th.ndim != 2:
        raise ConsistencyError(f"shape mismatch: {th.shape} vs {ts.shape}")
    return th, ts


def frobenius_error(theta_hat, theta_star) -> float:
    """Squared Frobenius distance over off-diagonal entries."""
    th, ts = _pair(theta_hat, theta_star)
    d = th - ts
    np.fill_diagonal(d, 0.0)
    return float(np.sum(d * d))


def normalized_sparse_error(theta_hat, theta_star, rho: float) -> float:
    if not rho > 0:
        raise ParameterError("rho must be positive")
    return frobenius_error(theta_hat, theta_star) / rho**2


def misclassified(z_hat, z_star) -> int:
    """Hamming distance between two labelings, minimised over renamings.

    Exhaustive over all ``k!`` permutations, so ``k`` is capped at 10.
    """
    zh = as_labels(z_hat)
    zs = as_labels(z_star)
    if zh.size != zs.size:
        raise ConsistencyError("label vectors differ in length")
    if zh.size == 0:
        return 0
    k = int(max(zh.max(), zs.max())) + 1
    if k > MAX_PERMUTATION_K:
        raise CapacityError(f"exact permutation search limited to k <= {MAX_PERMUTATION_K}, got {k}")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (zh, zs), 1)
    cols = np.arange(k)
    perms = itertools.permutations(range(k))
    best = 0
    while True:
        chunk = np.array(list(itertools.islice(perms, _PERM_CHUNK)), dtype=np.int64)
        if chunk.size == 0:
            break
        # sigma maps estimated label a to true label chunk[:, a]
        best = max(best, int(confusion[cols, chunk].sum(axis=1).max()))
    return int(zh.size - best)


@dataclass(frozen=True)
class PrCurve:
    """Precision/recall at each distinct score, thresholds descending.

    ``points`` has columns (threshold, precision, recall).  The first row is
    the empty prediction (threshold ``inf``, precision 1, recall 0).
    """

    points: np.ndarray
    positives: int

    @property
    def thresholds(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def precision(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def recall(self) -> np.ndarray:
        return self.points[:, 2]

    def average_precision(self) -> float:
        """Step-wise area under the curve (sum of precision times recall gain)."""
        gains = np.diff(np.concatenate([[0.0], self.recall]))
        return float(np.sum(gains * self.precision))


def precision_recall(theta_hat, a_test, eval_mask) -> PrCurve:
    """Predict an edge wherever ``theta_hat >= t`` and score it on the mask pairs."""
    a = as_adjacency(a_test)
    x = as_mask(eval_mask, a.shape[0])
    th = np.asarray(theta_hat, dtype=float)
    if th.shape != a.shape:
        raise ConsistencyError("theta and test graph differ in size")
    iu = np.triu_indices(a.shape[0], k=1)
    keep = x[iu] == 1
    scores = th[iu][keep]
    truth = a[iu][keep].astype(np.int64)
    positives = int(truth.sum())
    if positives == 0:
        raise DegenerateEvaluationError("no positive pairs on the evaluation mask")
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    truth = truth[order]
    tp = np.cumsum(truth)
    predicted = np.arange(1, scores.size + 1)
    # last index of each run of equal scores closes a threshold
    ends = np.flatnonzero(np.r_[scores[1:] != scores[:-1], True])
    precision = tp[ends] / predicted[ends]
    recall = tp[ends] / positives
    points = np.vstack([[np.inf, 1.0, 0.0], np.column_stack([scores[ends], precision, recall])])
    return PrCurve(points=points, positives=positives)


def random_score_theta(n: int, rng: np.random.Generator) -> np.ndarray:
    """Symmetric matrix of i.i.d. uniform scores, the random-guess baseline."""
    u = np.triu(rng.random((n, n)), k=1)
    return u + u.T


def heldout_error(theta_hat, a, x_train) -> float:
    """Squared error on unobserved pairs relative to the all-zero prediction."""
    a = as_adjacency(a)
    x = as_mask(x_train, a.shape[0])
    th = np.asarray(theta_hat, dtype=float)
    if th.shape != a.shape:
        raise ConsistencyError("theta and graph differ in size")
    held = 1 - x.astype(float)
    np.fill_diagonal(held, 0.0)
    if held.sum() == 0:
        raise DegenerateEvaluationError("no held-out pairs")
    denom = float(np.sum(held * a))
    if denom == 0:
        raise DegenerateEvaluationError("no edges among held-out pairs")
    return float(np.sum(held * (a - th) ** 2)) / denom
