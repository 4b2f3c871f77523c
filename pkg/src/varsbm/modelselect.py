"""Choosing the number of communities with an integrated classification likelihood."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import NumericalError, ParameterError
from .estimator import var_theta
from .likelihood import log_likelihood_conditional
from .netcore import as_adjacency, as_mask
from .varem import EmConfig, FitResult, fit_varem


def icl_score(a, x, fit: FitResult) -> float:
    """Hard-label complete-data log-likelihood with BIC-style penalties.

    The proportions cost ``(k-1)/2 * log n``; the ``k(k+1)/2`` block
    probabilities are charged against the number of observed pairs rather
    than all pairs.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    n = a.shape[0]
    k = fit.k
    z, q, _ = var_theta(a, x, fit.tau)
    with np.errstate(divide="ignore"):
        prior = float(np.log(fit.alpha)[z].sum())
    loglik = log_likelihood_conditional(a, x, z, q)
    observed_pairs = float(x.sum()) / 2.0
    penalty = 0.5 * (k - 1) * math.log(n)
    if observed_pairs > 0:
        penalty += 0.5 * (k * (k + 1) / 2) * math.log(observed_pairs)
    return loglik + prior - penalty


@dataclass(frozen=True)
class KScore:
    k: int
    score: float
    converged: bool
    fit: FitResult


def select_k(a, x, k_range: Sequence[int], cfg: Optional[EmConfig] = None):
    """Fit each ``k`` and keep the best ICL (smallest ``k`` on ties).

    Returns ``(k_hat, scores)`` where ``scores`` lists a :class:`KScore` per
    fitted ``k`` in the order given.  A ``k`` for which every restart fails
    is skipped with a warning.
    """
    cfg = cfg or EmConfig()
    ks = list(k_range)
    if not ks:
        raise ParameterError("k_range must not be empty")
    scores: List[KScore] = []
    for k in ks:
        try:
            fit = fit_varem(a, x, int(k), cfg)
        except NumericalError as exc:
            warnings.warn(f"skipping k={k}: {exc}", RuntimeWarning, stacklevel=2)
            continue
        scores.append(KScore(int(k), icl_score(a, x, fit), fit.converged, fit))
    if not scores:
        raise NumericalError("no k could be fitted")
    best = max(scores, key=lambda s: (s.score, -s.k))
    return best.k, scores
