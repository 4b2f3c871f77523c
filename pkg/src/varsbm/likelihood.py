"""Conditional likelihood of a labelled SBM under a sampling mask.

Everything here is exact.  ``brute_force_mle`` and ``log_marginal_likelihood``
enumerate all ``k**n`` label functions and are only meant for tiny graphs,
where they serve as ground truth for the variational code.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, ParameterError
from .netcore import as_adjacency, as_labels, as_mask, observed_density

PROB_FLOOR = 1e-9
MAX_ENUMERATION = 10**7
_CHUNK = 1 << 15


class DegenerateLikelihoodWarning(RuntimeWarning):
    """A probability of exactly 0 or 1 contradicts an observed entry."""


def clamp_probs(q, lower: float = PROB_FLOOR, upper: float = 1.0 - PROB_FLOOR) -> np.ndarray:
    return np.clip(np.asarray(q, dtype=float), lower, upper)


@dataclass(frozen=True)
class BlockCounts:
    """Per block pair: observed edges, observed pairs and all pairs.

    Each unordered node pair is counted once, so diagonal blocks count
    ``i < j`` pairs inside a community.
    """

    edges_obs: np.ndarray
    pairs_obs: np.ndarray
    pairs_total: np.ndarray

    @property
    def k(self) -> int:
        return self.edges_obs.shape[0]


def _onehot(z: np.ndarray, k: int) -> np.ndarray:
    h = np.zeros((z.size, k))
    h[np.arange(z.size), z] = 1.0
    return h


def _pair_counts(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``h.T @ w @ h`` with the diagonal halved (unordered pairs)."""
    c = h.T @ w @ h
    c[np.diag_indices_from(c)] /= 2.0
    return c


def block_counts(a, x, z, k: int) -> BlockCounts:
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    z = as_labels(z, k=k, n=a.shape[0])
    h = _onehot(z, k)
    xa = (a & x).astype(float)
    edges = _pair_counts(h, xa)
    pairs = _pair_counts(h, x.astype(float))
    sizes = h.sum(axis=0)
    total = np.outer(sizes, sizes)
    total[np.diag_indices(k)] = sizes * (sizes - 1) / 2.0
    as_int = lambda m: np.rint(m).astype(np.int64)
    return BlockCounts(as_int(edges), as_int(pairs), as_int(total))


def _loglik_from_counts(edges, pairs, q) -> np.ndarray:
    """Sum over ``a <= b`` of the Bernoulli log-likelihood.

    ``edges``/``pairs`` may carry leading batch axes.  Terms with a zero count
    contribute zero even where the matching log is infinite.
    """
    k = q.shape[-1]
    iu = np.triu_indices(k)
    e = edges[..., iu[0], iu[1]]
    non = pairs[..., iu[0], iu[1]] - e
    qu = q[..., iu[0], iu[1]]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_q = np.log(qu)
        log_1mq = np.log1p(-qu)
        t1 = np.where(e > 0, e * log_q, 0.0)
        t0 = np.where(non > 0, non * log_1mq, 0.0)
    return (t1 + t0).sum(axis=-1)


def log_likelihood_conditional(a, x, z, q) -> float:
    """Bernoulli log-likelihood of the observed entries given labels and ``q``.

    Returns ``-inf`` (with a :class:`DegenerateLikelihoodWarning`) when an
    entry of ``q`` equal to 0 or 1 contradicts an observation.
    """
    q = np.asarray(q, dtype=float)
    k = q.shape[0]
    if np.any(q < 0) or np.any(q > 1):
        raise ParameterError("q entries must lie in [0, 1]")
    counts = block_counts(a, x, z, k)
    value = float(_loglik_from_counts(counts.edges_obs, counts.pairs_obs, q))
    if value == -math.inf:
        warnings.warn(
            "block probability of 0 or 1 contradicts an observed entry",
            DegenerateLikelihoodWarning,
            stacklevel=2,
        )
    return value


def _profile_from_counts(edges, pairs, fallback: float) -> np.ndarray:
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(pairs > 0, edges / np.where(pairs > 0, pairs, 1), fallback)
    return q


def fallback_density(a, x) -> float:
    """Global observed edge density, or 0.5 when nothing is observed."""
    d = observed_density(a, x)
    return 0.5 if d is None else d


def profile_q(a, x, z, k: Optional[int] = None) -> np.ndarray:
    """Per-block observed edge frequency, the maximiser of the likelihood in ``q``.

    Block pairs without any observed pair get the global observed density.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    z = as_labels(z, n=a.shape[0])
    if k is None:
        k = int(z.max()) + 1
    counts = block_counts(a, x, z, k)
    return _profile_from_counts(
        counts.edges_obs.astype(float), counts.pairs_obs.astype(float), fallback_density(a, x)
    )


# ---------------------------------------------------------------------------
# enumeration


def _check_capacity(n: int, k: int) -> int:
    if k < 1:
        raise ParameterError("k must be at least 1")
    total = k**n
    if total > MAX_ENUMERATION:
        raise CapacityError(f"{k}^{n} = {total} label functions exceeds {MAX_ENUMERATION}")
    return total


def enumerate_labels(n: int, k: int, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """Label functions number ``start..stop-1`` in lexicographic order."""
    stop = k**n if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % k


def _enumerate_counts(a: np.ndarray, x: np.ndarray, k: int) -> Iterator[Tuple[np.ndarray, ...]]:
    """Yield ``(Z, edges, pairs)`` for consecutive chunks of all label functions."""
    n = a.shape[0]
    total = _check_capacity(n, k)
    xa = (a & x).astype(float)
    xf = x.astype(float)
    eye = np.eye(k)
    for start in range(0, total, _CHUNK):
        zs = enumerate_labels(n, k, start, min(start + _CHUNK, total))
        h = eye[zs]  # (m, n, k)
        edges = np.einsum("mia,mib->mab", h, xa @ h)
        pairs = np.einsum("mia,mib->mab", h, xf @ h)
        d = np.arange(k)
        edges[:, d, d] /= 2.0
        pairs[:, d, d] /= 2.0
        yield zs, edges, pairs


def brute_force_mle(a, x, k: int, bounds: Optional[Tuple[float, float]] = None):
    """Exact (restricted) maximum-likelihood labelling by exhaustive search.

    For every label function the block probabilities are the observed block
    frequencies clipped to ``bounds`` (or to ``[1e-9, 1 - 1e-9]`` when no
    bounds are given), which is the constrained maximiser for that labelling.
    Returns ``(z, q, value)``; among ties the lexicographically smallest ``z``
    wins.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    if bounds is None:
        lo, hi = PROB_FLOOR, 1.0 - PROB_FLOOR
    else:
        lo, hi = (float(b) for b in bounds)
        if not 0 < lo <= hi < 1:
            raise ParameterError("bounds must satisfy 0 < lower <= upper < 1")
    fallback = fallback_density(a, x)

    best_val = -math.inf
    best = None
    for zs, edges, pairs in _enumerate_counts(a, x, k):
        qs = np.clip(_profile_from_counts(edges, pairs, fallback), lo, hi)
        vals = _loglik_from_counts(edges, pairs, qs)
        i = int(np.argmax(vals))
        # strict improvement beyond rounding keeps the earliest maximiser
        if best is None or vals[i] > best_val + 1e-9 * (1.0 + abs(best_val)):
            # an earlier-ordered tie inside this chunk must still win
            tol = 1e-9 * (1.0 + abs(vals[i]))
            i = int(np.flatnonzero(vals >= vals[i] - tol)[0])
            best_val = float(vals[i])
            best = (zs[i].copy(), qs[i].copy())
    z, q = best
    return z, q, best_val


def log_marginal_likelihood(a, x, alpha, q) -> float:
    """Log of the SBM likelihood with labels summed out, by enumeration."""
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    alpha = np.asarray(alpha, dtype=float)
    q = np.asarray(q, dtype=float)
    k = alpha.size
    if q.shape != (k, k):
        raise ParameterError("alpha and q sizes disagree")
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha)
    parts = []
    for zs, edges, pairs in _enumerate_counts(a, x, k):
        prior = log_alpha[zs].sum(axis=1)
        parts.append(logsumexp(prior + _loglik_from_counts(edges, pairs, q)))
    return float(logsumexp(parts))


def log_complete_likelihood(a, x, z, alpha, q) -> float:
    """``sum_i log alpha[z_i]`` plus the conditional log-likelihood."""
    alpha = np.asarray(alpha, dtype=float)
    z = as_labels(z, k=alpha.size)
    with np.errstate(divide="ignore"):
        prior = float(np.log(alpha)[z].sum())
    return prior + log_likelihood_conditional(a, x, z, q)
