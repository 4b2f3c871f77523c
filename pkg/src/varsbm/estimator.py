"""Connection-probability estimators built from labels or raw observations."""

from __future__ import annotations

import warnings

import numpy as np

from .likelihood import clamp_probs, fallback_density, profile_q
from .netcore import as_adjacency, as_labels, as_mask, observed_density, theta_from


def extract_labels(tau) -> np.ndarray:
    """Row-wise argmax of ``tau``; ties go to the smallest community index."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 2:
        raise ValueError("tau must be an n x k matrix")
    return np.argmax(tau, axis=1).astype(np.int64)


def _plug_in(a, x, z, k):
    q = clamp_probs(profile_q(a, x, z, k))
    return q, theta_from(z, q)


def var_theta(a, x, tau):
    """Hard labels from ``tau`` and the observed block means they induce.

    Returns ``(z, q, theta)``.  Block probabilities are clipped to
    ``[1e-9, 1 - 1e-9]``.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    tau = np.asarray(tau, dtype=float)
    z = extract_labels(tau)
    q, theta = _plug_in(a, x, z, tau.shape[1])
    return z, q, theta


def oracle_theta(a, x, z_true, k=None) -> np.ndarray:
    """Observed block means computed with the true labels."""
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    z = as_labels(z_true, k=k, n=a.shape[0])
    k = int(z.max()) + 1 if k is None else k
    return _plug_in(a, x, z, k)[1]


def trivial_theta(a, x) -> np.ndarray:
    """Every off-diagonal entry equal to the observed edge density.

    Under full observation this is the mean degree divided by ``n - 1``.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    if observed_density(a, x) is None:
        warnings.warn("empty sampling mask: trivial estimate set to 0.5", RuntimeWarning, stacklevel=2)
    theta = np.full(a.shape, fallback_density(a, x))
    np.fill_diagonal(theta, 0.0)
    return theta


def naive_persistent_theta(a, x) -> np.ndarray:
    """Observed entries copied from ``a``; unobserved ones set to mean degree / n."""
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    n = a.shape[0]
    mean_degree = float((a & x).sum()) / n
    theta = np.where(x == 1, a, mean_degree / n).astype(float)
    np.fill_diagonal(theta, 0.0)
    return theta
