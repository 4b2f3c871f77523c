"""Low-rank matrix completion baseline (soft-impute with rank truncation).

The working matrix is symmetric throughout, so its singular triplets come
from an eigendecomposition: singular values are absolute eigenvalues and the
right vectors carry the eigenvalue sign.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from .errors import NumericalError, ParameterError
from .netcore import as_mask

_DENSE_BELOW = 64


@dataclass(frozen=True)
class SvtConfig:
    rank: int
    lam: float = 0.0
    max_iter: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.rank < 1:
            raise ParameterError("rank must be >= 1")
        if self.lam < 0:
            raise ParameterError("lam must be >= 0")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ParameterError("tol must be > 0")


@dataclass(frozen=True)
class SvtResult:
    matrix: np.ndarray
    objective_trace: Tuple[float, ...]
    iterations: int
    converged: bool


def _top_eigen(w: np.ndarray, r: int, v0: Optional[np.ndarray]):
    n = w.shape[0]
    try:
        if r >= n - 1 or n < _DENSE_BELOW:
            vals, vecs = np.linalg.eigh(w)
        else:
            vals, vecs = eigsh(w, k=r, which="LM", v0=v0)
    except (np.linalg.LinAlgError, ArpackError, ArpackNoConvergence) as exc:
        raise NumericalError(f"eigendecomposition failed (n={n}, rank={r}): {exc}") from exc
    order = np.argsort(-np.abs(vals), kind="stable")[:r]
    return vals[order], vecs[:, order]


def objective(z, a, x, lam: float) -> float:
    """Half the observed squared error plus ``lam`` times the nuclear norm."""
    resid = x * (a - z)
    value = 0.5 * float(np.sum(resid * resid))
    if lam > 0:
        value += lam * float(np.sum(np.abs(np.linalg.eigvalsh(z))))
    return value


def complete_low_rank(a, x, cfg: SvtConfig) -> SvtResult:
    """Iterative fill-in/truncated-SVD completion of a symmetric matrix.

    ``a`` may be any real symmetric matrix; only entries with ``x == 1`` are
    read.  No clipping or symmetrisation is applied to the result.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.allclose(a, a.T):
        raise ParameterError("input must be a symmetric square matrix")
    xm = as_mask(x, a.shape[0]).astype(float)
    n = a.shape[0]
    r = min(cfg.rank, n)
    observed = xm.sum()
    mean = float(np.sum(xm * a) / observed) if observed > 0 else 0.0
    z = np.full((n, n), mean)
    observed_part = xm * a
    trace = [objective(z, a, xm, cfg.lam)]
    v0 = np.ones(n) / np.sqrt(n)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        w = observed_part + (1.0 - xm) * z
        vals, vecs = _top_eigen(w, r, v0)
        shrunk = np.sign(vals) * np.maximum(np.abs(vals) - cfg.lam, 0.0)
        z_new = (vecs * shrunk) @ vecs.T
        if not np.all(np.isfinite(z_new)):
            raise NumericalError(f"non-finite iterate at step {it}")
        v0 = vecs[:, 0]
        change = np.sqrt(np.sum((z_new - z) ** 2) / max(np.sum(z * z), 1e-24))
        z = z_new
        trace.append(objective(z, a, xm, cfg.lam))
        if change < cfg.tol:
            converged = True
            break
    return SvtResult(z, tuple(trace), it, converged)


def soft_impute(a, x, cfg: SvtConfig) -> np.ndarray:
    """Low-rank completion turned into a probability matrix.

    The completed matrix is symmetrised, clipped to ``[0, 1]`` and given a
    zero diagonal.
    """
    m = complete_low_rank(a, x, cfg).matrix
    theta = np.clip(0.5 * (m + m.T), 0.0, 1.0)
    np.fill_diagonal(theta, 0.0)
    return theta
