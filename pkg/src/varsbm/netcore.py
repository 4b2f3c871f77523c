"""Graph containers, SBM sampling and the missing-at-random observation mask.

Matrices are plain dense numpy arrays:

* adjacency ``A`` and mask ``X`` are symmetric ``uint8`` arrays with a zero
  diagonal,
* ``Theta`` matrices are symmetric ``float64`` arrays in ``[0, 1]`` with a zero
  diagonal,
* labels are ``int64`` vectors with values in ``0..k-1``.

Randomness goes through :class:`numpy.random.SeedSequence`.  A caller-supplied
seed is never consumed in place; sub-streams are derived with
:func:`child_seed`, so the same seed always reproduces the same draws.
``generate_sbm`` uses the sub-streams ``"labels"`` and ``"edges"`` of its seed,
``generate_mask`` draws from its own seed only.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConsistencyError, ParameterError, RangeError

Seed = Union[int, np.random.SeedSequence, None]

_STREAM_KEYS = {"labels": 0, "edges": 1, "mask": 2, "fit": 3}


def _stream_key(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    if key in _STREAM_KEYS:
        return _STREAM_KEYS[key]
    return zlib.crc32(str(key).encode("utf-8"))


def as_seed_sequence(seed: Seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if seed is None:
        return np.random.SeedSequence()
    return np.random.SeedSequence(int(seed))


def child_seed(seed: Seed, *keys) -> np.random.SeedSequence:
    """Derive a named sub-stream of ``seed`` without mutating it.

    Unlike :meth:`SeedSequence.spawn`, calling this twice with the same
    arguments gives the same child.
    """
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(
        entropy=ss.entropy,
        spawn_key=tuple(ss.spawn_key) + tuple(_stream_key(k) for k in keys),
        pool_size=ss.pool_size,
    )


def seed_to_int(seed: Seed) -> int:
    """A 31-bit integer for libraries that only take ``int`` seeds."""
    return int(as_seed_sequence(seed).generate_state(1, dtype=np.uint32)[0] >> 1)


# ---------------------------------------------------------------------------
# validation helpers


def as_adjacency(a, name: str = "adjacency") -> np.ndarray:
    """Check that ``a`` is a symmetric binary matrix with zero diagonal."""
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ParameterError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ParameterError(f"{name} entries must be 0 or 1")
    arr = arr.astype(np.uint8, copy=False)
    if not np.array_equal(arr, arr.T):
        raise ParameterError(f"{name} must be symmetric")
    if np.any(np.diagonal(arr)):
        raise ParameterError(f"{name} must have a zero diagonal")
    return arr


def as_mask(x, n: Optional[int] = None) -> np.ndarray:
    arr = as_adjacency(x, name="sampling mask")
    if n is not None and arr.shape[0] != n:
        raise ConsistencyError(f"mask has {arr.shape[0]} nodes, expected {n}")
    return arr


def as_labels(z, k: Optional[int] = None, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(z)
    if arr.ndim != 1:
        raise ParameterError("labels must be a vector")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise ParameterError("labels must be integers")
    arr = arr.astype(np.int64, copy=False)
    if n is not None and arr.size != n:
        raise ConsistencyError(f"got {arr.size} labels for {n} nodes")
    if arr.size and arr.min() < 0:
        raise ConsistencyError("labels must be non-negative")
    if k is not None and arr.size and arr.max() >= k:
        raise ConsistencyError(f"label {int(arr.max())} outside range 0..{k - 1}")
    return arr


def full_mask(n: int) -> np.ndarray:
    x = np.ones((n, n), dtype=np.uint8)
    np.fill_diagonal(x, 0)
    return x


def _symmetric_from_upper(upper: np.ndarray) -> np.ndarray:
    u = np.triu(upper, k=1)
    return u + u.T


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SbmParams:
    """Community proportions ``alpha`` and block connectivity ``q``.

    ``rho`` optionally scales ``q`` (sparse regime); ``bounds`` = (lower, upper)
    is only consulted by the restricted maximum-likelihood oracle.
    """

    alpha: np.ndarray
    q: np.ndarray
    rho: Optional[float] = None
    bounds: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0:
            raise ParameterError("alpha must be a non-empty vector")
        if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-12:
            raise ParameterError("alpha must be a probability vector")
        k = alpha.size
        if q.shape != (k, k):
            raise ParameterError(f"q must be {k}x{k}, got {q.shape}")
        if not np.allclose(q, q.T, rtol=0, atol=0):
            raise ParameterError("q must be symmetric")
        if np.any(q <= 0) or np.any(q >= 1):
            raise ParameterError("q entries must lie in (0, 1)")
        rho = self.rho
        if rho is not None:
            rho = float(rho)
            if not 0 < rho <= 1:
                raise ParameterError("rho must lie in (0, 1]")
            eff = rho * q
            if np.any(eff <= 0) or np.any(eff >= 1):
                raise RangeError("rho * q must stay in (0, 1)")
        bounds = self.bounds
        if bounds is not None:
            lo, hi = (float(b) for b in bounds)
            if not 0 < lo <= hi < 1:
                raise ParameterError("bounds must satisfy 0 < lower <= upper < 1")
            bounds = (lo, hi)
        alpha.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "bounds", bounds)

    @property
    def k(self) -> int:
        return self.alpha.size

    @property
    def connectivity(self) -> np.ndarray:
        """Effective block probabilities ``rho * q``."""
        return self.q if self.rho is None else self.rho * self.q


def scale_sparsity(q0, rho: float) -> np.ndarray:
    q = float(rho) * np.asarray(q0, dtype=float)
    if np.any(q <= 0) or np.any(q >= 1):
        raise RangeError(f"rho={rho} pushes block probabilities outside (0, 1)")
    return q


def theta_from(z, q) -> np.ndarray:
    """Expand block probabilities into the node-level matrix ``q[z_i, z_j]``."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ParameterError("q must be square")
    if not np.allclose(q, q.T, rtol=0, atol=1e-12):
        raise ParameterError("q must be symmetric")
    if np.any(q < 0) or np.any(q > 1):
        raise ParameterError("q entries must lie in [0, 1]")
    z = as_labels(z, k=q.shape[0])
    theta = q[np.ix_(z, z)]
    np.fill_diagonal(theta, 0.0)
    return theta


# ---------------------------------------------------------------------------
# sampling


def generate_sbm(params: SbmParams, n: int, seed: Seed = None):
    """Sample labels, adjacency and the generating matrix of an SBM.

    Returns ``(z, A, Theta)``.  Edges for ``i < j`` are independent
    Bernoulli(``Theta[i, j]``).
    """
    if not isinstance(params, SbmParams):
        raise ParameterError("params must be SbmParams")
    if n < 2:
        raise ParameterError("need at least 2 nodes")
    label_rng = np.random.default_rng(child_seed(seed, "labels"))
    edge_rng = np.random.default_rng(child_seed(seed, "edges"))
    z = label_rng.choice(params.k, size=n, p=params.alpha).astype(np.int64)
    theta = theta_from(z, params.connectivity)
    draws = edge_rng.random((n, n))
    a = _symmetric_from_upper((draws < theta).astype(np.uint8))
    return z, a, theta


def generate_mask(n: int, p: float, seed: Seed = None) -> np.ndarray:
    """Observe each unordered pair independently with probability ``p``."""
    if not 0 < p <= 1:
        raise ParameterError(f"sampling rate must lie in (0, 1], got {p}")
    if n < 1:
        raise ParameterError("need at least 1 node")
    rng = np.random.default_rng(as_seed_sequence(seed))
    draws = rng.random((n, n))
    return _symmetric_from_upper((draws < p).astype(np.uint8))


def observed_density(a, x) -> Optional[float]:
    """Fraction of observed pairs that are edges; ``None`` for an empty mask."""
    a = np.asarray(a)
    x = np.asarray(x)
    pairs = float(x.sum())
    if pairs == 0:
        return None
    return float((a * x).sum()) / pairs
