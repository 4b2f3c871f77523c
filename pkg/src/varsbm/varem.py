"""Mean-field variational EM for the SBM with missing entries.

The posterior over labels is approximated by independent per-node
categoricals ``tau[i]``.  The E-step is coordinate ascent: nodes are updated
one at a time in index order, each row set to its exact maximiser given the
current values of all other rows.  The M-step is closed form.  Both steps
can only increase the ELBO, which is what ``FitResult.elbo_trace`` records.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numba
import numpy as np
from scipy.special import xlogy
from sklearn.cluster import KMeans

from .errors import NumericalError, ParameterError
from .likelihood import clamp_probs, fallback_density
from .netcore import Seed, as_adjacency, as_mask, child_seed, seed_to_int

log = logging.getLogger(__name__)

# Each floored entry costs about floor * (logit gap) of ELBO, so keep it tiny.
TAU_FLOOR = 1e-15
INIT_OFF_MASS = 0.05
RESTART_NOISE = 0.5


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 100
    tol: float = 1e-6
    restarts: int = 5
    damping: float = 0.0
    seed: Seed = 0
    fixed_point_sweeps: int = 3

    def __post_init__(self):
        if self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ParameterError("tol must be > 0")
        if self.restarts < 1:
            raise ParameterError("restarts must be >= 1")
        if not 0 <= self.damping < 1:
            raise ParameterError("damping must lie in [0, 1)")
        if self.fixed_point_sweeps < 1:
            raise ParameterError("fixed_point_sweeps must be >= 1")


@dataclass(frozen=True)
class FitResult:
    tau: np.ndarray
    alpha: np.ndarray
    q: np.ndarray
    elbo_trace: Tuple[float, ...]
    iterations: int
    converged: bool
    restart_index: int

    @property
    def k(self) -> int:
        return self.tau.shape[1]

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.tau, axis=1)


def _prepare(a, x) -> Tuple[np.ndarray, np.ndarray]:
    """Observed-edge and observed-non-edge indicator matrices as floats."""
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    xa = (a & x).astype(float)
    xn = x.astype(float) - xa
    return xa, xn


def _check_tau(tau, n: Optional[int] = None) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 2 or (n is not None and tau.shape[0] != n):
        raise ParameterError("tau must be an n x k matrix")
    if np.any(tau < 0) or not np.allclose(tau.sum(axis=1), 1.0, atol=1e-8):
        raise ParameterError("rows of tau must be probability vectors")
    return tau


def _elbo(xa, xn, tau, alpha, q) -> float:
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
        log_1mq = np.log1p(-q)
    entropy_part = float(np.sum(xlogy(tau, alpha) - xlogy(tau, tau)))
    s1 = xa @ tau
    s0 = xn @ tau
    # each unordered pair appears twice in the full double sum
    pair_part = 0.5 * float(np.sum(tau * (s1 @ log_q.T + s0 @ log_1mq.T)))
    return entropy_part + pair_part


def elbo(a, x, tau, alpha, q) -> float:
    """Mean-field evidence lower bound.

    ``sum_i sum_a tau_ia log(alpha_a / tau_ia)`` plus the expected
    conditional log-likelihood of the observed pairs under ``tau``.
    """
    xa, xn = _prepare(a, x)
    tau = _check_tau(tau, xa.shape[0])
    return _elbo(xa, xn, tau, np.asarray(alpha, float), np.asarray(q, float))


@numba.njit(cache=True)
def _sweeps(xa, xn, tau, log_alpha, log_q, log_1mq, sweeps, damping, floor):
    n, k = tau.shape
    s1 = xa @ tau
    s0 = xn @ tau
    logits = np.empty(k)
    new = np.empty(k)
    delta = np.empty(k)
    for _ in range(sweeps):
        for i in range(n):
            top = -np.inf
            for a in range(k):
                v = log_alpha[a]
                for b in range(k):
                    v += log_q[a, b] * s1[i, b] + log_1mq[a, b] * s0[i, b]
                logits[a] = v
                if v > top:
                    top = v
            total = 0.0
            for a in range(k):
                new[a] = math.exp(logits[a] - top)
                total += new[a]
            for a in range(k):
                new[a] = (1.0 - damping) * new[a] / total + damping * tau[i, a]
            # floor small entries, paying for them from the largest one
            arg = 0
            added = 0.0
            for a in range(k):
                if new[a] > new[arg]:
                    arg = a
            for a in range(k):
                if new[a] < floor:
                    added += floor - new[a]
                    new[a] = floor
            new[arg] -= added
            changed = False
            for a in range(k):
                delta[a] = new[a] - tau[i, a]
                if delta[a] != 0.0:
                    changed = True
                tau[i, a] = new[a]
            if changed:
                for j in range(n):
                    wa = xa[j, i]
                    wn = xn[j, i]
                    if wa != 0.0:
                        for a in range(k):
                            s1[j, a] += wa * delta[a]
                    elif wn != 0.0:
                        for a in range(k):
                            s0[j, a] += wn * delta[a]
    return tau


def _e_step(xa, xn, tau, alpha, q, sweeps, damping):
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha)
        log_q = np.log(q)
        log_1mq = np.log1p(-q)
    return _sweeps(
        xa, xn, np.array(tau, dtype=float), log_alpha, log_q, log_1mq,
        int(sweeps), float(damping), TAU_FLOOR,
    )


def e_step(a, x, tau, alpha, q, sweeps: int = 1, damping: float = 0.0) -> np.ndarray:
    """Fixed-point update of the variational posterior, returned as a new array.

    Row ``i`` becomes proportional to ``alpha_a`` times the geometric mean,
    weighted by the other rows of ``tau``, of the Bernoulli likelihoods of
    node ``i``'s observed pairs.  Rows are refreshed in place one after the
    other, so later nodes see the updates of earlier ones.
    """
    if sweeps < 1:
        raise ParameterError("sweeps must be >= 1")
    if not 0 <= damping < 1:
        raise ParameterError("damping must lie in [0, 1)")
    xa, xn = _prepare(a, x)
    tau = _check_tau(tau, xa.shape[0])
    return _e_step(xa, xn, tau, np.asarray(alpha, float), np.asarray(q, float), sweeps, damping)


def _m_step(xa, xn, tau, fallback):
    n = tau.shape[0]
    alpha = tau.sum(axis=0) / n
    num = tau.T @ xa @ tau
    den = num + tau.T @ xn @ tau
    num = 0.5 * (num + num.T)
    den = 0.5 * (den + den.T)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(den > 0, num / np.where(den > 0, den, 1.0), fallback)
    return alpha, clamp_probs(q)


def m_step(a, x, tau):
    """Closed-form ``(alpha, q)`` maximising the ELBO for fixed ``tau``."""
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    xa, xn = _prepare(a, x)
    tau = _check_tau(tau, a.shape[0])
    return _m_step(xa, xn, tau, fallback_density(a, x))


def hard_to_soft(labels, k: int) -> np.ndarray:
    off = min(INIT_OFF_MASS, 1.0 / (2 * k))
    tau = np.full((labels.size, k), off)
    tau[np.arange(labels.size), labels] = 1.0 - (k - 1) * off
    return tau


def init_tau(a, x, k: int, seed: Seed = None) -> np.ndarray:
    """Spectral clustering start.

    Unobserved entries are imputed with the observed edge density.  The ``k``
    eigenvectors with largest absolute eigenvalue, each scaled by that
    absolute eigenvalue, embed the nodes; k-means clusters the embedding and
    each hard cluster becomes a soft row with most of its mass on the
    assigned community.
    """
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    n = a.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    if k == 1:
        return np.ones((n, 1))
    filled = np.where(x == 1, a, fallback_density(a, x)).astype(float)
    np.fill_diagonal(filled, 0.0)
    w, v = np.linalg.eigh(filled)
    order = np.argsort(-np.abs(w), kind="stable")[:k]
    # unscaled vectors let noise directions swamp a weak leading one
    embedding = v[:, order] * np.abs(w[order])
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, max_iter=100,
                random_state=seed_to_int(seed))
    with warnings.catch_warnings():
        # duplicate rows (tiny or very regular graphs) trigger ConvergenceWarning
        warnings.simplefilter("ignore")
        labels = km.fit_predict(embedding)
    return hard_to_soft(labels, k)


def perturb_tau(tau, rng: np.random.Generator) -> np.ndarray:
    t = tau * np.exp(RESTART_NOISE * rng.standard_normal(tau.shape))
    return t / t.sum(axis=1, keepdims=True)


def _run_em(xa, xn, tau, fallback, cfg: EmConfig, restart: int) -> FitResult:
    alpha, q = _m_step(xa, xn, tau, fallback)
    current = _elbo(xa, xn, tau, alpha, q)
    if not math.isfinite(current):
        raise NumericalError(f"restart {restart}: non-finite initial ELBO")
    trace = [current]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        tau = _e_step(xa, xn, tau, alpha, q, cfg.fixed_point_sweeps, cfg.damping)
        alpha, q = _m_step(xa, xn, tau, fallback)
        new = _elbo(xa, xn, tau, alpha, q)
        if not math.isfinite(new):
            raise NumericalError(f"restart {restart}: non-finite ELBO at iteration {it}")
        trace.append(new)
        change = abs(new - current) / (1.0 + abs(current))
        current = new
        if change < cfg.tol:
            converged = True
            break
    return FitResult(tau, alpha, q, tuple(trace), it, converged, restart)


def fit_varem(a, x, k: int, cfg: Optional[EmConfig] = None) -> FitResult:
    """Run variational EM from a spectral start plus perturbed restarts.

    Restart 0 starts from :func:`init_tau`; the others multiply it by
    log-normal noise.  The restart with the largest final ELBO is returned
    (earliest on ties).  A restart whose ELBO turns non-finite is dropped;
    :class:`NumericalError` is raised only if every restart fails.
    """
    cfg = cfg or EmConfig()
    a = as_adjacency(a)
    x = as_mask(x, a.shape[0])
    n = a.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    xa, xn = _prepare(a, x)
    fallback = fallback_density(a, x)
    tau0 = init_tau(a, x, k, child_seed(cfg.seed, "init"))
    rng = np.random.default_rng(child_seed(cfg.seed, "restart"))

    best = None
    failures = []
    for r in range(cfg.restarts):
        # draw even for restart 0 so restart r always sees the same noise
        noise_tau = perturb_tau(tau0, rng)
        start = tau0 if r == 0 else noise_tau
        try:
            res = _run_em(xa, xn, start.copy(), fallback, cfg, r)
        except NumericalError as exc:
            log.warning("discarding %s", exc)
            failures.append(str(exc))
            continue
        if best is None or res.elbo > best.elbo:
            best = res
    if best is None:
        raise NumericalError("all restarts failed: " + "; ".join(failures))
    return best
