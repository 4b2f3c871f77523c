"""Monte-Carlo sweeps over simulated SBMs and the fit/predict workflow.

Seeding: every replicate draws from
``SeedSequence(master_seed, spawn_key=(rep, n, p_key, rho_key))`` where the
float keys are ``round(value * 1e6)``.  From that replicate seed the graph uses
its own ``labels``/``edges`` sub-streams, the mask the ``mask`` sub-stream and
the EM fit the ``fit`` sub-stream.  A cell therefore produces the same numbers
whatever other cells are in the sweep and in whatever order workers finish.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import graphio
from .errors import NumericalError, ParameterError
from .estimator import naive_persistent_theta, oracle_theta, trivial_theta, var_theta
from .evaluation import frobenius_error, misclassified, normalized_sparse_error
from .modelselect import select_k
from .netcore import SbmParams, child_seed, full_mask, generate_mask, generate_sbm
from .svt import SvtConfig, soft_impute
from .varem import EmConfig, fit_varem

log = logging.getLogger(__name__)

WORKERS_ENV = "VARSBM_WORKERS"

Q_ASSORTATIVE = np.array([[0.5, 0.2, 0.2], [0.2, 0.5, 0.2], [0.2, 0.2, 0.5]])
Q_DISASSORTATIVE = np.array([[0.2, 0.5, 0.5], [0.5, 0.2, 0.5], [0.5, 0.5, 0.2]])
Q_MIXED = np.array([[0.1, 0.5, 0.3], [0.5, 0.2, 0.4], [0.3, 0.4, 0.6]])
BALANCED3 = np.full(3, 1.0 / 3.0)

MODEL_PRESETS: Dict[str, Tuple[np.ndarray, np.ndarray]] = {
    "assortative": (BALANCED3, Q_ASSORTATIVE),
    "disassortative": (BALANCED3, Q_DISASSORTATIVE),
    "mixed": (np.array([0.1, 0.3, 0.6]), Q_MIXED),
}

_DENSE_N = [100, 200, 300, 400, 500]

PROTOCOL_PRESETS: Dict[str, dict] = {
    "dense-assortative": dict(protocol="dense", model="assortative", n=_DENSE_N, p=[0.5], rho=[1.0]),
    "dense-disassortative": dict(protocol="dense", model="disassortative", n=_DENSE_N, p=[0.5], rho=[1.0]),
    "dense-mixed": dict(protocol="dense", model="mixed", n=_DENSE_N, p=[0.5], rho=[1.0]),
    "sparse-sweep": dict(
        protocol="sparse", model="assortative", n=[500], p=[0.5],
        rho=[0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
    ),
    "missing-sweep": dict(
        protocol="missing", model="assortative", n=[500], p=[0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0],
        rho=[1.0],
    ),
}

PROTOCOLS = ("dense", "sparse", "missing", "custom")
ESTIMATORS = ("var", "oracle", "trivial", "naive", "svt")
DEFAULT_SEEDS = 20


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    alpha: np.ndarray
    q: np.ndarray
    n: Tuple[int, ...]
    p: Tuple[float, ...] = (0.5,)
    rho: Tuple[float, ...] = (1.0,)
    k: Optional[int] = None
    seeds: int = DEFAULT_SEEDS
    estimators: Tuple[str, ...] = ESTIMATORS
    em: EmConfig = field(default_factory=EmConfig)
    svt: Optional[SvtConfig] = None
    output: Optional[str] = None
    master_seed: int = 0
    model_name: str = "custom"

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ParameterError(f"unknown protocol {self.protocol!r}")
        SbmParams(self.alpha, self.q)
        for name in ("n", "p", "rho"):
            if not getattr(self, name):
                raise ParameterError(f"{name} list must not be empty")
        if any(int(v) < 2 for v in self.n):
            raise ParameterError("node counts must be >= 2")
        if any(not 0 < v <= 1 for v in self.p):
            raise ParameterError("sampling rates must lie in (0, 1]")
        if any(not 0 < v <= 1 for v in self.rho):
            raise ParameterError("rho values must lie in (0, 1]")
        if self.seeds < 1:
            raise ParameterError("seeds must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown or not self.estimators:
            raise ParameterError(f"unknown estimators {sorted(unknown)}")
        if self.k is not None and self.k < 1:
            raise ParameterError("k must be >= 1")

    @property
    def n_communities(self) -> int:
        return self.k if self.k is not None else len(self.alpha)

    @property
    def svt_config(self) -> SvtConfig:
        return self.svt or SvtConfig(rank=self.n_communities)

    def cells(self) -> List[Tuple[int, float, float]]:
        return [(int(n), float(p), float(r)) for n in self.n for p in self.p for r in self.rho]


def _resolve_model(model) -> Tuple[np.ndarray, np.ndarray, str]:
    if isinstance(model, str):
        if model not in MODEL_PRESETS:
            raise ParameterError(f"unknown model preset {model!r}; choose from {sorted(MODEL_PRESETS)}")
        alpha, q = MODEL_PRESETS[model]
        return alpha, q, model
    if isinstance(model, dict) and {"alpha", "q"} <= set(model):
        return np.asarray(model["alpha"], float), np.asarray(model["q"], float), "custom"
    raise ParameterError("model must be a preset name or a mapping with 'alpha' and 'q'")


def _as_tuple(value, cast):
    if isinstance(value, (list, tuple)):
        return tuple(cast(v) for v in value)
    return (cast(value),)


def config_from_dict(data: dict, base: Optional[dict] = None) -> ExperimentConfig:
    """Build a config from a parsed YAML mapping, optionally over a preset."""
    merged = dict(base or {})
    merged.update(data or {})
    if "preset" in merged:
        name = merged.pop("preset")
        if name not in PROTOCOL_PRESETS:
            raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PROTOCOL_PRESETS)}")
        merged = {**PROTOCOL_PRESETS[name], **merged}
    known = {f.name for f in fields(ExperimentConfig)} | {"model"}
    extra = set(merged) - known
    if extra:
        raise ParameterError(f"unknown config keys {sorted(extra)}")
    if "model" not in merged:
        raise ParameterError("config needs a 'model'")
    alpha, q, name = _resolve_model(merged.pop("model"))
    try:
        em = EmConfig(**(merged.pop("em", None) or {}))
        svt_raw = merged.pop("svt", None)
        svt = SvtConfig(**svt_raw) if svt_raw else None
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc
    kwargs = dict(merged)
    for key, cast in (("n", int), ("p", float), ("rho", float)):
        if key in kwargs:
            kwargs[key] = _as_tuple(kwargs[key], cast)
    if "estimators" in kwargs:
        kwargs["estimators"] = _as_tuple(kwargs["estimators"], str)
    kwargs.setdefault("protocol", "custom")
    kwargs.setdefault("n", (100,))
    return ExperimentConfig(alpha=alpha, q=q, em=em, svt=svt, model_name=name, **kwargs)


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    import yaml

    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ParameterError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParameterError("config file must hold a mapping")
    data.update(overrides or {})
    return config_from_dict(data)


def replicate_seed(master_seed: int, rep: int, n: int, p: float, rho: float) -> np.random.SeedSequence:
    key = (int(rep), int(n), int(round(p * 1e6)), int(round(rho * 1e6)))
    return np.random.SeedSequence(int(master_seed), spawn_key=key)


def _estimate(cfg: ExperimentConfig, name: str, a, x, z_true, seed):
    """Return ``(theta, extra_metrics)`` for one estimator."""
    k = cfg.n_communities
    if name == "var":
        em = replace(cfg.em, seed=child_seed(seed, "fit"))
        fit = fit_varem(a, x, k, em)
        z_hat, _, theta = var_theta(a, x, fit.tau)
        return theta, {"misclassified": float(misclassified(z_hat, z_true))}
    if name == "oracle":
        return oracle_theta(a, x, z_true, k=len(cfg.alpha)), {}
    if name == "trivial":
        return trivial_theta(a, x), {}
    if name == "naive":
        return naive_persistent_theta(a, x), {}
    if name == "svt":
        return soft_impute(a, x, cfg.svt_config), {}
    raise ParameterError(f"unknown estimator {name!r}")


def simulate(cfg: ExperimentConfig, n: int, p: float, rho: float, rep: int):
    """The replicate's ``(z, A, X, Theta*, seed)``."""
    seed = replicate_seed(cfg.master_seed, rep, n, p, rho)
    params = SbmParams(cfg.alpha, cfg.q, rho=None if rho == 1.0 else rho)
    z, a, theta_star = generate_sbm(params, n, seed)
    x = generate_mask(n, p, child_seed(seed, "mask"))
    return z, a, x, theta_star, seed


def run_replicate(cfg: ExperimentConfig, n: int, p: float, rho: float, rep: int) -> List[dict]:
    """Simulate one graph and return its long-format metric rows."""
    z, a, x, theta_star, seed = simulate(cfg, n, p, rho, rep)
    rows = []
    base = {"n": n, "p": p, "rho": rho, "seed": rep}
    for name in cfg.estimators:
        try:
            theta, extras = _estimate(cfg, name, a, x, z, seed)
        except NumericalError as exc:
            log.warning("n=%d p=%g rho=%g seed=%d: %s failed: %s", n, p, rho, rep, name, exc)
            continue
        metrics = {"frobenius": frobenius_error(theta, theta_star)}
        if cfg.protocol == "sparse":
            metrics["normalized"] = normalized_sparse_error(theta, theta_star, rho)
        metrics.update(extras)
        for metric, value in metrics.items():
            rows.append({**base, "estimator": name, "metric": metric, "value": value})
    return rows


def _replicate_job(args):
    cfg, n, p, rho, rep = args
    return run_replicate(cfg, n, p, rho, rep)


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"{WORKERS_ENV} must be an integer, got {raw!r}")


def collect_rows(cfg: ExperimentConfig, workers: Optional[int] = None) -> List[dict]:
    jobs = [(cfg, n, p, rho, rep) for (n, p, rho) in cfg.cells() for rep in range(cfg.seeds)]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        chunks = [_replicate_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves submission order
            chunks = list(pool.map(_replicate_job, jobs))
    return [row for chunk in chunks for row in chunk]


def summarize(rows: Sequence[dict]) -> List[dict]:
    """Median and quartiles per (cell, estimator, metric), in first-seen order."""
    groups: Dict[tuple, List[float]] = {}
    for row in rows:
        key = (row["n"], row["p"], row["rho"], row["estimator"], row["metric"])
        groups.setdefault(key, []).append(row["value"])
    out = []
    for (n, p, rho, est, metric), values in groups.items():
        v = np.asarray(values, dtype=float)
        out.append({
            "n": n, "p": p, "rho": rho, "estimator": est, "metric": metric,
            "median": float(np.median(v)),
            "q25": float(np.quantile(v, 0.25)),
            "q75": float(np.quantile(v, 0.75)),
            "count": int(v.size),
        })
    return out


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


RESULT_COLUMNS = ("n", "p", "rho", "seed", "estimator", "metric", "value")
SUMMARY_COLUMNS = ("n", "p", "rho", "estimator", "metric", "median", "q25", "q75", "count")


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None) -> Tuple[Path, Path]:
    """Run every (cell, seed) replicate and write ``results.csv`` and ``summary.csv``."""
    if cfg.output is None:
        raise ParameterError("sweep needs an output directory")
    out = graphio.ensure_dir(cfg.output)
    rows = collect_rows(cfg, workers)
    results = out / "results.csv"
    summary = out / "summary.csv"
    write_csv(results, rows, RESULT_COLUMNS)
    write_csv(summary, summarize(rows), SUMMARY_COLUMNS)
    return results, summary


# ---------------------------------------------------------------------------
# fitting user graphs


def fit_predict(graph_path, mask_path, out_dir, k: Optional[int] = None,
                k_range: Optional[Sequence[int]] = None, n: Optional[int] = None,
                em: Optional[EmConfig] = None) -> dict:
    """Fit the variational estimator to a graph file and write its outputs.

    Writes ``theta.csv``, ``labels.csv`` (1-based communities) and
    ``metadata.json`` into ``out_dir`` and returns the metadata.
    """
    if (k is None) == (k_range is None):
        raise ParameterError("give exactly one of k or k_range")
    em = em or EmConfig()
    a = graphio.read_edge_list(graph_path, n=n)
    n = a.shape[0]
    x = graphio.read_mask(mask_path, n) if mask_path is not None else full_mask(n)
    out = graphio.ensure_dir(out_dir)
    meta = {"n": n, "observed_pairs": int(x.sum() // 2), "seed": _seed_repr(em.seed)}
    if k_range is not None:
        k_hat, scores = select_k(a, x, list(k_range), em)
        fit = next(s.fit for s in scores if s.k == k_hat)
        meta["icl"] = [{"k": s.k, "score": s.score, "converged": s.converged} for s in scores]
    else:
        if not 1 <= k <= n:
            raise ParameterError(f"need 1 <= k <= n, got k={k}")
        k_hat = k
        fit = fit_varem(a, x, k, em)
    z, q, theta = var_theta(a, x, fit.tau)
    graphio.write_matrix_csv(out / "theta.csv", theta)
    graphio.write_labels_csv(out / "labels.csv", z)
    meta.update({
        "k_hat": int(k_hat),
        "alpha": fit.alpha.tolist(),
        "q_ml_var": q.tolist(),
        "q_var": fit.q.tolist(),
        "elbo_trace": list(fit.elbo_trace),
        "iterations": fit.iterations,
        "converged": fit.converged,
        "restart_index": fit.restart_index,
    })
    with open(out / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    return meta


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed
