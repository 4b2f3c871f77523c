"""Command-line front end.

Exit status: 0 on success, 2 for bad configuration or arguments, 3 for
unreadable or malformed data, 4 when a numerical routine fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import graphio, harness
from .errors import (
    CapacityError,
    ConsistencyError,
    DataError,
    DegenerateEvaluationError,
    NumericalError,
    ParameterError,
)
from .evaluation import frobenius_error, misclassified, normalized_sparse_error, precision_recall
from .modelselect import select_k
from .netcore import SbmParams, child_seed, full_mask, generate_mask, generate_sbm
from .varem import EmConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("varsbm")


def parse_k_range(text: str) -> List[int]:
    """``"1..6"``, ``"2-5"`` or ``"2,3,5"``."""
    text = text.strip()
    try:
        for sep in ("..", "-"):
            if sep in text:
                lo, hi = (int(v) for v in text.split(sep))
                if lo > hi:
                    raise ParameterError(f"empty k range {text!r}")
                return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParameterError(f"cannot parse k range {text!r}") from None


def _load_yaml(path) -> dict:
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
    return data


def _em_config(args) -> EmConfig:
    settings = {}
    if getattr(args, "config", None):
        settings.update(_load_yaml(args.config).get("em") or {})
    for flag, key in (("restarts", "restarts"), ("max_iter", "max_iter"), ("tol", "tol"),
                      ("damping", "damping"), ("sweeps", "fixed_point_sweeps")):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    if args.seed is not None:
        settings["seed"] = args.seed
    try:
        return EmConfig(**settings)
    except TypeError as exc:
        raise ParameterError(str(exc)) from exc


def _add_em_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file whose 'em' section sets EM options")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--damping", type=float)
    p.add_argument("--sweeps", type=int, help="E-step sweeps per outer iteration")


def _read_graph(args):
    a = graphio.read_edge_list(args.graph, n=args.n)
    x = graphio.read_mask(args.mask, a.shape[0]) if args.mask else full_mask(a.shape[0])
    return a, x


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    if args.model not in harness.MODEL_PRESETS:
        raise ParameterError(f"unknown model {args.model!r}; choose from {sorted(harness.MODEL_PRESETS)}")
    alpha, q = harness.MODEL_PRESETS[args.model]
    params = SbmParams(alpha, q, rho=None if args.rho == 1.0 else args.rho)
    seed = np.random.SeedSequence(args.seed if args.seed is not None else 0)
    z, a, theta = generate_sbm(params, args.n, seed)
    x = generate_mask(args.n, args.p, child_seed(seed, "mask"))
    out = graphio.ensure_dir(args.out)
    graphio.write_edge_list(out / "graph.tsv", a)
    graphio.write_mask(out / "mask.tsv", x)
    graphio.write_labels_csv(out / "labels.csv", z)
    graphio.write_matrix_csv(out / "theta.csv", theta)
    print(out)
    return EXIT_OK


def cmd_fit(args) -> int:
    if (args.k is None) == (args.k_range is None):
        raise ParameterError("give exactly one of --k or --k-range")
    k_range = parse_k_range(args.k_range) if args.k_range else None
    meta = harness.fit_predict(args.graph, args.mask, args.out, k=args.k, k_range=k_range,
                               n=args.n, em=_em_config(args))
    print(json.dumps({"k_hat": meta["k_hat"], "elbo": meta["elbo_trace"][-1],
                      "converged": meta["converged"], "out": str(args.out)}))
    return EXIT_OK


def cmd_select_k(args) -> int:
    a, x = _read_graph(args)
    k_hat, scores = select_k(a, x, parse_k_range(args.k_range), _em_config(args))
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["k", "score", "converged"])
        for s in scores:
            writer.writerow([s.k, repr(s.score), int(s.converged)])
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"k_hat={k_hat}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    overrides = {}
    if args.preset:
        overrides["preset"] = args.preset
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.out:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.config:
        cfg = harness.load_config(args.config, overrides)
    elif args.preset:
        cfg = harness.config_from_dict(overrides)
    else:
        raise ParameterError("sweep needs --config or --preset")
    results, summary = harness.run_sweep(cfg, args.workers)
    print(results)
    print(summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    report = {}
    if args.theta is not None:
        theta = graphio.read_matrix_csv(args.theta)
        if args.truth is not None:
            truth = graphio.read_matrix_csv(args.truth)
            report["frobenius"] = frobenius_error(theta, truth)
            if args.rho is not None:
                report["normalized"] = normalized_sparse_error(theta, truth, args.rho)
        if args.test_graph is not None:
            n = theta.shape[0]
            a_test = graphio.read_edge_list(args.test_graph, n=n)
            x_eval = graphio.read_mask(args.eval_mask, n) if args.eval_mask else full_mask(n)
            curve = precision_recall(theta, a_test, x_eval)
            report["average_precision"] = curve.average_precision()
            if args.pr_out:
                with open(args.pr_out, "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["threshold", "precision", "recall"])
                    for row in curve.points:
                        writer.writerow([repr(float(v)) for v in row])
    if args.labels is not None:
        if args.true_labels is None:
            raise ParameterError("--labels needs --true-labels")
        report["misclassified"] = misclassified(
            graphio.read_labels_csv(args.labels), graphio.read_labels_csv(args.true_labels))
    if not report:
        raise ParameterError("nothing to evaluate: give --theta with --truth/--test-graph, or --labels")
    print(json.dumps(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varsbm", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate an SBM graph and mask")
    p.add_argument("--model", default="assortative", help="model preset name")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, default=1.0, help="sampling rate")
    p.add_argument("--rho", type=float, default=1.0, help="sparsity factor")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    for name in ("fit", "predict"):
        p = sub.add_parser(name, help="fit the variational estimator to a graph file")
        p.add_argument("graph")
        p.add_argument("--mask", help="observed pairs, or '*' for all")
        p.add_argument("--n", type=int, help="node count (default: largest id)")
        p.add_argument("--k", type=int)
        p.add_argument("--k-range", dest="k_range", help="e.g. 1..6; chooses k by ICL")
        p.add_argument("--out", required=True)
        _add_em_flags(p)
        p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-k", help="ICL score table over a range of k")
    p.add_argument("graph")
    p.add_argument("--mask")
    p.add_argument("--n", type=int)
    p.add_argument("--k-range", dest="k_range", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_em_flags(p)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("sweep", help="Monte-Carlo simulation sweep")
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--preset", help="|".join(harness.PROTOCOL_PRESETS))
    p.add_argument("--seeds", type=int, help="replicates per cell")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, help=f"default: ${harness.WORKERS_ENV} or 1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score estimates against references")
    p.add_argument("--theta", help="estimated probability matrix CSV")
    p.add_argument("--truth", help="reference probability matrix CSV")
    p.add_argument("--rho", type=float, help="also report the error divided by rho^2")
    p.add_argument("--test-graph", dest="test_graph", help="edge list for precision/recall")
    p.add_argument("--eval-mask", dest="eval_mask", help="pairs to score (default all)")
    p.add_argument("--pr-out", dest="pr_out", help="write the precision/recall curve here")
    p.add_argument("--labels")
    p.add_argument("--true-labels", dest="true_labels")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ParameterError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConsistencyError, DegenerateEvaluationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
