"""``rebalance`` command line.

Exit status: 0 on success, 1 on invalid input or configuration, 2 on any
other failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import RebalanceError, Schema, SeedSpec, ValidationError, read_csv, write_csv
from .density import parse_target
from .diagnostics import imbalance_report
from .experiment import (
    DEFAULT_GENERATORS,
    ExperimentSpec,
    draw_samples,
    run_replicates,
    synthesize_population,
)
from .generators import GeneratorSpec
from .models import fit_model, predict, rmse
from .pipeline import PipelineSpec, run_dawr, run_wr, wr_weights

log = logging.getLogger("rebalance")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: top level must be an object")
    return cfg


def _schema(text):
    if not text:
        return None
    p = Path(text)
    raw = p.read_text(encoding="utf-8") if p.is_file() else text
    try:
        return Schema.from_json(raw)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid schema JSON: {exc}") from None


def _seed(args, cfg) -> SeedSpec:
    value = args.seed if args.seed is not None else cfg.get("seed", 0)
    return SeedSpec(int(value))


def _target(args, cfg):
    text = args.target or cfg.get("samples", {}).get("target")
    if text is None:
        cov = cfg.get("population", {}).get("covariate")
        text = cov if cov is not None else "beta:5,5"
    return parse_target(text)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def cmd_simulate(args, cfg):
    spec = ExperimentSpec.from_config(cfg)
    if args.n is not None or args.population_size is not None:
        import dataclasses

        spec = dataclasses.replace(
            spec,
            n=args.n if args.n is not None else spec.n,
            n_population=args.population_size if args.population_size is not None else spec.n_population,
        )
    seed = _seed(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    population = synthesize_population(spec, seed.child(0))
    samples = draw_samples(spec, population, seed)
    for name in ("population", "test", "balanced", "imbalanced"):
        write_csv(getattr(samples, name), out / f"{name}.csv")
    log.info("wrote population and samples to %s", out)


def cmd_weights(args, cfg):
    sample = read_csv(args.data, _schema(args.schema))
    target = _target(args, cfg)
    pipe = cfg.get("pipeline", {})
    w = wr_weights(sample, target, args.bandwidth or pipe.get("bandwidth", "silverman"),
                   args.e_n if args.e_n is not None else pipe.get("e_n", "default"))
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_index", "omega", "q"])
        for i, (o, q) in enumerate(zip(w.omega, w.q)):
            writer.writerow([i, repr(float(o)), repr(float(q))])


def cmd_resample(args, cfg):
    sample = read_csv(args.data, _schema(args.schema))
    target = _target(args, cfg)
    pipe = cfg.get("pipeline", {})
    n_star = args.n_star if args.n_star is not None else pipe.get("n_star")
    out = run_wr(sample, target, n_star, _seed(args, cfg),
                 args.bandwidth or pipe.get("bandwidth", "silverman"),
                 args.e_n if args.e_n is not None else pipe.get("e_n", "default"))
    write_csv(out, args.out)


def _generator(args, cfg) -> GeneratorSpec:
    if args.generator:
        text = args.generator.strip()
        if text.startswith("{"):
            try:
                return GeneratorSpec.from_json(text)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid generator JSON: {exc}") from None
        kw = {"kind": text}
        if args.delta is not None:
            kw["delta"] = args.delta
        if args.k is not None:
            kw["k_neighbors"] = args.k
        if args.components is not None:
            kw["n_components"] = args.components
        if args.factors is not None:
            kw["n_factors"] = args.factors
        if args.clustered is not None:
            kw["clustered"] = {"g": args.clustered}
        return GeneratorSpec.from_dict(kw)
    gens = cfg.get("generators")
    if gens:
        return GeneratorSpec.from_dict(gens[0])
    raise ValidationError("no generator given (use --generator or a config 'generators' entry)")


def cmd_augment(args, cfg):
    sample = read_csv(args.data, _schema(args.schema))
    target = _target(args, cfg)
    pipe = dict(cfg.get("pipeline", {}))
    pipe.pop("generator", None)
    if args.big_n is not None:
        pipe["N"] = args.big_n
    if args.n_star is not None:
        pipe["n_star"] = args.n_star
    if args.pre_wr:
        pipe["preliminary_wr"] = True
    if args.bandwidth:
        pipe["bandwidth"] = args.bandwidth
    if args.e_n is not None:
        pipe["e_n"] = args.e_n
    if args.wr_kde_source:
        pipe["wr_kde_source"] = args.wr_kde_source
    spec = PipelineSpec.from_dict(pipe, _generator(args, cfg))
    write_csv(run_dawr(sample, target, spec, _seed(args, cfg)), args.out)


def cmd_diagnose(args, cfg):
    sample = read_csv(args.data, _schema(args.schema))
    target = _target(args, cfg)
    partition = json.loads(args.partition) if args.partition else None
    report = imbalance_report(sample, target, partition, args.alpha, args.beta, bins=args.bins)
    out = report.to_dict()
    out["target"] = target.spec_string()
    out["n"] = sample.n
    _write_json(out, args.out)


def cmd_evaluate(args, cfg):
    schema = _schema(args.schema)
    train = read_csv(args.train, schema)
    test = read_csv(args.test, schema)
    params = dict(cfg.get("models", {}).get(args.model, {}) if isinstance(cfg.get("models"), dict) else {})
    for key, value in (("knot_count", args.knots), ("lam", args.lam), ("trees", args.trees),
                       ("max_depth", args.max_depth), ("min_leaf", args.min_leaf)):
        if value is not None:
            params[key] = value
    model = fit_model(args.model, train, _seed(args, cfg), **params)
    score = rmse(test.y, predict(model, test.x))
    _write_json(
        {"model": args.model, "rmse": score, "n_train": train.n, "n_test": test.n, "params": params},
        args.out,
    )


def cmd_replicate(args, cfg):
    cfg = dict(cfg)
    if args.replicates is not None:
        cfg["replicates"] = args.replicates
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.all_generators:
        cfg["generators"] = list(DEFAULT_GENERATORS)
    spec = ExperimentSpec.from_config(cfg)
    table = run_replicates(spec, workers=args.workers)
    table.to_csv(args.out)
    if args.summary:
        _write_json(table.summary(), args.summary)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rebalance", description="Weighted resampling and DA-WR for imbalanced regression")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True, target=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True)
        if data:
            p.add_argument("--data", required=True, help="input CSV")
            p.add_argument("--schema", help='column roles as JSON, e.g. {"x": ["x"], "y": "y"}')
        if target:
            p.add_argument("--target", help="beta:a,b | normal:mu,sigma | kde:<path.csv>")

    def kde_opts(p):
        p.add_argument("--bandwidth", choices=["silverman", "rose"])
        p.add_argument("--e-n", type=float, dest="e_n", help="trimming floor (default 1/(10 n))")

    p = sub.add_parser("simulate", help="population and test/balanced/imbalanced samples")
    common(p, data=False, target=False)
    p.add_argument("--n", type=int)
    p.add_argument("--population-size", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weights", help="drawing weights (row_index, omega, q)")
    common(p)
    kde_opts(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("resample", help="weighted resampling")
    common(p)
    kde_opts(p)
    p.add_argument("--n-star", type=int)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("augment", help="DA-WR")
    common(p)
    kde_opts(p)
    p.add_argument("--generator", help="gn|rose|kde|smote|gmm|fa|copula, or a JSON spec")
    p.add_argument("--delta", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--components", type=int)
    p.add_argument("--factors", type=int)
    p.add_argument("--clustered", type=int, metavar="G")
    p.add_argument("--big-n", type=int)
    p.add_argument("--n-star", type=int)
    p.add_argument("--pre-wr", action="store_true")
    p.add_argument("--wr-kde-source", choices=["synthetic", "original"])
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("diagnose", help="(alpha, beta) imbalance report")
    common(p)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--partition", help="JSON list of [lo, hi] intervals")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("evaluate", help="fit a model and score RMSE on a test file")
    common(p, data=False, target=False)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--schema")
    p.add_argument("--model", choices=["spline", "forest"], required=True)
    p.add_argument("--knots", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--trees", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-leaf", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replicate", help="multi-replicate study, long-format CSV")
    common(p, data=False, target=False)
    p.add_argument("--replicates", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--all-generators", action="store_true", help="add the full DA-WR generator roster")
    p.add_argument("--summary", help="also write median RMSE/KS per label and model as JSON")
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(getattr(args, "config", None))
        args.func(args, cfg)
    except ValidationError as exc:
        print(f"rebalance: error: {exc}", file=sys.stderr)
        return 1
    except (RebalanceError, OSError, np.linalg.LinAlgError) as exc:
        print(f"rebalance: failed: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"rebalance: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
