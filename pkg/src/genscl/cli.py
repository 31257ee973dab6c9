"""Command-line entry point.

Subcommands: gen-data, train, eval, run (all three stages), probe (evaluate a
saved checkpoint), gradcheck (finite-difference gradient suite).  Exit codes:
0 ok, 2 config error, 3 numeric failure, 4 IO error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, experiments, nets, training
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genscl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"genscl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, metavar="PATH", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, metavar="N", help="override config seed")
        p.add_argument("--out", default=None, metavar="DIR", help="override output directory")
        p.add_argument("--paper-scale", action="store_true", help="use published dataset sizes")
        p.add_argument(
            "--vector-input",
            action="store_true",
            help="quad experiment: feed vertex coordinates instead of rasters",
        )

    for name, help_text in (
        ("gen-data", "generate (or reuse cached) datasets only"),
        ("train", "generate data and train, writing checkpoints"),
        ("eval", "run the full pipeline and write evaluation reports"),
        ("run", "gen-data + train + eval"),
    ):
        p = sub.add_parser(name, help=help_text)
        add_config_args(p)

    p = sub.add_parser("probe", help="evaluate a saved checkpoint on fresh evaluation data")
    add_config_args(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config)  # validate the file as written first
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.paper_scale:
        overrides["paper_scale"] = True
    if getattr(args, "vector_input", False):
        overrides["vector_input"] = True
    if not overrides:
        return config
    # Revalidate from the raw file so flag-dependent defaults (paper_scale
    # dataset sizes) are refilled rather than overridden piecemeal.
    import json

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    raw.update(overrides)
    from .config import config_from_dict

    return config_from_dict(raw)


def _cmd_stages(args, stages: str) -> int:
    config = _load(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = experiments.gen_data(config)
    if stages == "gen-data":
        print(f"dataset ready under {experiments.cache_root(config)}")
        return EXIT_OK
    spec, params = experiments.train_model(config, data, out)
    if stages == "train":
        print(f"training complete; checkpoints in {out / 'checkpoints'}")
        return EXIT_OK
    metrics = experiments.evaluate_model(config, data, spec, params, out)
    metrics = {
        "experiment": config.experiment,
        "objective": config.objective,
        "seed": config.seed,
        **metrics,
    }
    experiments.write_report(metrics, out)
    print(f"evaluation written to {out / 'eval.json'}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load(args)
    metrics = experiments.run_experiment(config)
    print(f"run complete; eval.json in {config.out_dir}")
    keys = [k for k in metrics if k.endswith(("accuracy", "rho_error_vs_irregularity", "_mean"))]
    for k in sorted(keys):
        print(f"  {k} = {metrics[k]}")
    return EXIT_OK


def _cmd_probe(args) -> int:
    config = _load(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec, params = nets.load_checkpoint(args.checkpoint)
    data = experiments.gen_data(config)
    metrics = experiments.evaluate_model(config, data, spec, params, out)
    experiments.write_report(
        {"experiment": config.experiment, "checkpoint": str(args.checkpoint), **metrics}, out
    )
    print(f"probe report written to {out / 'eval.json'}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures = 0
    print("finite-difference gradient suite (threshold 1e-4):")
    for spec in (
        nets.NetSpec.mlp((6, 16, 4)),
        nets.NetSpec.conv(input_side=16, blocks=2, filters=4, embed_dim=5),
    ):
        base = nets.init(spec, rng)
        params = nets.ParamVector(
            base.values + 0.02 * rng.standard_normal(base.values.size), base.layout
        )
        x = (
            rng.standard_normal(6)
            if spec.kind == "mlp"
            else np.clip(rng.random((16, 16)), 0.05, 0.95)
        )
        target = rng.standard_normal(spec.output_dim)

        def quadratic(e):
            return float(np.sum((e - target) ** 2)), 2.0 * (e - target)

        def softmax_like(e):
            s = float(np.sum(e * target))
            return float(np.logaddexp(0.0, s)), target / (1.0 + np.exp(-s))

        for name, loss_fn in (("quadratic", quadratic), ("softmax", softmax_like)):
            err = nets.finite_diff_check(spec, params, x, loss_fn, eps=1e-5, rng=rng)
            ok = err <= 1e-4
            failures += int(not ok)
            print(f"  {spec.kind:4s} x {name:9s} max rel err {err:.3e} {'ok' if ok else 'FAIL'}")
    loss_failures = _loss_level_gradcheck(rng)
    failures += loss_failures
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def _loss_level_gradcheck(rng) -> int:
    def fd(fn, arrays, grads, eps=1e-6):
        worst = 0.0
        for ai, (arr, g) in enumerate(zip(arrays, grads)):
            for i in range(arr.size):
                plus = [a.copy() for a in arrays]
                minus = [a.copy() for a in arrays]
                plus[ai].flat[i] += eps
                minus[ai].flat[i] -= eps
                num = (fn(*plus) - fn(*minus)) / (2 * eps)
                worst = max(worst, abs(num - g.flat[i]) / max(abs(num), abs(g.flat[i]), 1e-8))
        return worst

    failures = 0
    a, p, n = rng.standard_normal((3, 5))
    for kind in (training.LinearTriplet(), training.SoftmaxTriplet(), training.QuadraticTriplet()):
        _, grads = training.triplet_loss(kind, a, p, n)
        err = fd(lambda *e: training.triplet_loss(kind, *e)[0], [a, p, n], list(grads))
        ok = err <= 1e-6
        failures += int(not ok)
        print(f"  loss {type(kind).__name__:16s} max rel err {err:.3e} {'ok' if ok else 'FAIL'}")
    e1, e2 = rng.standard_normal((2, 5))
    _, g = training.gensim_regression_loss(e1, e2, 1.5)
    err = fd(lambda *e: training.gensim_regression_loss(*e, 1.5)[0], [e1, e2], list(g))
    ok = err <= 1e-6
    failures += int(not ok)
    print(f"  loss GenSimRegression  max rel err {err:.3e} {'ok' if ok else 'FAIL'}")
    u, v = rng.standard_normal((2, 4, 6))
    _, (du, dv) = training.infonce_loss((u, v), 0.4)
    err = fd(lambda *e: training.infonce_loss((e[0], e[1]), 0.4)[0], [u, v], [du, dv])
    ok = err <= 1e-6
    failures += int(not ok)
    print(f"  loss InfoNce           max rel err {err:.3e} {'ok' if ok else 'FAIL'}")
    return failures


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            return _cmd_stages(args, "gen-data")
        if args.command == "train":
            return _cmd_stages(args, "train")
        if args.command == "eval":
            return _cmd_stages(args, "eval")
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "probe":
            return _cmd_probe(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except experiments.StageError as exc:
        kind = EXIT_NUMERIC if isinstance(exc.cause, NumericError) else EXIT_IO
        if isinstance(exc.cause, ConfigError):
            kind = EXIT_CONFIG
        print(f"{exc}", file=sys.stderr)
        return kind
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
