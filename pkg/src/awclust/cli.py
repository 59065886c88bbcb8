"""Command-line front end: cluster, sweep, calibrate, eval, gen.

Every subcommand is deterministic given its full argument list including
the seed; worker count only parallelizes independent runs and never changes
outputs. On failure the process exits nonzero with a single machine-parsable
"error: ..." line on stderr and removes any partially written outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import data as dio
from .core import run_awc
from .metrics import general_error, nmi, propagation_error, separation_error
from .tuning import calibrate_propagation, default_lambda_grid, sweep_lambda

GENERATORS = {
    "uniform-ball": lambda p, seed: dio.gen_uniform_ball(
        int(p.get("n", 200)), int(p.get("dim", 2)), seed=seed
    ),
    "two-gauss": lambda p, seed: dio.gen_gaussian_pair(
        int(p.get("n", 300)), int(p.get("dim", 2)), float(p.get("D", 3.0)), seed=seed
    ),
    "hole": lambda p, seed: dio.gen_hole_dataset(
        int(p.get("n", 1000)), float(p.get("eps", 0.5)), seed=seed
    ),
    "ring-ball": lambda p, seed: dio.gen_ring_ball(
        int(p.get("n_ball", 120)), int(p.get("n_ring", 180)), seed=seed
    ),
    "circle": lambda p, seed: dio.gen_manifold_circle(
        int(p.get("n", 300)), int(p.get("dim", 10)), float(p.get("sigma", 0.05)), seed=seed
    ),
}


class CliError(Exception):
    pass


def _parse_gen_spec(spec: str):
    name, _, rest = spec.partition(":")
    if name not in GENERATORS:
        raise CliError(f"unknown generator {name!r} (choose from {sorted(GENERATORS)})")
    params = {}
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise CliError(f"malformed generator parameter {item!r} (expected key=value)")
            params[key.strip()] = value.strip()
    return name, params


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AWC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"AWC_SEED must be an integer, got {env!r}") from None
    return 0


def _load_dataset(args, seed: int):
    sources = [s for s in (args.input, args.distances, args.gen) if s]
    if len(sources) != 1:
        raise CliError("exactly one of --input, --distances, --gen is required")
    if args.input:
        return dio.load_points_csv(args.input, has_header=args.has_header, label_column=args.label_column)
    if args.distances:
        return dio.load_distance_csv(args.distances)
    name, params = _parse_gen_spec(args.gen)
    return GENERATORS[name](params, seed)


def _awc_kwargs(args) -> dict:
    kw = {"a": args.a, "b": args.b, "phi": args.phi}
    if args.n0 is not None:
        kw["n0"] = args.n0
    if args.eff_dim is not None:
        kw["d_eff"] = args.eff_dim
    if args.hmax is not None:
        kw["h_max"] = args.hmax
    return kw


def _resolve_lambda(args, dataset, kw, seed, workers, report):
    spec = args.lam
    try:
        return float(spec)
    except ValueError:
        pass
    if spec == "auto-sow":
        if dataset.points is not None:
            data = dataset.points
        else:
            data = dataset.distances
        grid = default_lambda_grid()
        curve = sweep_lambda(data, grid, workers=workers, **kw)
        report["sweep"] = {
            "lambdas": curve.lambdas.tolist(),
            "s_values": curve.s_values.tolist(),
            "plateaus": [
                {"start_lambda": p.start_lambda, "end_lambda": p.end_lambda, "mean_s": p.mean_s}
                for p in curve.plateaus
            ],
        }
        if curve.recommended is None:
            raise CliError("sum-of-weights sweep found no plateau; pass --lambda explicitly")
        return float(curve.recommended)
    if spec == "auto-propagation":
        n = dataset.n
        dim = kw.get("d_eff")
        if dim is None:
            if dataset.points is None:
                raise CliError("--eff-dim is required for auto-propagation on distance input")
            dim = dataset.points.shape[1]
        cal_kw = {k: v for k, v in kw.items() if k != "d_eff"}
        lam = calibrate_propagation(n, dim, level=0.9, runs=args.cal_runs, seed=seed, workers=workers, **cal_kw)
        report["calibration"] = {"lambda_star": lam, "runs": args.cal_runs, "level": 0.9}
        return lam
    raise CliError(f"--lambda must be a number, 'auto-sow', or 'auto-propagation', got {spec!r}")


def cmd_cluster(args):
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    kw = _awc_kwargs(args)
    report = {}
    workers = args.workers
    lam = _resolve_lambda(args, dataset, kw, seed, workers, report)
    started = time.perf_counter()
    data = dataset.points if dataset.points is not None else dataset.distances
    result = run_awc(data, lam=lam, **kw)
    report.update(result.diagnostics)
    report["wall_seconds"] = time.perf_counter() - started
    report["seed"] = seed
    report["workers"] = workers

    outputs = []
    try:
        if args.out_labels:
            dio.write_labels_csv(result, args.out_labels)
            outputs.append(args.out_labels)
        if args.out_weights:
            dio.write_weights_csv(result, args.out_weights)
            outputs.append(args.out_weights)
        if args.out_diag:
            with open(args.out_diag, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
            outputs.append(args.out_diag)
    except Exception:
        for path in outputs:
            try:
                os.unlink(path)
            except OSError:
                pass
        raise
    if not args.out_labels:
        for i, lab in enumerate(result.labels):
            sys.stdout.write(f"{i},{int(lab)}\n")
    else:
        sys.stdout.write(
            f"clusters={result.num_clusters} n={dataset.n} lambda={lam:g} steps={report['num_steps']}\n"
        )
    return 0


def cmd_sweep(args):
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    kw = _awc_kwargs(args)
    grid = np.geomspace(args.lambda_min, args.lambda_max, args.grid_size)
    if args.lambda_min <= 0 or args.lambda_max <= args.lambda_min:
        raise CliError("require 0 < --lambda-min < --lambda-max")
    data = dataset.points if dataset.points is not None else dataset.distances
    curve = sweep_lambda(data, grid, workers=args.workers, **kw)
    plateau_id = np.full(len(grid), -1, dtype=int)
    for pid, p in enumerate(curve.plateaus):
        plateau_id[p.start_index : p.end_index + 1] = pid
    lines = ["lambda,S,plateau_id"]
    lines += [
        f"{lam:.10g},{int(s)},{pid}"
        for lam, s, pid in zip(curve.lambdas, curve.s_values, plateau_id)
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except Exception:
            try:
                os.unlink(args.out)
            except OSError:
                pass
            raise
    else:
        sys.stdout.write(text)
    return 0


def cmd_calibrate(args):
    seed = _resolve_seed(args)
    lam = calibrate_propagation(
        args.n,
        args.dim,
        level=args.level,
        runs=args.runs,
        seed=seed,
        workers=args.workers,
        a=args.a,
        b=args.b,
        phi=args.phi,
        **({"n0": args.n0} if args.n0 is not None else {}),
    )
    payload = {
        "lambda_star": lam,
        "n": args.n,
        "dim": args.dim,
        "level": args.level,
        "runs": args.runs,
        "seed": seed,
    }
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except Exception:
            try:
                os.unlink(args.out)
            except OSError:
                pass
            raise
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    return 0


def cmd_eval(args):
    pred = dio.load_labels_csv(args.pred)
    truth = dio.load_labels_csv(args.truth)
    if len(pred) != len(truth):
        raise CliError(f"label files disagree on n: {len(pred)} vs {len(truth)}")
    metrics = {
        "e_p": propagation_error(pred, truth),
        "e_s": separation_error(pred, truth),
        "e": general_error(pred, truth),
        "rand_index": 1.0 - general_error(pred, truth),
        "nmi": nmi(pred, truth),
        "n": len(pred),
    }
    if args.format == "json":
        text = json.dumps(metrics, sort_keys=True) + "\n"
    else:
        keys = sorted(metrics)
        text = ",".join(keys) + "\n" + ",".join(f"{metrics[k]:.10g}" for k in keys) + "\n"
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except Exception:
            try:
                os.unlink(args.out)
            except OSError:
                pass
            raise
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen(args):
    seed = _resolve_seed(args)
    name, params = _parse_gen_spec(args.spec)
    dataset = GENERATORS[name](params, seed)
    try:
        dio.write_points_csv(dataset, args.out)
    except Exception:
        try:
            os.unlink(args.out)
        except OSError:
            pass
        raise
    return 0


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="PRNG seed (fallback: AWC_SEED env var, then 0)")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def _add_data_args(parser):
    parser.add_argument("--input", help="points CSV")
    parser.add_argument("--distances", help="precomputed distance matrix CSV")
    parser.add_argument("--gen", help="generator spec, e.g. two-gauss:n=300,D=3")
    parser.add_argument("--has-header", action="store_true")
    parser.add_argument("--label-column", default=None)


def _add_awc_args(parser):
    parser.add_argument("--a", type=float, default=float(np.sqrt(2.0)))
    parser.add_argument("--b", type=float, default=1.95)
    parser.add_argument("--n0", type=int, default=None)
    parser.add_argument("--eff-dim", type=int, default=None)
    parser.add_argument("--hmax", type=float, default=None)
    parser.add_argument("--phi", type=float, default=0.95)


def build_parser():
    parser = argparse.ArgumentParser(prog="awclust", description="Adaptive weights clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="cluster a dataset and write labels")
    _add_data_args(p)
    _add_awc_args(p)
    _add_common(p)
    p.add_argument("--lambda", dest="lam", required=True, help="number | auto-sow | auto-propagation")
    p.add_argument("--cal-runs", type=int, default=50, help="runs for auto-propagation")
    p.add_argument("--out-labels")
    p.add_argument("--out-weights")
    p.add_argument("--out-diag")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("sweep", help="sum-of-weights curve over a lambda grid")
    _add_data_args(p)
    _add_awc_args(p)
    _add_common(p)
    p.add_argument("--lambda-min", type=float, default=0.5)
    p.add_argument("--lambda-max", type=float, default=20.0)
    p.add_argument("--grid-size", type=int, default=40)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="propagation-calibrate lambda on uniform balls")
    _add_awc_args(p)
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--level", type=float, default=0.9)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="compare predicted labels against true labels")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="write a synthetic dataset CSV")
    _add_common(p)
    p.add_argument("spec", help="generator spec, e.g. hole:n=1000,eps=0.5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
