"""Command-line interface: single runs, campaigns, profile tables, dataset inspection.

Exit codes: 0 on success, 2 on validation or parse errors (before any output
file is created), 1 on runtime failure.  ``NSOPT_SEED`` supplies a global
seed when ``--seed`` is omitted.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

import numpy as np

from . import bench, data_io
from .bench import METHODS, CampaignResult, CampaignSpec
from .model import Ball
from .problems import HingeLossSvm
from .solver import SolverConfig, run


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _env_seed() -> int:
    raw = os.environ.get("NSOPT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"NSOPT_SEED must be an integer, got {raw!r}") from None


def _print_effective_config(label: str, payload: dict) -> None:
    print(f"effective {label}: {json.dumps(payload, sort_keys=True)}")


def _solver_config_from_flags(args) -> SolverConfig:
    overrides = {}
    for flag, key in (
        ("c1", "c1"),
        ("c2", "c2"),
        ("eta", "eta"),
        ("window", "window"),
        ("zeta_lo", "zeta_lo"),
        ("zeta_hi", "zeta_hi"),
        ("zeta_init", "zeta_init"),
        ("sample_fraction", "sample_start_fraction"),
        ("sample_growth", "sample_growth"),
        ("y_policy", "y_policy"),
        ("kink_tol", "kink_tol"),
        ("max_iters", "max_iters"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    if args.normalize_directions:
        overrides["normalize_directions"] = True
    return SolverConfig(**overrides)


def cmd_run(args) -> int:
    # -- validation phase: no outputs yet --
    try:
        if args.method not in METHODS:
            raise ValueError(f"unknown method {args.method!r}; valid methods: {', '.join(METHODS)}")
        seed = args.seed if args.seed is not None else _env_seed()
        base = _solver_config_from_flags(args)
        config = bench.method_config(args.method, base=base).with_overrides(seed=seed)
        dataset = data_io.load_libsvm(args.problem)
        problem = HingeLossSvm.from_dataset(dataset, reg_coeff=args.reg_coeff, kink_tol=config.kink_tol)
        region = Ball(args.radius_sq)
        budget = args.budget if args.budget is not None else bench.default_budget(problem.ground_size)
    except (data_io.ParseError, ValueError, OSError) as exc:
        return _fail(str(exc), 2)
    _print_effective_config(
        "run config",
        {"method": args.method, "budget": budget, "reg_coeff": args.reg_coeff, "radius_sq": args.radius_sq, **config.to_dict()},
    )
    # -- execution phase --
    try:
        trace = run(problem, region, config, budget=budget)
        out = args.out or f"{pathlib.Path(args.problem).stem}__{args.method}__s{seed}.csv"
        trace.save_csv(out)
    except Exception as exc:
        return _fail(f"run failed: {exc}", 1)
    k, fev = int(trace.k[-1]), int(trace.fev[-1])
    f_saa, f_true = float(trace.f_saa[-1]), float(trace.f_true[-1])
    final = f"final: k={k} fev={fev} f_saa={f_saa:.12g}"
    if not np.isnan(f_true):
        final += f" f_true={f_true:.12g}"
    print(final)
    print(f"trace written to {out}")
    return 0


def cmd_campaign(args) -> int:
    try:
        spec_text = pathlib.Path(args.spec).read_text(encoding="utf-8")
        payload = json.loads(spec_text)
        if args.budget is not None:
            payload["budget"] = args.budget
        spec = CampaignSpec.from_dict(payload)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        return _fail(f"invalid campaign spec: {exc}", 2)
    _print_effective_config("campaign spec", spec.to_dict())
    try:
        result = bench.run_campaign(spec, out_dir=args.out, parallelism=args.parallelism)
    except Exception as exc:
        return _fail(f"campaign failed: {exc}", 1)
    if result.failures:
        for (m, d, s), err in sorted(result.failures.items()):
            print(f"failed: {m} on {d} seed {s}: {err}", file=sys.stderr)
        print(f"failure manifest written to {pathlib.Path(args.out) / 'failures.json'}", file=sys.stderr)
        return 1
    print(f"campaign complete: {len(result.first_hit)} runs, outputs in {args.out}")
    return 0


def cmd_profile(args) -> int:
    try:
        payload = json.loads(pathlib.Path(args.results).read_text(encoding="utf-8"))
        result = CampaignResult.from_json_dict(payload["result"])
        tau = args.tau if args.tau is not None else result.pp_tau
        result.pp_tau = tau
        result.tau_index(tau)  # validate against the stored grid
    except (OSError, KeyError, json.JSONDecodeError, ValueError) as exc:
        return _fail(f"invalid results file: {exc}", 2)
    try:
        table = bench.profiles_csv(result)
        if args.out:
            pathlib.Path(args.out).write_text(table, encoding="utf-8")
            print(f"profiles written to {args.out}")
        else:
            sys.stdout.write(table)
    except Exception as exc:
        return _fail(f"profile generation failed: {exc}", 1)
    return 0


def cmd_inspect(args) -> int:
    try:
        dataset = data_io.load_libsvm(args.data)
    except (data_io.ParseError, ValueError, OSError) as exc:
        return _fail(str(exc), 2)
    feat = dataset.features
    density = feat.nnz / (dataset.n_rows * dataset.n_cols) if dataset.n_rows * dataset.n_cols else 0.0
    print(f"rows: {dataset.n_rows}")
    print(f"cols: {dataset.n_cols}")
    print(f"nnz: {feat.nnz} (density {density:.4f})")
    print(f"label alphabet (source): {list(dataset.label_alphabet)}")
    pos = int(np.sum(dataset.labels == 1.0))
    print(f"labels: +1 x {pos}, -1 x {dataset.n_rows - pos}")
    preview = data_io.serialize_libsvm(dataset.take(np.arange(min(3, dataset.n_rows)))).splitlines()
    for line in preview:
        print(f"  {line[:100]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one method on one dataset and write a trace CSV")
    p_run.add_argument("--problem", required=True, help="LIBSVM file (.gz accepted)")
    p_run.add_argument("--method", required=True, help=f"one of: {', '.join(METHODS)}")
    p_run.add_argument("--seed", type=int, default=None, help="run seed (default: NSOPT_SEED or 0)")
    p_run.add_argument("--budget", type=int, default=None, help="FEV budget (default: 50 full passes)")
    p_run.add_argument("--out", default=None, help="trace CSV path")
    p_run.add_argument("--reg-coeff", dest="reg_coeff", type=float, default=10.0)
    p_run.add_argument("--radius-sq", dest="radius_sq", type=float, default=0.1)
    p_run.add_argument("--c1", type=float, default=None)
    p_run.add_argument("--c2", type=float, default=None)
    p_run.add_argument("--eta", type=float, default=None)
    p_run.add_argument("--window", type=int, default=None)
    p_run.add_argument("--zeta-lo", dest="zeta_lo", type=float, default=None)
    p_run.add_argument("--zeta-hi", dest="zeta_hi", type=float, default=None)
    p_run.add_argument("--zeta-init", dest="zeta_init", type=float, default=None)
    p_run.add_argument("--sample-fraction", dest="sample_fraction", type=float, default=None)
    p_run.add_argument("--sample-growth", dest="sample_growth", type=float, default=None)
    p_run.add_argument("--y-policy", dest="y_policy", default=None)
    p_run.add_argument("--kink-tol", dest="kink_tol", type=float, default=None)
    p_run.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    p_run.add_argument("--normalize-directions", dest="normalize_directions", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_camp = sub.add_parser("campaign", help="run a JSON campaign spec")
    p_camp.add_argument("--spec", required=True, help="campaign spec JSON path")
    p_camp.add_argument("--out", required=True, help="output directory")
    p_camp.add_argument("--parallelism", type=int, default=1)
    p_camp.add_argument("--budget", type=int, default=None, help="override the spec's per-run budget")
    p_camp.set_defaults(func=cmd_campaign)

    p_prof = sub.add_parser("profile", help="recompute profile tables from results.json")
    p_prof.add_argument("--results", required=True, help="results.json from a campaign")
    p_prof.add_argument("--tau", type=float, default=None, help="threshold for the PP curve")
    p_prof.add_argument("--out", default=None, help="profiles CSV path (default: stdout)")
    p_prof.set_defaults(func=cmd_profile)

    p_ins = sub.add_parser("inspect", help="summarize a LIBSVM dataset")
    p_ins.add_argument("--data", required=True, help="LIBSVM file (.gz accepted)")
    p_ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
