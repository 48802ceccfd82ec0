"""Command-line entry point.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure or
failed check.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..checks import SUITES, run_suite
from ..reservoir import (
    PRESETS,
    SimulationError,
    SyntheticSpec,
    build_synthetic_model,
    generate_synthetic_observations,
    observation_layout,
    read_model,
    write_model,
    write_observations,
)
from .config import ConfigError, load_config
from .experiments import FLOAT_FMT, compare_runs, run_experiment, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# Reduced sizes for a fast smoke pass of the check battery.
QUICK = {
    "integrators": {"n_states": 1000},
    "stationarity": {"n_steps": 200_000},
    "mutation": {},
    "reversibility": {"n_steps": 200_000},
    "adjoint": {},
}


def _spec_from_args(args) -> SyntheticSpec:
    if args.spec is not None:
        try:
            raw = json.loads(Path(args.spec).read_text())
            spec = SyntheticSpec(**raw)
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read model spec {args.spec}: {exc}") from exc
    else:
        spec = PRESETS[args.preset]
    if args.seed is not None:
        spec = SyntheticSpec(**{**spec.to_dict(), "seed": args.seed})
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return spec


def cmd_generate_model(args) -> int:
    model = build_synthetic_model(_spec_from_args(args))
    write_model(model, args.output)
    if args.truth is not None:
        np.savetxt(args.truth, model.parameters(), fmt=FLOAT_FMT)
    print(f"wrote {args.output}: {model.n_blocks} blocks, {model.n_connections} connections, "
          f"{model.n_perforations} perforations, {model.n_wells} wells, {model.n_params} parameters")
    return EXIT_OK


def cmd_generate_data(args) -> int:
    try:
        model = read_model(args.model)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read model {args.model}: {exc}") from exc
    truth = None
    if args.truth is not None:
        truth = np.loadtxt(args.truth, ndmin=1)
        if truth.shape != (model.n_params,):
            raise ConfigError(f"truth has {truth.size} values, model has {model.n_params} parameters")
    layout = observation_layout(model, n_bhp=args.n_bhp, n_block=args.n_block, every=args.every)
    obs = generate_synthetic_observations(model, truth, noise_seed=args.seed,
                                          noise=not args.no_noise, layout=layout)
    write_observations(obs, args.output)
    print(f"wrote {args.output}: {len(obs.points)} observations")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    results = run_experiment(cfg, args.output)
    for r in results:
        print(f"seed {r.seed}: acceptance {r.acceptance:.3f}, delta {r.final_delta:.4g}, "
              f"median nESS {np.median(r.ness):.4g}")
    print(f"outputs in {args.output}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = run_sweep(cfg, args.output)
    print(f"sweep over {len(cfg.box_sizes)} box sizes written to {args.output}")
    check = out["overlap_check"]
    if check is not None:
        print(f"band overlap from a = {check['from']:g}: {'PASS' if check['passed'] else 'FAIL'}")
        if not check["passed"]:
            return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    out = compare_runs(args.a, args.b, args.output, bins=args.bins)
    rep = out["report"]
    print(f"{rep.ratios.size} coordinates, fraction of nESS ratios > 1: {rep.fraction_greater:.3f}")
    return EXIT_OK


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        kw = QUICK[name] if args.quick else {}
        for rep in run_suite(name, **kw):
            print(rep)
            ok &= rep.passed
    return EXIT_OK if ok else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boundedmcmc",
                                 description="Bounded-domain HMC samplers and experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-model", help="write a synthetic reservoir model")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS), default="field")
    src.add_argument("--spec", help="JSON file of SyntheticSpec fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--truth", help="also write the generating parameters here")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate_model)

    p = sub.add_parser("generate-data", help="simulate noisy observations from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", help="parameter file (default: the model's own values)")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--no-noise", action="store_true")
    p.add_argument("--n-bhp", type=int, default=None)
    p.add_argument("--n-block", type=int, default=None)
    p.add_argument("--every", type=int, default=6, help="observation interval in steps")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("run", help="multi-seed chains for one configuration")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a run over box sizes and variants")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="histogram of median-nESS ratios between two runs")
    p.add_argument("a", help="run directory or summary.csv (numerator)")
    p.add_argument("b", help="run directory or summary.csv (denominator)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--bins", type=int, default=30)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="run the correctness battery")
    p.add_argument("suite", nargs="?", default="all", choices=sorted(SUITES) + ["all"])
    p.add_argument("--quick", action="store_true", help="reduced sample sizes")
    p.set_defaults(func=cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
