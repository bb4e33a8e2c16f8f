"""Command-line surface: run, verify, max-horizon, sweep.

Exit codes:
  0  success (run completed safely / horizon verified / sweep written)
  1  configuration or usage error (message names the violated constraint)
  2  run aborted: the controller could not certify a safe input
  3  run completed but a true constraint violation was logged
  4  horizon not verified at the sampled resolution
  5  max-horizon bracket error (lo >= hi, lo fails, or hi passes)

RITCBF_THREADS caps worker processes for sweep runs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ConfigError, load_scenario, parse_scenario, set_by_path
from .sim import SafetyInfeasibleError, ZenoError, run_scenario
from .verify import (
    BracketError,
    DomainEmptyError,
    VerifierSampling,
    max_horizon,
    sampling_from_config,
    verify_rit_cbf,
    verify_rt_cbf,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_VIOLATION = 3
EXIT_NOT_VERIFIED = 4
EXIT_BRACKET = 5


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def _cmd_run(args) -> int:
    try:
        config = load_scenario(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        return _fail(str(e), EXIT_CONFIG)
    os.makedirs(args.out, exist_ok=True)
    try:
        log, met = run_scenario(
            config, seed=args.seed, duration=args.duration
        )
    except SafetyInfeasibleError as e:
        print(f"safety-infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ZenoError as e:
        print(f"hybrid-model violation: {e}", file=sys.stderr)
        return EXIT_VIOLATION
    log.write_csv(os.path.join(args.out, "run.csv"))
    _write_json(os.path.join(args.out, "metrics.json"), met.to_dict())
    worst = met.max_h_true_overall
    print(
        f"{met.name}: max h = {worst:.3f} m, "
        f"{met.impulses} impulses, dv = {met.total_dv:.3f} m/s, "
        f"{met.measurements_accepted} fixes accepted"
    )
    if met.violation:
        print("constraint violation logged", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_verify(args) -> int:
    try:
        config = load_scenario(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        return _fail(str(e), EXIT_CONFIG)
    sampler = sampling_from_config(config)
    if args.samples is not None:
        sampler = VerifierSampling(
            n_samples=args.samples, seed=sampler.seed, levels=sampler.levels
        )
    vf = verify_rit_cbf if config.mode == "impulsive" else verify_rt_cbf
    try:
        report = vf(config, args.tm, sampler)
    except (ConfigError, DomainEmptyError) as e:
        return _fail(str(e), EXIT_CONFIG)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "report.json"), report)
    ok = report["verified_at_resolution"]
    print(
        f"{report['kind']} at T_M = {args.tm}: "
        f"{'verified' if ok else 'NOT verified'} "
        f"(worst margin {report['worst_margin']:+.4g})"
    )
    return EXIT_OK if ok else EXIT_NOT_VERIFIED


def _cmd_max_horizon(args) -> int:
    try:
        config = load_scenario(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        return _fail(str(e), EXIT_CONFIG)
    sampler = sampling_from_config(config)
    if args.samples is not None:
        sampler = VerifierSampling(
            n_samples=args.samples, seed=sampler.seed, levels=sampler.levels
        )
    probes = []

    def on_probe(T, rep):
        probes.append(
            {
                "T_M": T,
                "verified": rep["verified_at_resolution"],
                "worst_margin": rep["worst_margin"],
            }
        )

    try:
        T_star = max_horizon(
            config, config.mode, args.lo, args.hi, args.tol,
            sampler, on_probe=on_probe,
        )
    except BracketError as e:
        return _fail(str(e), EXIT_BRACKET)
    except (ConfigError, DomainEmptyError) as e:
        return _fail(str(e), EXIT_CONFIG)
    os.makedirs(args.out, exist_ok=True)
    _write_json(
        os.path.join(args.out, "report.json"),
        {
            "mode": config.mode,
            "T_lo": args.lo,
            "T_hi": args.hi,
            "tol": args.tol,
            "max_horizon": T_star,
            "probes": probes,
            "sampler": {
                "scheme": "halton",
                "n_samples": sampler.n_samples,
                "seed": sampler.seed,
                "levels": sampler.resolved_levels(),
            },
        },
    )
    print(f"max horizon = {T_star:.3f} s ({len(probes)} probes)")
    return EXIT_OK


def _sweep_one(payload):
    raw, path, value = payload
    raw = json.loads(json.dumps(raw))  # deep copy for the worker
    set_by_path(raw, path, value)
    config = parse_scenario(raw)
    _, met = run_scenario(config)
    return value, met.to_dict()


def _cmd_sweep(args) -> int:
    try:
        config = load_scenario(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        return _fail(str(e), EXIT_CONFIG)
    tokens = []
    for v in args.values:
        tokens.extend(p for p in v.split(",") if p)
    if not tokens:
        return _fail("sweep: --values must list at least one value", EXIT_CONFIG)
    try:
        values = [float(tok) for tok in tokens]
    except ValueError as e:
        return _fail(f"sweep: {e}", EXIT_CONFIG)
    raw = config.to_dict()
    # validate the path and every value before spending any runtime
    for v in values:
        probe = json.loads(json.dumps(raw))
        try:
            set_by_path(probe, args.param, v)
            parse_scenario(probe)
        except ConfigError as e:
            return _fail(f"sweep at {args.param}={v}: {e}", EXIT_CONFIG)
    jobs = [(raw, args.param, v) for v in values]
    env = os.environ.get("RITCBF_THREADS", "")
    workers = max(1, int(env)) if env else min(len(jobs), os.cpu_count() or 1)
    results = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for value, met in pool.map(_sweep_one, jobs):
                results[f"{value:g}"] = met
    else:
        for job in jobs:
            value, met = _sweep_one(job)
            results[f"{value:g}"] = met
    os.makedirs(args.out, exist_ok=True)
    _write_json(
        os.path.join(args.out, "sweep.json"),
        {"param": args.param, "results": results},
    )
    print(f"sweep over {args.param}: {len(results)} runs written")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ritcbf",
        description="Safety filters and horizon certification for "
        "sporadically measured orbital vehicles.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one closed-loop run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("verify", help="certify one measurement horizon")
    p.add_argument("--config", required=True)
    p.add_argument("--tm", type=float, required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_verify)

    p = sub.add_parser("max-horizon", help="bisect the largest passing T_M")
    p.add_argument("--config", required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--tol", type=float, required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_max_horizon)

    p = sub.add_parser("sweep", help="rerun the scenario over parameter values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--out", default=".")
    p.set_defaults(fn=_cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
