# File: app/main.py
"""
Command-line entry point.

Usage:
    python app/main.py simulate --d 1 --N 32 --k 1 --sign defocusing --scheme strang --dt 1e-4 --T 1
    python app/main.py ensemble --config run.yml --paths 200 --seed 7
    python app/main.py verify strichartz --Ns 8,16,32 --p 6 --samples 20
    python app/main.py norms --trajectory runs/trajectory.snls --s 0 --b 0.375
    python app/main.py check-identity factorization --alpha 0.25

Env:
  SNLS_LOG_LEVEL - logging level (default: INFO)
  SNLS_<KEY>     - any run configuration key, e.g. SNLS_DT=1e-4

Exit codes: 0 success, 2 invalid configuration or usage, 3 I/O failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from config import RunConfig
from ensemble import config_hash, drift_check, isometry_check, run_ensemble
from estimates import factorization_check, growth_factor, sweep
from functionals import FunctionalsObserver, energy, fl_norm, mass, sobolev_norm, xsb_norm
from integrators import SolverState, evolve_state, evolve_truncated_state
from models import ConfigError, NonlinearitySpec, Sign, TorusSpec
from noise import SmoothingOperator
from storage import read_json, read_trajectory, write_json, write_observables, write_ratios, write_snapshot, write_trajectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INVALID = 2
EXIT_IO = 3


def _emit(payload: dict, stream=None):
    print(json.dumps(payload, sort_keys=True, default=str), file=stream or sys.stdout)


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, help="YAML run configuration")
    for key in RunConfig.keys():
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE")


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Stochastic NLS simulator and estimate verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_flags(sub.add_parser("simulate", help="run one path, write observables and snapshots"))
    _add_config_flags(sub.add_parser("ensemble", help="Monte Carlo sup-moment estimates"))

    verify = sub.add_parser("verify", help="sample an inequality over a sweep of N")
    verify.add_argument("kind", choices=["strichartz", "l4", "product", "multilinear"])
    verify.add_argument("--Ns", default="8,16,32")
    verify.add_argument("--d", type=int, default=1)
    verify.add_argument("--samples", type=int, default=20)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--p", type=float, default=6.0)
    verify.add_argument("--T", type=float, default=1.0)
    verify.add_argument("--s", type=float, default=0.0)
    verify.add_argument("--r", type=float, default=1.0)
    verify.add_argument("--k", type=int, default=1)
    verify.add_argument("--b", type=float, default=0.375)
    verify.add_argument("--bp", type=float, default=0.625)
    verify.add_argument("--output-dir", default="runs")

    norms = sub.add_parser("norms", help="functionals of a stored trajectory")
    norms.add_argument("--trajectory", required=True)
    norms.add_argument("--s", type=float, default=0.0)
    norms.add_argument("--b", type=float, default=0.375)
    norms.add_argument("--r", type=float, default=2.0)
    norms.add_argument("--k", type=int, default=1)
    norms.add_argument("--sign", default=Sign.DEFOCUSING.value, choices=[s.value for s in Sign])

    check = sub.add_parser("check-identity", help="numerical identities and hash verification")
    identity = check.add_subparsers(dest="identity", required=True)
    fact = identity.add_parser("factorization")
    fact.add_argument("--alpha", type=float, required=True)
    fact.add_argument("--t", type=float, default=1.0)
    fact.add_argument("--mu", type=float, default=0.0)
    iso = identity.add_parser("isometry")
    iso.add_argument("--d", type=int, default=1)
    iso.add_argument("--N", type=int, default=8)
    iso.add_argument("--a", type=float, default=1.0)
    iso.add_argument("--s", type=float, default=0.0)
    iso.add_argument("--t", type=float, default=1.0)
    iso.add_argument("--dt", type=float, default=0.01)
    iso.add_argument("--paths", type=int, default=200)
    iso.add_argument("--seed", type=int, default=0)
    _add_config_flags(identity.add_parser("drift"))
    hashed = identity.add_parser("config-hash")
    hashed.add_argument("--report", required=True)
    return parser


def _run_config(args, command: str) -> RunConfig:
    overrides = {key: getattr(args, key) for key in RunConfig.keys()}
    return RunConfig.load(args.config, overrides=overrides).check(command)


def cmd_simulate(args) -> int:
    cfg = _run_config(args, "simulate")
    spec = cfg.torus()
    stepper = cfg.stepper(spec)
    state = SolverState.start(cfg.initial_field(spec), stepper, cfg.seed)
    observer = FunctionalsObserver(stepper.nl, cfg.hs_s)
    observer(state)
    if cfg.R > 0:
        final, traj = evolve_truncated_state(state, stepper, cfg.R, cfg.xsb_s, cfg.xsb_b, cfg.T,
                                             [observer], cfg.stride, cfg.refresh_stride)
    else:
        final, traj = evolve_state(state, stepper, cfg.T, [observer], cfg.stride)
    out = Path(cfg.output_dir)
    write_observables(out / "observables.csv", observer.rows, cfg.hash, cfg.seed)
    write_trajectory(out / "trajectory.snls", traj)
    write_snapshot(out / "final.snls", final.field, final.t)
    (out / "run.yml").write_text(cfg.to_yaml())
    first, last = observer.rows[0], observer.rows[-1]
    _emit({
        "config_hash": cfg.hash,
        "t": final.t,
        "mass_drift": abs(last["mass"] - first["mass"]) / first["mass"] if first["mass"] else None,
        "energy_drift": abs(last["energy"] - first["energy"]) / abs(first["energy"]) if first["energy"] else None,
        "blowup_time": final.blowup_time,
        "tau": final.truncation.tau if final.truncation else None,
        "output_dir": str(out),
    })
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = _run_config(args, "ensemble")
    report = run_ensemble(cfg.ensemble())
    report.config_hash = cfg.hash
    report.config = cfg.to_dict()
    path = write_json(Path(cfg.output_dir) / "ensemble.json", report.to_dict())
    _emit({"config_hash": cfg.hash, "report": str(path), "events": len(report.events)})
    return EXIT_OK


def cmd_verify(args) -> int:
    cutoffs = [int(v) for v in _float_list(args.Ns)]
    common = {"samples": args.samples, "seed": args.seed}
    if args.kind == "strichartz":
        params = {**common, "p": args.p, "T": args.T, "s": args.s}
    elif args.kind == "l4":
        params = {**common, "T": args.T, "s": args.s}
    elif args.kind == "product":
        params = {**common, "s": args.s, "r": args.r}
    else:
        params = {**common, "k": args.k, "s": args.s, "b": args.b, "bp": args.bp, "T": args.T}
    results = sweep(args.kind, cutoffs, d=args.d, **params)
    settings = {"kind": args.kind, "Ns": cutoffs, "d": args.d, **params}
    digest = config_hash(settings)
    out = Path(args.output_dir)
    write_ratios(out / f"{args.kind}.csv", results, digest, args.seed)
    summary = {
        "schema_version": 1,
        "config_hash": digest,
        "config": settings,
        "seed": args.seed,
        "profile": results[0].params["profile"] if results else None,
        "per_N": [stats.to_dict() for stats in results],
        "growth_factor": growth_factor(results) if len(results) > 1 else None,
    }
    write_json(out / f"{args.kind}.json", summary)
    _emit({"config_hash": digest, "growth_factor": summary["growth_factor"]})
    return EXIT_OK


def cmd_norms(args) -> int:
    traj = read_trajectory(args.trajectory)
    nl = NonlinearitySpec(args.k, Sign(args.sign))
    final = traj.final
    _emit({
        "samples": len(traj),
        "t": float(traj.times[-1]),
        "mass": mass(final),
        "energy": energy(final, nl),
        "sobolev": sobolev_norm(final, args.s),
        "fourier_lebesgue": fl_norm(final, args.s, args.r),
        "xsb": xsb_norm(traj, args.s, args.b) if len(traj) > 1 else None,
    })
    return EXIT_OK


def cmd_check_identity(args) -> int:
    if args.identity == "factorization":
        result = factorization_check(args.alpha, args.t, args.mu)
        _emit(result)
        return EXIT_OK if result["error"] <= 1e-8 * result["expected"] else EXIT_UNEXPECTED
    if args.identity == "isometry":
        op = SmoothingOperator.power_law(TorusSpec(args.d, args.N), args.a)
        result = isometry_check(op, args.s, args.t, args.dt, args.paths, args.seed)
        _emit({"t": result.times.tolist(), "mean": result.mean.tolist(), "se": result.se.tolist(),
               "expected": result.expected.tolist(), "within_3se": result.within()})
        return EXIT_OK
    if args.identity == "drift":
        cfg = _run_config(args, "ensemble")
        result = drift_check(cfg.ensemble())
        _emit({"t": result.times.tolist(), "residual": result.residual.tolist(), "se": result.se.tolist(),
               "slope": result.slope, "events": result.events, "within_3se": result.within()})
        return EXIT_OK
    report = read_json(args.report)
    recorded = report.get("config_hash")
    config = report.get("config")
    if config is None:
        raise ConfigError([f"{args.report}: report carries no embedded config"])
    if "kind" in config:
        recomputed = config_hash(config)
    else:
        recomputed = RunConfig.from_mapping(config, args.report).hash
    _emit({"recorded": recorded, "recomputed": recomputed, "match": recorded == recomputed})
    return EXIT_OK if recorded == recomputed else EXIT_UNEXPECTED


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
    "norms": cmd_norms,
    "check-identity": cmd_check_identity,
}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        _emit({"error": "invalid configuration", "messages": exc.messages}, sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        _emit({"error": "io", "messages": [str(exc)]}, sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        _emit({"error": type(exc).__name__, "messages": [str(exc)]}, sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected failure")
        _emit({"error": "unexpected", "messages": [str(exc)]}, sys.stderr)
        return EXIT_UNEXPECTED


def main():
    logging.basicConfig(
        level=os.environ.get("SNLS_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
