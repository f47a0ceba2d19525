#!/usr/bin/env python3
"""
Run the pilot estimate sweeps and pin their growth factors in
data/pilot_thresholds.yaml.

Each entry records the cutoffs and parameters of one sweep, the max LHS/RHS
ratio per N and the growth factor from the smallest to the largest N, plus a
threshold 10% above the observed growth (never below 1.10). Rerun after
changing an estimate sampler; the slow sweep tests compare against this file.

Env:
  SNLS_LOG_LEVEL - logging level (default: INFO)

Usage:
  python scripts/pilot_sweeps.py
  python scripts/pilot_sweeps.py --samples 200 --only strichartz,l4
"""
import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "app"))

from estimates import growth_factor, sweep  # noqa: E402
from models import EstimateError  # noqa: E402

DEFAULT_DATA_DIR = Path(__file__).resolve().parent.parent / "data"
THRESHOLD_MARGIN = 1.10

PILOTS = {
    "strichartz": {"cutoffs": [8, 16, 32, 64], "params": {"p": 6.0, "T": 1.0}},
    "l4": {"cutoffs": [8, 16, 32], "params": {"T": 1.0}},
    "product": {"cutoffs": [8, 16, 32, 64], "params": {"s": 0.4, "r": 1.5}},
}


def run_pilot(kind: str, samples: int, seed: int) -> dict:
    pilot = PILOTS[kind]
    results = sweep(kind, pilot["cutoffs"], samples=samples, seed=seed, **pilot["params"])
    growth = growth_factor(results)
    return {
        "cutoffs": list(pilot["cutoffs"]),
        "params": dict(pilot["params"]),
        "samples": samples,
        "seed": seed,
        "max_ratio": {r.cutoff: r.max for r in results},
        "growth": growth,
        "threshold": max(growth, 1.0) * THRESHOLD_MARGIN,
    }


def main() -> None:
    parser = argparse.ArgumentParser(description="Pin estimate growth thresholds from a pilot sweep")
    parser.add_argument("--data-dir", type=Path, default=DEFAULT_DATA_DIR,
                        help=f"Output directory (default: {DEFAULT_DATA_DIR})")
    parser.add_argument("--samples", type=int, default=200,
                        help="Random profiles per N (default: 200)")
    parser.add_argument("--seed", type=int, default=0,
                        help="Base seed for every sweep (default: 0)")
    parser.add_argument("--only", default=",".join(PILOTS),
                        help="Comma-separated estimates to run (default: all)")
    args = parser.parse_args()

    logging.basicConfig(
        level=os.environ.get("SNLS_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    kinds = [k.strip() for k in args.only.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in PILOTS]
    if unknown:
        print(f"Error: no pilot for {', '.join(unknown)}", file=sys.stderr)
        sys.exit(2)

    try:
        thresholds = {kind: run_pilot(kind, args.samples, args.seed) for kind in kinds}
        args.data_dir.mkdir(parents=True, exist_ok=True)
        out = args.data_dir / "pilot_thresholds.yaml"
        out.write_text(yaml.safe_dump({"schema_version": 1, "estimates": thresholds}, sort_keys=True))
    except EstimateError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(2)
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(3)
    print(f"Wrote {out}")


if __name__ == "__main__":
    main()
