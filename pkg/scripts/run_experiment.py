#!/usr/bin/env python3
"""Run the experiment pipeline end to end and record per-stage wall times.

Stages (in order): train-models, build-attack-datasets, evaluate-detectors.
Each stage is the corresponding `dmdetect` subcommand; `times.json` in the
output directory accumulates the wall-clock seconds per stage.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from dmdetect.cli import main as cli_main
from dmdetect.config import load_config

STAGES = ["train-models", "build-attack-datasets", "evaluate-detectors"]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True, help="key=value config file")
    ap.add_argument(
        "--stages",
        default="all",
        help="comma-separated stage subset, or 'all'",
    )
    ap.add_argument("-v", "--verbose", action="store_true")
    a = ap.parse_args(argv)
    stages = STAGES if a.stages == "all" else a.stages.split(",")
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        print(f"unknown stages: {unknown}", file=sys.stderr)
        return 1

    cfg = load_config(a.config)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    times_path = out / "times.json"
    times = json.loads(times_path.read_text()) if times_path.exists() else {}

    for stage in stages:
        stage_argv = [stage, "--config", a.config]
        if a.verbose:
            stage_argv.append("-v")
        print(f"=== {stage} ===", flush=True)
        t0 = time.time()
        rc = cli_main(stage_argv)
        if rc != 0:
            print(f"{stage} failed with exit code {rc}", file=sys.stderr)
            return rc
        times[stage] = time.time() - t0
        times_path.write_text(json.dumps(times, indent=2))
        print(f"{stage}: {times[stage]:.1f}s", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
