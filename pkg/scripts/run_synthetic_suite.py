#!/usr/bin/env python3
"""Run every experiment that needs no downloaded dataset.

Covers the five experiment kinds using the synthetic probe and template
sources, writing results/ and charts for each.  With --quick the configs are
shrunk (two seeds, one epoch, small nets) to smoke-test the whole pipeline
in about a minute instead of an hour.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from deformlab.harness import config_from_dict, run_experiment
from deformlab.plots import emit_plots

CONFIG_DIR = Path(__file__).parent / "configs"
SYNTHETIC_CONFIGS = (
    "init_sensitivity_synthetic.json",
    "smooth_init_sweep.json",
    "synthetic_sweep_glyphs.json",
    "train_then_probe_glyphs.json",
    "random_labels_glyphs.json",
)


def _shrink(raw: dict) -> dict:
    raw = dict(raw)
    raw["outdir"] = raw["outdir"] + "-quick"
    raw["seeds"] = [0, 1]
    raw["probe_count"] = 16
    if raw["arch"].count(",") > 1:
        raw["arch"] = "1x8,1x16"
    if "hyper" in raw:
        raw["hyper"] = dict(raw["hyper"], epochs=1)
    if raw["dataset"].get("n_per_class"):
        raw["dataset"] = dict(raw["dataset"], n_per_class=20, test_per_class=10)
    if raw.get("strengths"):
        raw["strengths"] = raw["strengths"][:2]
    return raw


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="small smoke-test variants")
    ap.add_argument("--only", help="run just the configs whose name contains this")
    args = ap.parse_args()

    failures = 0
    for name in SYNTHETIC_CONFIGS:
        if args.only and args.only not in name:
            continue
        raw = json.loads((CONFIG_DIR / name).read_text())
        if args.quick:
            raw = _shrink(raw)
        t0 = time.time()
        print(f"== {name} -> {raw['outdir']}", flush=True)
        try:
            manifest = run_experiment(config_from_dict(raw))
        except Exception as exc:  # noqa: BLE001 - keep the suite going
            print(f"   FAILED: {type(exc).__name__}: {exc}", file=sys.stderr)
            failures += 1
            continue
        emit_plots(manifest)
        print(f"   done in {time.time() - t0:.0f}s ({manifest['wallclock_s']}s in harness)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
