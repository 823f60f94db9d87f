#!/usr/bin/env python3
"""Run one experiment config end-to-end and render its charts.

Equivalent to `deformlab run CONFIG` followed by `deformlab plot`, with an
optional output-directory override so a stock config can be re-aimed without
editing it.
"""

import argparse
import sys
from dataclasses import replace

from deformlab.harness import load_config, run_experiment
from deformlab.plots import emit_plots


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", help="experiment JSON, e.g. scripts/configs/*.json")
    ap.add_argument("--outdir", help="override the config's output directory")
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.outdir:
        cfg = replace(cfg, outdir=args.outdir)
    manifest = run_experiment(cfg)
    print(f"manifest: {manifest['manifest_path']}")
    for seed, message in manifest["failures"].items():
        print(f"  seed {seed} failed: {message}", file=sys.stderr)
    if not args.no_plots:
        for name in emit_plots(manifest):
            print(f"chart: {name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
