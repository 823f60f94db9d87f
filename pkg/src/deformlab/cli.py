"""Command line interface.

Subcommands:
  deform        warp one image (or emit the affine-approximation demo pairs)
  run           execute an experiment config (JSON) and write its manifest
  plot          render SVG charts for a finished experiment
  baseline-ntv  Monte-Carlo smoothness level of freshly initialized filters
  gradcheck     finite-difference validation of the training engine

Exit codes: 0 success, 1 bad configuration or arguments, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import traceback
from pathlib import Path

import numpy as np

from .data import DataError
from .deform import (
    DeformationSpec,
    DeformError,
    affine_to_displacements,
    deform_image,
    make_control_grid,
    tps_densify,
    warp,
)
from .harness import ConfigError, RunError, load_config, load_manifest, run_experiment
from .imgio import ImageIOError, read_image, write_image
from .metrics import MetricError, baseline_init_ntv
from .nn import DOWNSAMPLE_KINDS, gradient_check, init_network
from .plots import emit_plots
from .seeding import rng_from
from .synthetic import glyph_templates

BASELINE_LADDER = ((3, 3, 3, 32), (3, 3, 32, 32), (3, 3, 32, 64))


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); bad usage is exit 1 here
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deformlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("deform",
                       help="apply a random smooth deformation to an image")
    p.add_argument("--input", help="source image (.ppm/.pgm/.png)")
    p.add_argument("--output", help="destination image path")
    p.add_argument("--grid", type=int, default=3, help="control grid size k (default 3)")
    p.add_argument("--strength", type=float, default=2.0,
                   help="max control displacement C in pixels (default 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-field", metavar="CSV",
                   help="also write the dense field as H*W rows: r,c,drow,dcol")
    p.add_argument("--demo", choices=["affine"],
                   help="emit translation/rotation/pose approximation image pairs")
    p.add_argument("--outdir", default="affine-demo",
                   help="output directory for --demo (default affine-demo)")
    p.add_argument("--size", type=int, default=96, help="demo image size (default 96)")
    p.set_defaults(func=_cmd_deform)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", help="path to the experiment JSON")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plot", help="render charts for a manifest")
    p.add_argument("manifest", help="manifest.json (or its directory)")
    p.add_argument("--outdir", help="where to write SVGs (default: next to manifest)")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("baseline-ntv",
                       help="random-init smoothness level per filter shape")
    p.add_argument("--shape", action="append", metavar="H,W,IN,OUT",
                   help="filter tensor shape; repeatable (default: a 3x3 ladder)")
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every downsampling variant")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


# ---- deform ---------------------------------------------------------------


def _dump_field(path, field):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for r in range(field.height):
            for c in range(field.width):
                dr, dc = field.offsets[r, c]
                writer.writerow([r, c, f"{dr:.17g}", f"{dc:.17g}"])


_DEMO_MAPS = {
    "translation": (np.eye(2), (0.0, 6.0)),
    "rotation": (None, (0.0, 0.0)),  # rotation matrix built per size below
    "pose": (np.array([[1.06, 0.14], [-0.06, 0.94]]), (1.5, -1.0)),
}


def _cmd_deform(args) -> int:
    if args.demo == "affine":
        outdir = Path(args.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        size = args.size
        base = glyph_templates(2, size, 3, seed=args.seed)[0]
        center = ((size - 1) / 2.0, (size - 1) / 2.0)
        grid = make_control_grid(5, size, size)
        theta = np.deg2rad(10.0)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        for name, (mat, t) in _DEMO_MAPS.items():
            mat = rot if mat is None else mat
            cd = affine_to_displacements(mat, t, grid, center)
            field = tps_densify(cd, size, size)
            warped = warp(base, field)
            write_image(outdir / f"{name}-original.png", base)
            write_image(outdir / f"{name}-deformed.png", warped)
            print(f"wrote {outdir}/{name}-original.png and {name}-deformed.png")
        return 0
    if not args.input or not args.output:
        raise ConfigError("deform needs --input and --output (or --demo affine)")
    img = read_image(args.input)
    spec = DeformationSpec(args.grid, args.strength, args.seed)
    warped, field = deform_image(img, spec)
    write_image(args.output, warped)
    if args.dump_field:
        _dump_field(args.dump_field, field)
        print(f"wrote {args.output} and field {args.dump_field}")
    else:
        print(f"wrote {args.output}")
    return 0


# ---- run / plot -----------------------------------------------------------


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest = run_experiment(cfg)
    n_groups = len(manifest["results"])
    print(f"experiment {cfg.kind}: {n_groups} result groups, "
          f"{len(manifest['failures'])} failed seeds, "
          f"{manifest['wallclock_s']}s")
    for group in sorted(manifest["results"]):
        entry = manifest["results"][group]
        marker = "aggregate" if "aggregate" in entry else "per-seed only"
        print(f"  {group}: {len(entry['per_seed'])} seeds ({marker})")
    print(f"manifest: {manifest['manifest_path']}")
    return 0


def _cmd_plot(args) -> int:
    manifest = load_manifest(args.manifest)
    written = emit_plots(manifest, args.outdir)
    if not written:
        print("nothing to plot in this manifest")
        return 0
    for path in written:
        print(f"wrote {path}")
    return 0


# ---- baseline-ntv ---------------------------------------------------------


def _parse_shape(text: str):
    try:
        shape = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"bad shape {text!r}, expected H,W,IN,OUT") from None
    if len(shape) != 4 or any(s < 1 for s in shape):
        raise ConfigError(f"bad shape {text!r}, expected 4 positive ints H,W,IN,OUT")
    return shape


def _cmd_baseline(args) -> int:
    shapes = [_parse_shape(s) for s in args.shape] if args.shape else list(BASELINE_LADDER)
    print(f"resamples={args.resamples} seed={args.seed}")
    for shape in shapes:
        mean, std = baseline_init_ntv(shape, args.resamples, args.seed)
        label = "x".join(str(s) for s in shape)
        print(f"  {label}: mean={mean:.4f} std={std:.4f}")
    return 0


# ---- gradcheck ------------------------------------------------------------


def _cmd_gradcheck(args) -> int:
    rng = rng_from(args.seed, "cli-gradcheck")
    x = rng.normal(size=(3, 8, 8, 2))
    labels = rng.integers(0, 3, size=3)
    failed = []
    for kind in DOWNSAMPLE_KINDS:
        net = init_network("1x4", 3, kind, seed=args.seed, in_channels=2)
        report = gradient_check(net, (x, labels), tolerance=args.tolerance)
        verdict = "pass" if report.passed else "FAIL"
        print(f"  {kind:13s} max rel error {report.max_rel_error:.3e}  {verdict}")
        if not report.passed:
            failed.append(kind)
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}")
        return 2
    print(f"all {len(DOWNSAMPLE_KINDS)} variants within {args.tolerance:g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (RunError, DataError, DeformError, MetricError, ImageIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # unexpected failure: keep the traceback, exit 2
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
