#!/usr/bin/env python3
"""Emit image pairs showing smooth fields approximating affine transforms.

Writes {translation,rotation,pose}-{original,deformed}.png to --outdir, the
same output as `deformlab deform --demo affine`.
"""

import argparse
import sys

from deformlab.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="results/affine-demo")
    ap.add_argument("--size", type=int, default=96)
    args = ap.parse_args()
    return cli_main(["deform", "--demo", "affine",
                     "--outdir", args.outdir, "--size", str(args.size)])


if __name__ == "__main__":
    sys.exit(main())
