#!/usr/bin/env python3
"""End-to-end demo: rasterize a bundled scene, render it, score consistency.

Equivalent to:
    uvdiff rasterize scenes/orbit_cube.json out/gbufs
    uvdiff render out/gbufs out/render --steps 8 --latent-size 24
    uvdiff metrics out/render --intervals 1,3,5
"""

import argparse
import shutil
import sys
from pathlib import Path

from uvdiff.cli import main as cli_main

REPO = Path(__file__).resolve().parent.parent


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scene", default=str(REPO / "scenes" / "orbit_cube.json"))
    parser.add_argument("--out", default=str(REPO / "out" / "demo"))
    parser.add_argument("--steps", type=int, default=8)
    parser.add_argument("--latent-size", default="24")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--keep", action="store_true", help="fail instead of wiping --out")
    args = parser.parse_args(argv)

    out = Path(args.out)
    if out.exists():
        if args.keep:
            sys.exit(f"{out} already exists")
        shutil.rmtree(out)

    steps = [
        ["rasterize", args.scene, str(out / "gbufs"), "--width", "64", "--height", "64"],
        ["render", str(out / "gbufs"), str(out / "render"),
         "--steps", str(args.steps), "--latent-size", args.latent_size,
         "--seed", str(args.seed), "--dump-textures"],
        ["metrics", str(out / "render"), "--intervals", "1,3,5"],
    ]
    for argv in steps:
        print(f"$ uvdiff {' '.join(argv)}")
        code = cli_main(argv)
        if code != 0:
            sys.exit(code)
    print(f"\ndemo outputs in {out}")


if __name__ == "__main__":
    run()
