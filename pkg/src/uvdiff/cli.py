"""Command line entry point: rasterize / render / metrics / selftest.

Outputs are staged to a temporary directory and renamed into place on
success, so a failed run never leaves partial results. Exit codes: 0 ok,
2 config error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import formats, metrics
from .config import RENDER_MANIFEST_KIND, RunConfig, load_run_config
from .denoiser import init_toy_model, karras_sigmas
from .errors import ConfigError, NumericError
from .pipeline import render_sequence
from .rasterizer import rasterize_sequence
from .scene import parse_scene

log = logging.getLogger("uvdiff")

GBUFFER_PATTERN = "gbuffer_{:04d}.gbuf"
LATENT_PATTERN = "latent_{:04d}.latf"
IMAGE_PATTERN = "frame_{:04d}.png"


@contextlib.contextmanager
def staged_output(out_dir: Path):
    """Stage files in a sibling temp dir; rename to out_dir on success."""
    out_dir = Path(out_dir)
    if out_dir.exists():
        raise FileExistsError(f"output directory {out_dir} already exists")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=".stage-"))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    os.rename(tmp, out_dir)


def _indexed_files(directory: Path, pattern: str, suffix: str) -> list[Path]:
    """Collect pattern-named files with contiguous indices from 0."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    found = {}
    stem_prefix = pattern.split("{")[0]
    for path in directory.iterdir():
        if path.name.startswith(stem_prefix) and path.suffix == suffix:
            try:
                index = int(path.stem[len(stem_prefix):])
            except ValueError:
                continue
            found[index] = path
    if not found:
        raise ConfigError(f"no {stem_prefix}*{suffix} files in {directory}")
    count = max(found) + 1
    missing = [i for i in range(count) if i not in found]
    if missing:
        raise ConfigError(f"{directory}: missing frame indices {missing}")
    return [found[i] for i in range(count)]


# ---------------------------------------------------------------------------
# rasterize
# ---------------------------------------------------------------------------

def cmd_rasterize(args) -> int:
    scene = parse_scene(args.scene)
    gbuffers = rasterize_sequence(scene, args.width, args.height)
    out_dir = Path(args.out)
    with staged_output(out_dir) as tmp:
        entries = []
        for i, gbuf in enumerate(gbuffers):
            name = GBUFFER_PATTERN.format(i)
            formats.write_gbuffer(gbuf, tmp / name)
            entries.append({"name": name, "sha256": formats.sha256_file(tmp / name)})
        formats.write_json(
            {
                "kind": "uvdiff-gbuffer-set",
                "scene": str(args.scene),
                "width": args.width,
                "height": args.height,
                "frames": scene.frame_count,
                "files": entries,
            },
            tmp / "manifest.json",
        )
    print(f"wrote {scene.frame_count} G-buffer frames to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------

def _apply_overrides(config: RunConfig, args) -> RunConfig:
    doc = config.to_dict()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.alpha is not None:
        doc["alpha"] = args.alpha
    if args.keyframes is not None:
        doc["keyframes"] = args.keyframes
    if args.steps is not None:
        doc["steps"] = args.steps
    if args.texres is not None:
        doc["texel_resolution"] = args.texres
    if args.model is not None:
        doc["model"] = args.model
    if args.background_noise is not None:
        doc["background_noise"] = args.background_noise
    if args.latent_size is not None:
        size_arg = args.latent_size.lower()
        try:
            if "x" in size_arg:
                w, h = size_arg.split("x", 1)
                doc["latent_width"], doc["latent_height"] = int(w), int(h)
            else:
                doc["latent_width"] = doc["latent_height"] = int(size_arg)
        except ValueError as exc:
            raise ConfigError(f"bad --latent-size {args.latent_size!r}") from exc
    return RunConfig.from_dict(doc, context="cli overrides")


def cmd_render(args) -> int:
    config = load_run_config(args.config) if args.config else RunConfig()
    config = _apply_overrides(config, args)

    gbuf_paths = _indexed_files(Path(args.gbuffers), GBUFFER_PATTERN, ".gbuf")
    gbuffers = [formats.read_gbuffer(p) for p in gbuf_paths]
    dims = {(g.height, g.width) for g in gbuffers}
    if len(dims) != 1:
        raise ConfigError(f"inconsistent G-buffer dimensions: {sorted(dims)}")
    height, width = next(iter(dims))
    if config.latent_width > width or config.latent_height > height:
        raise ConfigError(
            f"latent size {config.latent_width}x{config.latent_height} exceeds "
            f"G-buffer size {width}x{height}"
        )
    if config.keyframes > len(gbuffers):
        raise ConfigError(
            f"config asks for {config.keyframes} keyframes, only {len(gbuffers)} frames"
        )

    model = init_toy_model(config.seed, config.model_config())
    out_dir = Path(args.out)
    started = time.perf_counter()
    with staged_output(out_dir) as tmp:
        result = render_sequence(
            gbuffers,
            config,
            model,
            texture_dump_dir=(tmp / "textures") if args.dump_textures else None,
        )
        latent_entries, image_entries = [], []
        for i, latent in enumerate(result.latents):
            if not np.all(np.isfinite(latent)):
                raise NumericError(f"frame {i}: non-finite latent values")
            name = LATENT_PATTERN.format(i)
            formats.write_latent(latent, tmp / name)
            latent_entries.append({"name": name, "sha256": formats.sha256_file(tmp / name)})
            img_name = IMAGE_PATTERN.format(i)
            formats.write_image(formats.latent_to_rgb(latent), tmp / img_name)
            image_entries.append({"name": img_name, "sha256": formats.sha256_file(tmp / img_name)})
        wall = time.perf_counter() - started
        config_doc = config.to_dict()
        formats.write_json(
            {
                "kind": RENDER_MANIFEST_KIND,
                "config": config_doc,
                "config_sha256": formats.sha256_text(formats.canonical_json(config_doc)),
                "gbuffer_dir": str(args.gbuffers),
                "gbuffer_sha256": [formats.sha256_file(p) for p in gbuf_paths],
                "frames": len(result.latents),
                "keyframe_history": result.keyframe_history,
                "wall_time_s": wall,
                "outputs": {"latents": latent_entries, "images": image_entries},
            },
            tmp / "manifest.json",
        )
    print(f"rendered {len(gbuffers)} frames to {out_dir} in {wall:.2f}s")
    return 0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def cmd_metrics(args) -> int:
    paths = _indexed_files(Path(args.frames), LATENT_PATTERN, ".latf")
    frames = [formats.read_latent(p) for p in paths]
    try:
        intervals = [int(v) for v in args.intervals.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --intervals {args.intervals!r}") from exc
    if not intervals or any(d < 1 for d in intervals):
        raise ConfigError("intervals must be positive integers")
    too_long = [d for d in intervals if len(frames) < d + 1]
    if too_long:
        raise ConfigError(
            f"{len(frames)} frames cannot support intervals {too_long}"
        )
    report = metrics.consistency_report(frames, intervals)
    for d in intervals:
        print(f"frame_consistency[interval={d}] = {report[d]:.6f}")
    print("prompt_fidelity = n/a")
    doc = {
        "kind": "uvdiff-metrics",
        "frames": len(frames),
        "frame_consistency": {str(d): report[d] for d in intervals},
        "prompt_fidelity": "n/a",
    }
    out_path = Path(args.out) if args.out else Path(args.frames) / "metrics.json"
    with tempfile.NamedTemporaryFile(
        "w", dir=out_path.parent, prefix=".metrics-", delete=False
    ) as fh:
        fh.write(formats.canonical_json(doc) + "\n")
    os.replace(fh.name, out_path)
    print(f"wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# selftest
# ---------------------------------------------------------------------------

def _selftest_scene():
    from .scene import AnimatedScene, MeshObject, look_at_pose

    quad = MeshObject(
        object_id=1,
        vertices_per_frame=np.array(
            [[[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]]]
        ),
        uvs=np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
        faces=np.array([[0, 1, 2], [0, 2, 3]]),
        uv_faces=np.array([[0, 1, 2], [0, 2, 3]]),
    )
    pose = look_at_pose([0, 0, -3], [0, 0, 0], [0, 1, 0], fov_y=1.0, near=0.1, far=50.0)
    return AnimatedScene([quad], [pose] * 4, 4)


def cmd_selftest(args) -> int:
    del args
    failures = 0

    def check(name: str, fn):
        nonlocal failures
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - selftest reports, not crashes
            failures += 1
            print(f"FAIL {name}: {exc}")

    def _karras():
        sched = karras_sigmas(10, 0.1, 10.0, 7.0)
        assert np.all(np.diff(sched.sigmas) < 0) and sched.sigmas[-1] == 0.0

    def _static_render():
        scene = _selftest_scene()
        config = RunConfig(steps=3, keyframes=2, latent_width=16, latent_height=16)
        result = render_sequence(scene, config)
        first = result.latents[0]
        assert all(np.array_equal(first, z) for z in result.latents[1:])

    def _determinism():
        scene = _selftest_scene()
        config = RunConfig(steps=3, keyframes=1, latent_width=16, latent_height=16, seed=7)
        a = render_sequence(scene, config)
        b = render_sequence(scene, config)
        assert all(np.array_equal(x, y) for x, y in zip(a.latents, b.latents))

    def _metrics_unity():
        frame = np.ones((8, 8, 4))
        score = metrics.frame_consistency([frame] * 6, interval=1)
        assert abs(score - 1.0) < 1e-9

    check("karras schedule monotone", _karras)
    check("static scene renders identical frames", _static_render)
    check("render is deterministic", _determinism)
    check("metrics report unity on identical frames", _metrics_unity)
    if failures:
        print(f"{failures} selftest check(s) failed")
        return 4
    print("all selftest checks passed")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvdiff",
        description="Render animated scenes to consistent frame sequences "
        "via UV-guided multi-frame diffusion sampling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_rast = sub.add_parser("rasterize", help="render scene G-buffers")
    p_rast.add_argument("scene", help="scene description file")
    p_rast.add_argument("out", help="output directory (must not exist)")
    p_rast.add_argument("--width", type=int, default=64)
    p_rast.add_argument("--height", type=int, default=64)
    p_rast.set_defaults(func=cmd_rasterize)

    p_rend = sub.add_parser("render", help="sample frames from G-buffers")
    p_rend.add_argument("gbuffers", help="directory of gbuffer_*.gbuf files")
    p_rend.add_argument("out", help="output directory (must not exist)")
    p_rend.add_argument("--config", help="run config or previous run manifest")
    p_rend.add_argument("--seed", type=int)
    p_rend.add_argument("--alpha", type=float)
    p_rend.add_argument("--keyframes", type=int)
    p_rend.add_argument("--steps", type=int)
    p_rend.add_argument("--texres", type=int)
    p_rend.add_argument("--latent-size", help="N or WxH")
    p_rend.add_argument("--model", help="toy | identity | blur | linear")
    p_rend.add_argument("--background-noise", help="fixed | per-frame")
    p_rend.add_argument("--dump-textures", action="store_true",
                        help="write blended feature textures per step")
    p_rend.set_defaults(func=cmd_render)

    p_metr = sub.add_parser("metrics", help="frame consistency report")
    p_metr.add_argument("frames", help="directory of latent_*.latf files")
    p_metr.add_argument("--intervals", default="1,5,10,15,20")
    p_metr.add_argument("--out", help="report path (default: <frames>/metrics.json)")
    p_metr.set_defaults(func=cmd_metrics)

    p_self = sub.add_parser("selftest", help="quick built-in health checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("UVDIFF_LOG_LEVEL", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ValueError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
