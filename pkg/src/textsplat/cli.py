"""Command-line entry points.

Subcommands: generate (run the two-stage pipeline against a provider),
eval (re-render persisted Gaussians and score them), render (rasterize a
splat PLY from an arbitrary camera), export (re-emit a stored stage
cloud). Exit codes: 0 success, 2 configuration error, 3 provider or
transport error, 4 IO error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from textsplat.errors import (
    ConfigError,
    FormatError,
    InvalidArgumentError,
    ManifestError,
    PersistenceError,
    ProviderError,
)
from textsplat.geometry import CameraPose, intrinsics_from_fov
from textsplat.images import save_color_png
from textsplat.metrics import run_eval
from textsplat.pipeline import PipelineConfig, generate
from textsplat.ply import export_ply, import_ply
from textsplat.providers import (
    DepthPerturbation,
    SyntheticSceneSpec,
    oracle_provider,
    remote_provider,
)
from textsplat.splat import RenderSettings, rasterize


def _load_config(path: str, overrides: dict) -> PipelineConfig:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    data.update(overrides)
    return PipelineConfig.from_dict(data)


def _cmd_generate(args) -> int:
    overrides = {}
    if args.prompt is not None:
        overrides["prompt"] = args.prompt
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = _load_config(args.config, overrides)
    if args.provider == "synthetic":
        provider = oracle_provider(
            SyntheticSceneSpec.random(cfg.seed), DepthPerturbation(a=1.0, b=0.0)
        )
    else:
        if not args.gateway_url:
            raise ConfigError("--gateway-url is required with --provider remote")
        provider = remote_provider(args.gateway_url)
    generate(cfg, provider, args.out)
    print(f"wrote scene artifacts to {args.out}")
    return 0


def _cmd_eval(args) -> int:
    spec = None
    if args.against_oracle:
        config_path = Path(args.artifacts) / "config.json"
        try:
            seed = json.loads(config_path.read_text())["seed"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ManifestError(f"cannot recover scene seed from {config_path}: {exc}") from exc
        spec = SyntheticSceneSpec.random(int(seed))
    report = run_eval(args.artifacts, spec)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _parse_pose(text: str) -> CameraPose:
    parts = text.split(",")
    if len(parts) != 6:
        raise ConfigError("--pose expects yaw,pitch,roll,tx,ty,tz")
    try:
        yaw, pitch, roll, tx, ty, tz = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad --pose value: {exc}") from exc
    cy, sy = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    cp, sp = math.cos(math.radians(pitch)), math.sin(math.radians(pitch))
    cr, sr = math.cos(math.radians(roll)), math.sin(math.radians(roll))
    r_yaw = np.array([[cy, 0.0, -sy], [0.0, 1.0, 0.0], [sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]])
    r_roll = np.array([[cr, sr, 0.0], [-sr, cr, 0.0], [0.0, 0.0, 1.0]])
    rotation = r_roll @ r_pitch @ r_yaw
    center = np.array([tx, ty, tz])
    return CameraPose(rotation=rotation, translation=-rotation @ center)


def _parse_size(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError("--size expects WxH, e.g. 704x512")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"bad --size value: {exc}") from exc
    if w < 1 or h < 1:
        raise ConfigError("--size dimensions must be positive")
    return w, h


def _cmd_render(args) -> int:
    cloud = import_ply(args.ply)
    pose = _parse_pose(args.pose)
    width, height = _parse_size(args.size)
    intr = intrinsics_from_fov(args.fov, width, height)
    out = rasterize(cloud, pose, intr, RenderSettings())
    save_color_png(out.image, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_export(args) -> int:
    source = Path(args.artifacts) / f"gaussians_{args.stage}.ply"
    if not source.exists():
        raise ManifestError(f"missing artifact {source}")
    cloud = import_ply(source)
    export_ply(cloud, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textsplat")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="run the two-stage synthesis pipeline")
    p.add_argument("--config", required=True, help="JSON pipeline config")
    p.add_argument("--prompt", default=None, help="override the config prompt")
    p.add_argument("--provider", choices=("synthetic", "remote"), default="synthetic")
    p.add_argument("--gateway-url", default=None, help="base URL for --provider remote")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="score persisted Gaussians against stored targets")
    p.add_argument("--artifacts", required=True, help="directory written by generate")
    p.add_argument(
        "--against-oracle",
        action="store_true",
        help="also score against fresh oracle renders of the seeded scene",
    )
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("render", help="rasterize a splat PLY from a camera")
    p.add_argument("--ply", required=True, help="splat PLY file")
    p.add_argument(
        "--pose",
        required=True,
        help="yaw,pitch,roll in degrees plus camera position tx,ty,tz",
    )
    p.add_argument("--fov", type=float, default=55.0, help="vertical field of view")
    p.add_argument("--size", default="704x512", help="image size WxH")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("export", help="re-emit a stored stage cloud as PLY")
    p.add_argument("--artifacts", required=True, help="directory written by generate")
    p.add_argument("--stage", choices=("g1", "g2"), required=True)
    p.add_argument("--out", required=True, help="output PLY path")
    p.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return 3
    except PersistenceError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        if exc.partial_manifest:
            print(f"partial artifacts: {exc.partial_manifest}", file=sys.stderr)
        return 4
    except (ManifestError, FormatError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
