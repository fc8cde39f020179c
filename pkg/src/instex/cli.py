"""Command-line surface.

    instex run --scene scene.json --style "Baroque" --backend stub --seed 7
    instex views --dump
    instex eval --scene-dir out/

Exit codes: 0 success, 2 config error, 3 backend error, 4 geometry error.
The INSTEX_BACKEND_URL environment variable supplies the default backend
when --backend is omitted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import BackendError, ConfigError, GeometryError
from .pipeline import PipelineConfig, replay_eval, run_pipeline
from .view_schedule import dump_schedules

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_GEOMETRY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="instex",
                                     description="Indoor-scene texture synthesis engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="texture a scene end to end")
    run_p.add_argument("--scene", required=True, help="scene manifest JSON")
    run_p.add_argument("--style", default="", help="style text (falls back to the manifest)")
    run_p.add_argument("--backend", default=None, help="'stub' or a bridge URL")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--atlas", type=int, default=1024, help="atlas resolution per object")
    run_p.add_argument("--img", type=int, default=512, help="synthesis image resolution")
    run_p.add_argument("--postprocess", action="store_true",
                       help="enable the whole-scene final pass")
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--room-kind", default="room",
                       help="room word for the global style prompt, e.g. 'bedroom'")
    run_p.add_argument("--no-view-dumps", action="store_true",
                       help="skip per-view debug PNGs")

    views_p = sub.add_parser("views", help="inspect the viewpoint schedules")
    views_p.add_argument("--dump", action="store_true", help="print schedules as JSON")
    views_p.add_argument("--room-step", type=float, default=45.0)

    eval_p = sub.add_parser("eval", help="re-render evaluation views for a finished run")
    eval_p.add_argument("--scene-dir", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            backend = args.backend or os.environ.get("INSTEX_BACKEND_URL", "stub")
            config = PipelineConfig(
                scene=args.scene,
                style=args.style,
                seed=args.seed,
                backend=backend,
                atlas_resolution=args.atlas,
                image_resolution=args.img,
                postprocess=args.postprocess,
                room_kind=args.room_kind,
                out_dir=args.out,
                save_views=not args.no_view_dumps,
            )
            manifest = run_pipeline(config)
            print(f"run complete: {len(manifest['objects'])} entries textured, "
                  f"{manifest['eval_renders']} eval renders -> {args.out}")
        elif args.command == "views":
            print(dump_schedules(args.room_step))
        elif args.command == "eval":
            images = replay_eval(args.scene_dir)
            print(f"wrote {len(images)} eval renders under {args.scene_dir}/scene")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as e:
        print(f"backend error: {e}", file=sys.stderr)
        return EXIT_BACKEND
    except GeometryError as e:
        print(f"geometry error: {e}", file=sys.stderr)
        return EXIT_GEOMETRY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
