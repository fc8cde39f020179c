#!/usr/bin/env python3
"""Fetch the pretrained weights the diffusers engine expects.

Requires network access and `huggingface_hub`. The mock engine needs
nothing; run this only when serving real models.
"""

import argparse
import sys

sys.path.insert(0, "src")

from instex_bridge.config import BridgeConfig


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--cache-dir", default=None)
    args = parser.parse_args()
    try:
        from huggingface_hub import snapshot_download
    except ImportError:
        print("huggingface_hub is not installed; pip install huggingface_hub",
              file=sys.stderr)
        return 1
    config = BridgeConfig()
    repos = [
        config.base_model,
        config.depth_control_model,
        config.inpaint_control_model,
        config.position_control_model,
        config.image_prompt_adapter,
    ]
    for repo in repos:
        print(f"fetching {repo} ...")
        snapshot_download(repo, cache_dir=args.cache_dir)
    print("done")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
