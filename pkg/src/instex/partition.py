"""Dynamic view partitioning: generate/update/keep regions and their
denoising budgets.

Every foreground pixel is classified by its front-most texel: unwritten
texels need new content (GENERATE), texels stored at a poor angle that
this view sees better get re-denoised lightly (UPDATE), everything else is
preserved verbatim (KEEP). The update band naturally falls at boundaries
between previously covered and newly revealed surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError
from .raster import CorrespondenceMap
from .scene_model import TexelState, TextureAtlas


class Region(IntEnum):
    BACKGROUND = 0
    GENERATE = 1
    UPDATE = 2
    KEEP = 3


@dataclass(frozen=True)
class PartitionPolicy:
    # stored confidence below this marks a texel as improvable
    tau_update: float = 0.5
    # GENERATE grows this many pixels into adjacent UPDATE area so the
    # inpainting model never sees slivers it cannot fill
    generate_dilation_px: int = 3

    def __post_init__(self):
        if not 0.0 <= self.tau_update <= 1.0:
            raise ConfigError(f"tau_update must be in [0, 1], got {self.tau_update}")


@dataclass(frozen=True)
class DenoiseSpec:
    """Diffusion budget: step count and the noise fraction applied to init."""

    steps: int
    strength: float

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not 0.0 <= self.strength <= 1.0:
            raise ConfigError(f"strength must be in [0, 1], got {self.strength}")
        if (self.steps == 0) != (self.strength == 0.0):
            raise ConfigError("steps == 0 exactly when strength == 0")


GENERATE_SPEC = DenoiseSpec(steps=50, strength=1.0)
UPDATE_SPEC = DenoiseSpec(steps=10, strength=0.2)
KEEP_SPEC = DenoiseSpec(steps=0, strength=0.0)


@dataclass
class RegionMask:
    region: np.ndarray  # (H, W) uint8 of Region values

    @property
    def resolution(self) -> tuple[int, int]:
        return self.region.shape

    def count(self, r: Region) -> int:
        return int(np.count_nonzero(self.region == r))

    def counts(self) -> dict:
        return {r.name.lower(): self.count(r) for r in Region}


def classify_view(atlas: TextureAtlas, corr: CorrespondenceMap,
                  policy: PartitionPolicy = PartitionPolicy()) -> RegionMask:
    """Partition one view's pixels into BACKGROUND/GENERATE/UPDATE/KEEP.

    A pixel is UPDATE only when its texel is stored below tau_update AND
    this view strictly improves on the stored cosine; re-classifying a view
    right after projecting it therefore yields all-KEEP.
    """
    if corr.atlas_resolution != atlas.resolution:
        raise ConfigError(
            f"correspondence atlas resolution {corr.atlas_resolution} does not "
            f"match atlas {atlas.resolution}"
        )
    h, w = corr.image_resolution
    region = np.full((h, w), Region.BACKGROUND, dtype=np.uint8)
    fg = corr.pix_mask
    if not fg.any():
        return RegionMask(region=region)
    rows = corr.pix_texel_row[fg]
    cols = corr.pix_texel_col[fg]
    state = atlas.state[rows, cols]
    conf = atlas.confidence[rows, cols]
    cos = corr.pix_cosine[fg]

    cls = np.full(state.shape, Region.KEEP, dtype=np.uint8)
    cls[state == TexelState.UNWRITTEN] = Region.GENERATE
    improvable = (state != TexelState.UNWRITTEN) & (conf < policy.tau_update) & (cos > conf)
    cls[improvable] = Region.UPDATE
    region[fg] = cls

    if policy.generate_dilation_px > 0:
        gen = region == Region.GENERATE
        grown = _dilate(gen, policy.generate_dilation_px)
        region[grown & (region == Region.UPDATE)] = Region.GENERATE
    return RegionMask(region=region)


def _dilate(mask: np.ndarray, iterations: int) -> np.ndarray:
    out = mask.copy()
    for _ in range(iterations):
        grown = out.copy()
        grown[1:, :] |= out[:-1, :]
        grown[:-1, :] |= out[1:, :]
        grown[:, 1:] |= out[:, :-1]
        grown[:, :-1] |= out[:, 1:]
        grown[1:, 1:] |= out[:-1, :-1]
        grown[1:, :-1] |= out[:-1, 1:]
        grown[:-1, 1:] |= out[1:, :-1]
        grown[:-1, :-1] |= out[1:, 1:]
        out = grown
    return out


def denoise_policy(region: Region) -> DenoiseSpec:
    """Per-region diffusion budget: full generation, light touch-up, or none."""
    if region == Region.GENERATE:
        return GENERATE_SPEC
    if region == Region.UPDATE:
        return UPDATE_SPEC
    if region == Region.KEEP:
        return KEEP_SPEC
    raise ValueError(f"no denoise policy for region {region!r}")


def region_debug_png(mask: RegionMask) -> bytes:
    """Debug PNG: BACKGROUND 0, GENERATE 255, UPDATE 128, KEEP 64."""
    import io

    from PIL import Image

    img = region_to_gray(mask.region)
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


_REGION_GRAY = np.zeros(256, dtype=np.uint8)
_REGION_GRAY[Region.GENERATE] = 255
_REGION_GRAY[Region.UPDATE] = 128
_REGION_GRAY[Region.KEEP] = 64


def region_to_gray(region: np.ndarray) -> np.ndarray:
    return _REGION_GRAY[region]


def gray_to_region(gray: np.ndarray) -> np.ndarray:
    """Inverse of region_to_gray; used when masks travel as PNGs."""
    region = np.full(gray.shape, Region.BACKGROUND, dtype=np.uint8)
    region[gray == 255] = Region.GENERATE
    region[gray == 128] = Region.UPDATE
    region[gray == 64] = Region.KEEP
    return region
