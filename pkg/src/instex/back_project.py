"""Back-projection: transfer a synthesized view image onto the atlas.

Fusion is best-cosine-wins: a texel keeps whichever view saw it most
head-on, which suppresses the stretched smears oblique projections leave
behind. Projection never writes texels below the minimum-cosine floor or
texels invisible in the view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .partition import Region, RegionMask
from .raster import CorrespondenceMap
from .scene_model import TexelState, TextureAtlas

# Below this view angle a projection is deferred to later views or to
# refinement inpainting rather than smeared across the surface.
TAU_PROJ_DEFAULT = 0.2

GUTTER_ITERATIONS = 2

# 8-neighborhood offsets in deterministic nearest-first order
_GUTTER_OFFSETS = sorted(
    ((di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)),
    key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]),
)


@dataclass
class ProjectionReport:
    texels_written: int
    texels_skipped: int


def project_image(image: np.ndarray, corr: CorrespondenceMap, mask: RegionMask,
                  atlas: TextureAtlas, tau_proj: float = TAU_PROJ_DEFAULT) -> ProjectionReport:
    """Write a view image into the atlas at every eligible visible texel.

    Eligible: the texel's landing pixel is GENERATE or UPDATE, its cosine
    clears tau_proj, and it strictly beats the stored confidence. KEPT
    texels keep their state (colors may still improve); KEEP-region pixels
    are never sources.
    """
    h, w = corr.image_resolution
    if image.shape[:2] != (h, w):
        raise ConfigError(f"image resolution {image.shape[:2]} != view {(h, w)}")
    if mask.resolution != (h, w):
        raise ConfigError(f"mask resolution {mask.resolution} != view {(h, w)}")
    if corr.atlas_resolution != atlas.resolution:
        raise ConfigError("correspondence was built for a different atlas resolution")

    table = atlas.table
    vis = corr.tex_visible
    if not vis.any():
        return ProjectionReport(0, 0)
    idx = np.nonzero(vis)[0]
    pr = corr.tex_pix_row[idx]
    pc = corr.tex_pix_col[idx]
    region = mask.region[pr, pc]
    considered = (region == Region.GENERATE) | (region == Region.UPDATE)
    idx = idx[considered]
    considered_count = len(idx)
    if not considered_count:
        return ProjectionReport(0, 0)
    rows = table.rows[idx]
    cols = table.cols[idx]
    cos = corr.tex_cosine[idx]
    stored = atlas.confidence[rows, cols]
    write = (cos >= tau_proj) & (cos > stored)
    idx = idx[write]
    rows, cols, cos = rows[write], cols[write], cos[write]
    region = mask.region[corr.tex_pix_row[idx], corr.tex_pix_col[idx]]
    if len(idx):
        atlas.color[rows, cols] = image[corr.tex_pix_row[idx], corr.tex_pix_col[idx]]
        atlas.confidence[rows, cols] = cos
        old = atlas.state[rows, cols]
        new = old.copy()
        new[old == TexelState.UNWRITTEN] = TexelState.GENERATED
        promotable = (old == TexelState.GENERATED) | (old == TexelState.UPDATED)
        new[promotable & (region == Region.UPDATE)] = TexelState.UPDATED
        atlas.apply_states(rows, cols, new, phase="sweep")
    return ProjectionReport(
        texels_written=len(idx),
        texels_skipped=considered_count - len(idx),
    )


def finalize_object(atlas: TextureAtlas) -> TextureAtlas:
    """Post-sweep cleanup: promote written texels to KEPT and bleed chart
    boundary colors two texels into the invalid gutter.

    UNWRITTEN valid texels stay UNWRITTEN; they form the refinement
    inpaint mask.
    """
    written = (atlas.state == TexelState.GENERATED) | (atlas.state == TexelState.UPDATED)
    rows, cols = np.nonzero(written)
    if len(rows):
        atlas.apply_states(rows, cols, np.uint8(TexelState.KEPT), phase="sweep")

    filled = atlas.valid & (atlas.state != TexelState.UNWRITTEN)
    h, w = atlas.resolution
    for _ in range(GUTTER_ITERATIONS):
        target = ~atlas.valid & ~filled
        if not target.any():
            break
        new_fill = np.zeros((h, w), dtype=bool)
        src_of = np.zeros((h, w, 2), dtype=np.int32)
        for di, dj in _GUTTER_OFFSETS:
            sr0, sr1 = max(0, di), min(h, h + di)
            dr0, dr1 = max(0, -di), min(h, h - di)
            sc0, sc1 = max(0, dj), min(w, w + dj)
            dc0, dc1 = max(0, -dj), min(w, w - dj)
            window = np.zeros((h, w), dtype=bool)
            window[dr0:dr1, dc0:dc1] = filled[sr0:sr1, sc0:sc1]
            take = target & window & ~new_fill
            if take.any():
                rr, cc = np.nonzero(take)
                src_of[rr, cc, 0] = rr + di
                src_of[rr, cc, 1] = cc + dj
                new_fill |= take
        if not new_fill.any():
            break
        rr, cc = np.nonzero(new_fill)
        atlas.color[rr, cc] = atlas.color[src_of[rr, cc, 0], src_of[rr, cc, 1]]
        filled = filled | new_fill
    return atlas
