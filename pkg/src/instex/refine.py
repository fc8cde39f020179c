"""UV-space refinement: position maps, inpaint masks, and the final passes.

The coarse sweep leaves two kinds of defects: texels no view ever reached
(self-occlusion) and texels only seen at grazing angles. Refinement fixes
both in UV space with a single synthesis call per object, conditioned on a
position map - per-texel 3D surface coordinates stored as an image - which
gives the generator 3D adjacency across chart seams that plain UV pixels
cannot express.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .partition import DenoiseSpec, Region, RegionMask
from .scene_model import Mesh, TexelState, TextureAtlas
from .synthesis import Mode, SynthesisRequest, synthesize

logger = logging.getLogger(__name__)

# Texels stored below this confidence (best cosine over the sweep) get
# re-synthesized during refinement along with the unwritten ones.
TAU_REFINE_DEFAULT = 0.3

CANONICAL_TOL = 1e-6

POSTPROCESS_SPEC = DenoiseSpec(steps=10, strength=0.2)


@dataclass
class PositionMap:
    """Canonical surface coordinates per texel, remapped from
    [-0.5, 0.5]^3 to [0, 1]^3 by adding 0.5; invalid texels hold zeros."""

    position: np.ndarray  # (H, W, 3) float64 in [0, 1]
    valid: np.ndarray  # (H, W) bool, identical to the atlas valid mask

    @property
    def resolution(self) -> tuple[int, int]:
        return self.position.shape[:2]


def position_map(mesh: Mesh, atlas: TextureAtlas) -> PositionMap:
    """Bake barycentric surface points into the atlas grid.

    The mesh must be canonical (bbox inside [-0.5, 0.5]^3) so that the
    +0.5 remap lands every value in [0, 1].
    """
    lo, hi = mesh.bbox()
    if lo.min() < -0.5 - CANONICAL_TOL or hi.max() > 0.5 + CANONICAL_TOL:
        raise GeometryError(
            f"mesh is not canonical: bbox [{lo.tolist()}, {hi.tolist()}] "
            "exceeds [-0.5, 0.5]^3"
        )
    if atlas.num_triangles != mesh.num_triangles:
        raise GeometryError("atlas was built for a different mesh")
    h, w = atlas.resolution
    pos = np.zeros((h, w, 3), dtype=np.float64)
    table = atlas.table
    pos[table.rows, table.cols] = np.clip(table.point + 0.5, 0.0, 1.0)
    return PositionMap(position=pos, valid=atlas.valid)


def inpaint_mask(atlas: TextureAtlas, tau_refine: float = TAU_REFINE_DEFAULT) -> np.ndarray:
    """Texels needing refinement: valid and (unwritten or low-confidence)."""
    mask = atlas.valid & (
        (atlas.state == TexelState.UNWRITTEN) | (atlas.confidence < tau_refine)
    )
    fraction = mask.sum() / max(1, atlas.valid.sum())
    logger.info("refinement inpaint mask covers %.2f%% of valid texels", 100.0 * fraction)
    return mask


def _uv_region_mask(atlas: TextureAtlas, mask: np.ndarray, synth_region: Region) -> RegionMask:
    region = np.full(atlas.resolution, Region.BACKGROUND, dtype=np.uint8)
    region[atlas.valid] = Region.KEEP
    region[mask] = synth_region
    return RegionMask(region=region)


def refine_texture(atlas: TextureAtlas, pmap: PositionMap, mask: np.ndarray,
                   prompt: str, style_image_id: str | None, backend,
                   denoise: DenoiseSpec | None = None, seed: int = 0) -> TextureAtlas:
    """One UV-space synthesis call replacing exactly the masked texels.

    Unmasked texels are byte-identical afterwards (keep-preservation);
    every valid texel ends KEPT with nonzero confidence, so a second call
    with a recomputed mask is a no-op.
    """
    if pmap.resolution != atlas.resolution:
        raise GeometryError(
            f"position map {pmap.resolution} does not match atlas {atlas.resolution}"
        )
    if mask.shape != atlas.valid.shape:
        raise GeometryError("inpaint mask resolution mismatch")
    if mask.any():
        from .partition import GENERATE_SPEC

        req = SynthesisRequest(
            mode=Mode.UV_REFINE,
            prompt=prompt,
            denoise=denoise or GENERATE_SPEC,
            seed=seed,
            resolution=atlas.resolution,
            region_mask=_uv_region_mask(atlas, mask, Region.GENERATE),
            init_image=atlas.color.copy(),
            position_map=pmap,
            style_image_id=style_image_id,
        )
        response = synthesize(req, backend)
        rows, cols = np.nonzero(mask)
        atlas.color[rows, cols] = response.image[rows, cols]
        atlas.confidence[rows, cols] = 1.0
    rows, cols = np.nonzero(atlas.valid)
    atlas.apply_states(rows, cols, np.uint8(TexelState.KEPT), phase="refine")
    return atlas


def postprocess_scene(scene, backend, enabled: bool = False, prompt: str = "",
                      seed: int = 0):
    """Whole-scene final pass: a light UV touch-up over every atlas.

    Off by default (a no-op) because it is a taste pass, not a
    correctness one; when enabled, every valid texel receives a low
    strength UPDATE-style perturbation. Returns (scene, calls_made).
    """
    if not enabled:
        return scene, 0
    calls = 0
    for entry_id, atlas in scene.atlases.items():
        mask = atlas.valid.copy()
        if not mask.any():
            continue
        pmap = PositionMap(position=_stored_positions(atlas), valid=atlas.valid)
        req = SynthesisRequest(
            mode=Mode.UV_REFINE,
            prompt=prompt or scene.style,
            denoise=POSTPROCESS_SPEC,
            seed=seed + calls,
            resolution=atlas.resolution,
            region_mask=_uv_region_mask(atlas, mask, Region.UPDATE),
            init_image=atlas.color.copy(),
            position_map=pmap,
        )
        response = synthesize(req, backend)
        rows, cols = np.nonzero(mask)
        atlas.color[rows, cols] = response.image[rows, cols]
        calls += 1
    return scene, calls


def _stored_positions(atlas: TextureAtlas) -> np.ndarray:
    h, w = atlas.resolution
    pos = np.zeros((h, w, 3), dtype=np.float64)
    table = atlas.table
    pos[table.rows, table.cols] = np.clip(table.point + 0.5, 0.0, 1.0)
    return pos
