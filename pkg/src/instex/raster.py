"""Software rasterizer: depth maps, pixel/texel correspondence, color renders.

Z-buffered, perspective-correct, deterministic: triangles are drawn in
index order with a strict depth test, pixel centers sit at integer
coordinates, and no multi-sampling happens anywhere. Depth is camera-space
distance along the view axis (not NDC z), because downstream consumers
need a normalizable metric depth.

Room interiors are rendered with FRONT culling so only the inner surfaces
of the shell are drawn; in that mode texel normals are flipped to match
the surface actually being textured.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .scene_model import Mesh, TexelState, TextureAtlas, SENTINEL_COLOR, resolve_texels
from .view_schedule import Camera

# Visibility tolerance: texel depth may differ from the z-buffer by this
# fraction of the mesh bbox diagonal before it counts as occluded.
DEPTH_EPS_FRACTION = 1e-3

STATE_BACKGROUND = 255  # state-image value for pixels with no surface


class CullMode(str, Enum):
    BACK = "back"
    FRONT = "front"
    NONE = "none"


@dataclass
class FrameBuffer:
    """Raw rasterization output for one view."""

    depth: np.ndarray  # (H, W) float64, 0 where background
    mask: np.ndarray  # (H, W) bool foreground
    tri: np.ndarray  # (H, W) int32, -1 where background
    uv: np.ndarray  # (H, W, 2) float64 interpolated surface UV


@dataclass
class DepthMap:
    depth: np.ndarray
    mask: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        return self.depth.shape


@dataclass
class CorrespondenceMap:
    """Pixel<->texel links for one view of one atlas.

    Pixel-side arrays are (H, W); texel-side arrays align with the atlas
    texel table. A texel is visible iff it projects inside the image onto
    its own surface (depth within epsilon of the z-buffer) and faces the
    camera.
    """

    atlas_resolution: tuple[int, int]
    pix_mask: np.ndarray
    pix_depth: np.ndarray
    pix_tri: np.ndarray
    pix_texel_row: np.ndarray  # (H, W) int32, -1 where background
    pix_texel_col: np.ndarray
    pix_cosine: np.ndarray  # (H, W) float64, cosine of the pixel's texel
    tex_visible: np.ndarray  # (N,) bool
    tex_pix_row: np.ndarray  # (N,) int32, -1 where not visible
    tex_pix_col: np.ndarray
    tex_cosine: np.ndarray  # (N,) float64, 0 for back-facing
    tex_depth: np.ndarray  # (N,) float64

    @property
    def image_resolution(self) -> tuple[int, int]:
        return self.pix_mask.shape


def rasterize_frame(mesh: Mesh, camera: Camera, cull: CullMode = CullMode.BACK) -> FrameBuffer:
    """Rasterize a mesh into depth/triangle-id/UV buffers.

    Triangles crossing the near plane are clipped in camera space (rooms
    are rendered from inside, so this is routine, not an edge case).
    """
    k = camera.intrinsics
    h, w = k.height, k.width
    depth = np.full((h, w), np.inf)
    tri_id = np.full((h, w), -1, dtype=np.int32)
    uv_buf = np.zeros((h, w, 2))
    if mesh.num_triangles:
        cam_pts = mesh.vertices @ camera.view[:3, :3].T + camera.view[:3, 3]
        for t in range(mesh.num_triangles):
            corners = cam_pts[mesh.triangles[t]]
            for p, q, r, uv3 in _clip_near(corners, mesh.uvs[t], k.near):
                _raster_triangle(np.stack([p, q, r]), uv3, t, camera, cull,
                                 depth, tri_id, uv_buf)
    mask = tri_id >= 0
    depth[~mask] = 0.0
    return FrameBuffer(depth=depth, mask=mask, tri=tri_id, uv=uv_buf)


def _clip_near(corners: np.ndarray, uvs: np.ndarray, near: float):
    """Sutherland-Hodgman clip of one camera-space triangle against z <= -near.

    Yields (p0, p1, p2, uvs) sub-triangles; UVs are lerped at the clip
    boundary, which is exact because camera space is affine.
    """
    inside = corners[:, 2] <= -near
    if inside.all():
        yield corners[0], corners[1], corners[2], uvs
        return
    if not inside.any():
        return
    poly_p: list[np.ndarray] = []
    poly_uv: list[np.ndarray] = []
    for i in range(3):
        j = (i + 1) % 3
        pi, pj = corners[i], corners[j]
        ui, uj = uvs[i], uvs[j]
        if inside[i]:
            poly_p.append(pi)
            poly_uv.append(ui)
        if inside[i] != inside[j]:
            t = (-near - pi[2]) / (pj[2] - pi[2])
            poly_p.append(pi + t * (pj - pi))
            poly_uv.append(ui + t * (uj - ui))
    for k2 in range(1, len(poly_p) - 1):
        yield (poly_p[0], poly_p[k2], poly_p[k2 + 1],
               np.stack([poly_uv[0], poly_uv[k2], poly_uv[k2 + 1]]))


def _raster_triangle(cam: np.ndarray, uvs: np.ndarray, t: int, camera: Camera,
                     cull: CullMode, depth: np.ndarray, tri_id: np.ndarray,
                     uv_buf: np.ndarray) -> None:
    k = camera.intrinsics
    h, w = depth.shape
    d = -cam[:, 2]  # view depth per vertex, all >= near after clipping
    clip = np.concatenate([cam, np.ones((3, 1))], axis=1) @ camera.proj.T
    ndc = clip[:, :2] / clip[:, 3:4]
    col = (ndc[:, 0] + 1.0) * 0.5 * w - 0.5
    row = (1.0 - ndc[:, 1]) * 0.5 * h - 0.5
    # pixel-space winding: front faces (CCW in NDC) have negative area here
    area2 = (col[1] - col[0]) * (row[2] - row[0]) - (row[1] - row[0]) * (col[2] - col[0])
    if cull == CullMode.BACK and area2 >= 0:
        return
    if cull == CullMode.FRONT and area2 <= 0:
        return
    if area2 == 0:
        return
    c0 = max(0, int(np.ceil(col.min() - 0.5)))
    c1 = min(w - 1, int(np.floor(col.max() + 0.5)))
    r0 = max(0, int(np.ceil(row.min() - 0.5)))
    r1 = min(h - 1, int(np.floor(row.max() + 0.5)))
    if c1 < c0 or r1 < r0:
        return
    cc, rr = np.meshgrid(np.arange(c0, c1 + 1, dtype=np.float64),
                         np.arange(r0, r1 + 1, dtype=np.float64))
    e0 = (col[2] - col[1]) * (rr - row[1]) - (row[2] - row[1]) * (cc - col[1])
    e1 = (col[0] - col[2]) * (rr - row[2]) - (row[0] - row[2]) * (cc - col[2])
    e2 = (col[1] - col[0]) * (rr - row[0]) - (row[1] - row[0]) * (cc - col[0])
    if area2 > 0:
        inside = (e0 >= 0) & (e1 >= 0) & (e2 >= 0)
    else:
        inside = (e0 <= 0) & (e1 <= 0) & (e2 <= 0)
    if not inside.any():
        return
    l0 = e0 / area2
    l1 = e1 / area2
    l2 = e2 / area2
    inv_d = l0 / d[0] + l1 / d[1] + l2 / d[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        pd = 1.0 / inv_d
    ok = inside & (pd > 0) & (pd <= k.far * (1.0 + 1e-9))
    window = depth[r0 : r1 + 1, c0 : c1 + 1]
    sel = ok & (pd < window)
    if not sel.any():
        return
    m0 = (l0 / d[0]) * pd
    m1 = (l1 / d[1]) * pd
    m2 = (l2 / d[2]) * pd
    window[sel] = pd[sel]
    tri_id[r0 : r1 + 1, c0 : c1 + 1][sel] = t
    uv_win = uv_buf[r0 : r1 + 1, c0 : c1 + 1]
    uv_win[sel, 0] = m0[sel] * uvs[0, 0] + m1[sel] * uvs[1, 0] + m2[sel] * uvs[2, 0]
    uv_win[sel, 1] = m0[sel] * uvs[0, 1] + m1[sel] * uvs[1, 1] + m2[sel] * uvs[2, 1]


def render_depth(mesh: Mesh, camera: Camera, cull: CullMode = CullMode.BACK,
                 frame: FrameBuffer | None = None) -> DepthMap:
    if frame is None:
        frame = rasterize_frame(mesh, camera, cull)
    return DepthMap(depth=frame.depth, mask=frame.mask)


def _inv_depth_gradients(mesh: Mesh, camera: Camera):
    """Per-triangle screen-space gradients of 1/depth.

    For a triangle on the camera-space plane n.p = c, a pixel ray
    p = t (x(col), y(row), -1) hits at view depth d = c / (n.dir), so
    1/d = (n_x x + n_y y - n_z) / c: affine in (col, row). Triangles seen
    edge-on (c ~ 0) get zero gradients; their texels are excluded by the
    cosine gate anyway.
    """
    k = camera.intrinsics
    import math

    f = 1.0 / math.tan(math.radians(k.fov_deg) / 2.0)
    aspect = k.width / k.height
    cam_pts = mesh.vertices @ camera.view[:3, :3].T + camera.view[:3, 3]
    corners = cam_pts[mesh.triangles]
    n_cam = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    c = np.einsum("td,td->t", n_cam, corners[:, 0])
    safe = np.abs(c) > 1e-14
    inv_c = np.zeros(len(c))
    inv_c[safe] = 1.0 / c[safe]
    dx_dcol = (2.0 / k.width) * (aspect / f)
    dy_drow = -(2.0 / k.height) / f
    grad_c = n_cam[:, 0] * dx_dcol * inv_c
    grad_r = n_cam[:, 1] * dy_drow * inv_c
    return grad_c, grad_r


def _pixel_texels(frame: FrameBuffer, atlas: TextureAtlas):
    """Resolve each foreground pixel's UV sample to an atlas texel,
    redirecting off-chart rounding to the nearest valid texel."""
    ah, aw = atlas.resolution
    rows = np.full(frame.mask.shape, -1, dtype=np.int32)
    cols = np.full(frame.mask.shape, -1, dtype=np.int32)
    fg = frame.mask
    u = frame.uv[fg, 0]
    v = frame.uv[fg, 1]
    c = np.clip(np.rint(u * aw - 0.5).astype(np.int64), 0, aw - 1)
    r = np.clip(np.rint((1.0 - v) * ah - 0.5).astype(np.int64), 0, ah - 1)
    rr, cc = resolve_texels(atlas, r, c)
    rows[fg] = rr
    cols[fg] = cc
    return rows, cols


def texel_correspondence(mesh: Mesh, atlas: TextureAtlas, camera: Camera,
                         cull: CullMode = CullMode.BACK,
                         frame: FrameBuffer | None = None) -> CorrespondenceMap:
    """Compute the two-way pixel/texel correspondence for one view.

    Texel-side visibility: project each valid texel's surface point and
    compare against the z-buffer at the four surrounding pixel centers.
    The comparison is first-order exact: 1/depth is affine in pixel
    coordinates over a planar triangle, so the texel's depth is advanced
    to each tap location along its own triangle's camera-space plane
    before applying the epsilon (DEPTH_EPS_FRACTION of the bbox
    diagonal). Without the correction, tilted surfaces fail the epsilon
    from sub-pixel rounding alone. With FRONT culling the inner surface
    is the one being textured, so normals flip.
    """
    if atlas.num_triangles != mesh.num_triangles:
        raise ValueError("atlas was built for a different mesh")
    if frame is None:
        frame = rasterize_frame(mesh, camera, cull)
    k = camera.intrinsics
    table = atlas.table
    n = len(table)
    eps = DEPTH_EPS_FRACTION * mesh.bbox_diagonal() if mesh.num_vertices else 0.0

    normal = -table.normal if cull == CullMode.FRONT else table.normal
    cosine = np.maximum(0.0, normal @ (-camera.forward))

    from .view_schedule import project_points

    visible = np.zeros(n, dtype=bool)
    tex_pix_row = np.full(n, -1, dtype=np.int32)
    tex_pix_col = np.full(n, -1, dtype=np.int32)
    if n:
        pix, depth = project_points(camera, table.point)
        grad_c, grad_r = _inv_depth_gradients(mesh, camera)
        a = grad_c[table.tri]
        b = grad_r[table.tri]
        with np.errstate(divide="ignore"):
            inv_d = np.where(depth > 0, 1.0 / np.maximum(depth, 1e-30), np.inf)
        best = np.full(n, np.inf)
        best_r = np.full(n, -1, dtype=np.int64)
        best_c = np.full(n, -1, dtype=np.int64)
        row_f = np.floor(pix[:, 0])
        col_f = np.floor(pix[:, 1])
        for dr, dc in ((0, 0), (0, 1), (1, 0), (1, 1)):
            tr = (row_f + dr).astype(np.int64)
            tc = (col_f + dc).astype(np.int64)
            ok = (depth > 0) & (tr >= 0) & (tr < k.height) & (tc >= 0) & (tc < k.width)
            if not ok.any():
                continue
            zbuf = np.zeros(n)
            zbuf[ok] = frame.depth[tr[ok], tc[ok]]
            ok &= zbuf > 0
            # advance the texel's depth along its triangle plane to the tap
            inv_pred = inv_d + a * (tc - pix[:, 1]) + b * (tr - pix[:, 0])
            with np.errstate(divide="ignore", invalid="ignore"):
                d_pred = np.where(inv_pred > 1e-12, 1.0 / inv_pred, np.inf)
            diff = np.where(ok, np.abs(zbuf - d_pred), np.inf)
            closer = diff < best
            best[closer] = diff[closer]
            best_r[closer] = tr[closer]
            best_c[closer] = tc[closer]
        visible = (best <= eps) & (cosine > 0)
        tex_pix_row = np.where(visible, best_r, -1).astype(np.int32)
        tex_pix_col = np.where(visible, best_c, -1).astype(np.int32)
    else:
        depth = np.zeros(0)

    rows, cols = _pixel_texels(frame, atlas)
    pix_cos = np.zeros(frame.mask.shape)
    # cosine per pixel = cosine of its resolved texel (same quantity the
    # projector uses, so classify/project decisions stay consistent)
    tex_cos_grid = np.zeros(atlas.resolution)
    tex_cos_grid[table.rows, table.cols] = cosine
    fg = frame.mask
    pix_cos[fg] = tex_cos_grid[rows[fg], cols[fg]]

    return CorrespondenceMap(
        atlas_resolution=atlas.resolution,
        pix_mask=frame.mask,
        pix_depth=frame.depth,
        pix_tri=frame.tri,
        pix_texel_row=rows,
        pix_texel_col=cols,
        pix_cosine=pix_cos,
        tex_visible=visible,
        tex_pix_row=tex_pix_row,
        tex_pix_col=tex_pix_col,
        tex_cosine=cosine,
        tex_depth=depth,
    )


def render_color(mesh: Mesh, atlas: TextureAtlas, camera: Camera,
                 cull: CullMode = CullMode.BACK,
                 frame: FrameBuffer | None = None):
    """Nearest-texel color render plus a per-pixel texel-state image.

    UNWRITTEN texels draw as the magenta sentinel; background is black in
    the color image and STATE_BACKGROUND in the state image.
    """
    if frame is None:
        frame = rasterize_frame(mesh, camera, cull)
    h, w = frame.mask.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    state_img = np.full((h, w), STATE_BACKGROUND, dtype=np.uint8)
    rows, cols = _pixel_texels(frame, atlas)
    fg = frame.mask
    if fg.any():
        r = rows[fg]
        c = cols[fg]
        colors = atlas.color[r, c].copy()
        states = atlas.state[r, c]
        colors[states == TexelState.UNWRITTEN] = SENTINEL_COLOR
        rgb[fg] = colors
        state_img[fg] = states
    return rgb, state_img


def render_scene(entries, camera: Camera) -> np.ndarray:
    """Composite render of several (mesh, atlas, cull) entries sharing one
    z-buffer; used by the evaluation harness on recomposed scenes."""
    k = camera.intrinsics
    h, w = k.height, k.width
    best_depth = np.full((h, w), np.inf)
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for mesh, atlas, cull in entries:
        frame = rasterize_frame(mesh, camera, cull)
        color, _ = render_color(mesh, atlas, camera, cull, frame=frame)
        d = np.where(frame.mask, frame.depth, np.inf)
        closer = d < best_depth
        best_depth[closer] = d[closer]
        rgb[closer] = color[closer]
    return rgb


def depth_png16(depth_map: DepthMap, near: float, far: float) -> bytes:
    """Debug dump: 16-bit grayscale, near -> 0, far -> 65535, background 0."""
    from . import png16

    scaled = np.zeros(depth_map.depth.shape, dtype=np.uint16)
    fg = depth_map.mask
    norm = np.clip((depth_map.depth[fg] - near) / (far - near), 0.0, 1.0)
    scaled[fg] = np.round(norm * 65535.0).astype(np.uint16)
    return png16.write_gray16(scaled)
