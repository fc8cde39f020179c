"""End-to-end orchestration: style image, per-object sweeps, refinement,
recomposition, post-processing, and evaluation renders.

Stage order is fixed: global style image -> canonicalize -> per-object
coarse sweep + refinement (objects first, then rooms, rooms rendered with
FRONT culling) -> recompose -> optional whole-scene pass -> 20 evaluation
renders. A RunManifest records everything needed to replay a stub run
bit-for-bit; wall-clock and latency fields live in dedicated keys so
replay comparisons can strip them.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import refine as refine_mod
from .back_project import TAU_PROJ_DEFAULT, finalize_object, project_image
from .canonical import canonicalize, recompose
from .errors import ConfigError, InstexError
from .partition import DenoiseSpec, PartitionPolicy, Region, classify_view, region_debug_png
from .raster import (
    CullMode,
    depth_png16,
    rasterize_frame,
    render_color,
    render_depth,
    render_scene,
    texel_correspondence,
)
from .scene_model import (
    Mesh,
    SceneGraph,
    TexelState,
    TextureAtlas,
    atlas_color_png,
    atlas_state_png,
    load_scene,
    new_atlas,
)
from .synthesis import (
    Mode,
    SynthesisRequest,
    make_backend,
    object_base_seed,
    style_image_id,
    synthesize,
    view_seed,
)
from .view_schedule import (
    CameraIntrinsics,
    Viewpoint,
    ViewKind,
    camera_matrices,
    object_viewpoints_with_step,
    room_viewpoints,
)

logger = logging.getLogger(__name__)

EVAL_RENDER_COUNT = 20
REFINE_SEED_OFFSET = 10_000
POSTPROCESS_SEED_OFFSET = 20_000


@dataclass
class PipelineConfig:
    scene: str
    style: str = ""
    seed: int = 0
    backend: str = "stub"
    atlas_resolution: int = 1024
    image_resolution: int = 512
    object_azimuth_step: float = 45.0
    room_azimuth_step: float = 45.0
    tau_proj: float = TAU_PROJ_DEFAULT
    tau_update: float = 0.5
    tau_refine: float = refine_mod.TAU_REFINE_DEFAULT
    steps_generate: int = 50
    steps_update: int = 10
    postprocess: bool = False
    room_kind: str = "room"
    out_dir: str = "out"
    in_flight: int = 2
    save_views: bool = True

    def __post_init__(self):
        for name in ("tau_proj", "tau_update", "tau_refine"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.steps_generate < 0 or self.steps_update < 0:
            raise ConfigError("step budgets must be >= 0")
        if self.atlas_resolution < 1 or self.image_resolution < 1:
            raise ConfigError("resolutions must be >= 1")
        if self.in_flight < 1:
            raise ConfigError("in_flight bound must be >= 1")

    def generate_spec(self) -> DenoiseSpec:
        return DenoiseSpec(steps=self.steps_generate, strength=1.0 if self.steps_generate else 0.0)

    def update_spec(self) -> DenoiseSpec:
        if self.steps_update == 0:
            return DenoiseSpec(steps=0, strength=0.0)
        return DenoiseSpec(steps=self.steps_update,
                           strength=self.steps_update / max(1, self.steps_generate))

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(height=self.image_resolution, width=self.image_resolution)

    def to_dict(self) -> dict:
        return asdict(self)


def object_prompt(style: str, object_name: str) -> str:
    """Prompt template: 'a <style> style <object>'."""
    if not style:
        raise ConfigError("style text must be non-empty")
    if not object_name:
        raise ConfigError("object name must be non-empty")
    return f"a {style} style {object_name}"


def global_style_image(prompt: str, backend, seed: int = 0,
                       resolution: tuple[int, int] = (512, 512)):
    """One text2image call; the result conditions every later request.

    Returns (image, style_image_id). The id is a content hash; HTTP
    backends additionally upload the image so the bridge can resolve the
    reference server-side.
    """
    if not prompt:
        raise ConfigError("style prompt must be non-empty")
    req = SynthesisRequest(
        mode=Mode.TEXT2IMG,
        prompt=prompt,
        denoise=DenoiseSpec(steps=50, strength=1.0),
        seed=seed,
        resolution=resolution,
    )
    response = synthesize(req, backend)
    image = response.image
    image_id = style_image_id(image)
    if hasattr(backend, "upload_style"):
        image_id = backend.upload_style(image)
    return image, image_id


def _view_denoise(config: PipelineConfig, mask) -> DenoiseSpec:
    # one budget per request: the largest any present region needs
    if mask.count(Region.GENERATE):
        return config.generate_spec()
    if mask.count(Region.UPDATE):
        return config.update_spec()
    return DenoiseSpec(steps=0, strength=0.0)


def texture_object(mesh: Mesh, prompt: str, style_id: str | None, backend,
                   config: PipelineConfig, *, base_seed: int = 0,
                   room: bool = False, view_dir: Path | None = None):
    """Full coarse-to-fine texturing of one canonical mesh.

    Sweeps the viewpoint schedule (first view generates from scratch,
    later views inpaint against the evolving atlas), finalizes the sweep,
    then refines in UV space. Returns (atlas, record).
    """
    cull = CullMode.FRONT if room else CullMode.BACK
    if room:
        views = room_viewpoints(config.room_azimuth_step)
    else:
        views = object_viewpoints_with_step(config.object_azimuth_step)
    k = config.intrinsics()
    policy = PartitionPolicy(tau_update=config.tau_update)
    atlas = new_atlas(mesh, (config.atlas_resolution, config.atlas_resolution))
    record = {"prompt": prompt, "seed_base": base_seed, "kind": "room" if room else "object",
              "views": []}
    for i, view in enumerate(views):
        t0 = time.perf_counter()
        camera = camera_matrices(view, k)
        frame = rasterize_frame(mesh, camera, cull)
        depth_map = render_depth(mesh, camera, cull, frame=frame)
        corr = texel_correspondence(mesh, atlas, camera, cull, frame=frame)
        mask = classify_view(atlas, corr, policy)
        init_rgb, _ = render_color(mesh, atlas, camera, cull, frame=frame)
        mode = Mode.DEPTH2IMG if i == 0 else Mode.DEPTH_INPAINT
        seed = view_seed(base_seed, i)
        req = SynthesisRequest(
            mode=mode,
            prompt=prompt,
            denoise=_view_denoise(config, mask),
            seed=seed,
            resolution=(k.height, k.width),
            depth=depth_map,
            region_mask=mask,
            init_image=init_rgb,
            style_image_id=style_id,
            near=k.near,
            far=k.far,
        )
        response = synthesize(req, backend)
        report = project_image(response.image, corr, mask, atlas, tau_proj=config.tau_proj)
        if view_dir is not None:
            _dump_view(view_dir, i, depth_map, mask, init_rgb, response.image, k)
        record["views"].append({
            "index": i,
            "viewpoint": view.to_dict(),
            "mode": mode.value,
            "seed": seed,
            "regions": mask.counts(),
            "texels_written": report.texels_written,
            "texels_skipped": report.texels_skipped,
            "latency_ms": response.latency_ms,
            "elapsed_ms": (time.perf_counter() - t0) * 1000.0,
        })
    finalize_object(atlas)
    t0 = time.perf_counter()
    pmap = refine_mod.position_map(mesh, atlas)
    mask = refine_mod.inpaint_mask(atlas, tau_refine=config.tau_refine)
    refine_mod.refine_texture(
        atlas, pmap, mask, prompt, style_id, backend,
        denoise=config.generate_spec(), seed=view_seed(base_seed, REFINE_SEED_OFFSET),
    )
    record["refine"] = {
        "masked_texels": int(mask.sum()),
        "elapsed_ms": (time.perf_counter() - t0) * 1000.0,
    }
    record["texel_states"] = _state_counts(atlas)
    return atlas, record


def _state_counts(atlas: TextureAtlas) -> dict:
    v = atlas.valid
    return {
        s.name.lower(): int(np.count_nonzero(atlas.state[v] == s))
        for s in TexelState
    }


def _dump_view(view_dir: Path, index: int, depth_map, mask, init_rgb, synth_rgb,
               k: CameraIntrinsics) -> None:
    import io

    from PIL import Image

    view_dir.mkdir(parents=True, exist_ok=True)
    (view_dir / f"{index:02d}_depth.png").write_bytes(depth_png16(depth_map, k.near, k.far))
    (view_dir / f"{index:02d}_mask.png").write_bytes(region_debug_png(mask))
    for name, img in (("init", init_rgb), ("synth", synth_rgb)):
        buf = io.BytesIO()
        Image.fromarray(img, mode="RGB").save(buf, format="PNG")
        (view_dir / f"{index:02d}_{name}.png").write_bytes(buf.getvalue())


def eval_viewpoints(center) -> list[Viewpoint]:
    """The 20 fixed evaluation viewpoints: 9-azimuth rings at elevations
    0 and 20 degrees from the scene center, plus straight up and down."""
    c = np.asarray(center, dtype=np.float64)
    views = []
    for elevation in (0.0, 20.0):
        for i in range(9):
            az = i * 40.0
            v = Viewpoint(az, elevation, 0.0, (0, 0, 0), ViewKind.ROOM_PANO)
            views.append(Viewpoint(az, elevation, 0.0,
                                   tuple((c + v.direction()).tolist()), ViewKind.ROOM_PANO))
    views.append(Viewpoint(0.0, 90.0, 0.0, tuple((c + [0, 1, 0]).tolist()), ViewKind.ROOM_UP))
    views.append(Viewpoint(0.0, -90.0, 0.0, tuple((c + [0, -1, 0]).tolist()), ViewKind.ROOM_DOWN))
    return views


def eval_renders(scene: SceneGraph, out_dir: Path | None = None,
                 image_resolution: int = 512) -> list[np.ndarray]:
    """Render the recomposed scene from the 20 preset interior viewpoints."""
    entries = [(o.mesh, scene.atlases[o.object_id], CullMode.BACK) for o in scene.objects]
    entries += [(r.mesh, scene.atlases[r.room_id], CullMode.FRONT) for r in scene.rooms]
    if not entries:
        raise ConfigError("scene has no textured entries to render")
    los, his = zip(*(m.bbox() for m, _, _ in entries))
    lo = np.min(np.stack(los), axis=0)
    hi = np.max(np.stack(his), axis=0)
    center = (lo + hi) / 2.0
    diag = float(np.linalg.norm(hi - lo))
    k = CameraIntrinsics(height=image_resolution, width=image_resolution,
                         near=max(1e-3 * diag, 1e-6), far=max(2.0 * diag, 1e-3))
    images = []
    for i, view in enumerate(eval_viewpoints(center)):
        camera = camera_matrices(view, k)
        rgb = render_scene(entries, camera)
        images.append(rgb)
        if out_dir is not None:
            import io

            from PIL import Image

            out_dir.mkdir(parents=True, exist_ok=True)
            buf = io.BytesIO()
            Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
            (out_dir / f"eval_{i:02d}.png").write_bytes(buf.getvalue())
    return images


def seam_consistency_metric(mesh: Mesh, atlas: TextureAtlas,
                            samples_per_edge: int = 8) -> float:
    """Mean color discrepancy across UV seams, in [0, 255].

    For every 3D edge shared by two triangles whose UV edges differ, the
    atlas is sampled at matching points on both sides and the absolute
    color difference averaged. 0 means seams are invisible.
    """
    edges: dict[tuple, list] = {}
    for t in range(mesh.num_triangles):
        tri = mesh.triangles[t]
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            # key on quantized positions: seams often duplicate vertices
            pa = tuple(np.round(mesh.vertices[a], 9))
            pb = tuple(np.round(mesh.vertices[b], 9))
            uv_a = mesh.uvs[t, k]
            uv_b = mesh.uvs[t, (k + 1) % 3]
            if pa > pb:
                pa, pb = pb, pa
                uv_a, uv_b = uv_b, uv_a  # orient by ascending position
            edges.setdefault((pa, pb), []).append((uv_a, uv_b))
    ts = (np.arange(samples_per_edge) + 0.5) / samples_per_edge
    diffs = []
    for key, sides in edges.items():
        if len(sides) != 2:
            continue
        (a0, b0), (a1, b1) = sides
        if np.allclose(a0, a1, atol=1e-9) and np.allclose(b0, b1, atol=1e-9):
            continue  # same chart location: not a seam
        uv_s0 = a0[None, :] * (1 - ts[:, None]) + b0[None, :] * ts[:, None]
        uv_s1 = a1[None, :] * (1 - ts[:, None]) + b1[None, :] * ts[:, None]
        c0 = _sample_atlas(atlas, uv_s0)
        c1 = _sample_atlas(atlas, uv_s1)
        diffs.append(np.abs(c0.astype(np.float64) - c1.astype(np.float64)).mean())
    return float(np.mean(diffs)) if diffs else 0.0


def _sample_atlas(atlas: TextureAtlas, uv: np.ndarray) -> np.ndarray:
    from .scene_model import resolve_texels

    h, w = atlas.resolution
    c = np.clip(np.rint(uv[:, 0] * w - 0.5).astype(np.int64), 0, w - 1)
    r = np.clip(np.rint((1.0 - uv[:, 1]) * h - 0.5).astype(np.int64), 0, h - 1)
    rr, cc = resolve_texels(atlas, r, c)
    return atlas.color[rr, cc]


def strip_timings(manifest: dict) -> dict:
    """Drop wall-clock fields so two replays can be compared exactly."""
    drop = {"latency_ms", "elapsed_ms", "timings", "wall_clock_s"}

    def walk(node):
        if isinstance(node, dict):
            return {k: walk(v) for k, v in node.items() if k not in drop}
        if isinstance(node, list):
            return [walk(v) for v in node]
        return node

    return walk(manifest)


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the full pipeline and persist results under config.out_dir.

    Returns the run manifest (also written as manifest.json). Failures are
    recorded in the manifest with a stage tag before the error propagates.
    """
    t_start = time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "config": config.to_dict(),
        "objects": [],
        "errors": [],
        "timings": {},
    }
    backend = make_backend(config.backend)

    def fail(stage: str, error: Exception):
        manifest["errors"].append({"stage": stage, "error": str(error)})
        _write_manifest(out, manifest)
        return error

    # ---- stage: scene loading
    try:
        scene = load_scene(config.scene, config)
    except InstexError as e:
        raise fail("load", e)
    style_text = config.style or scene.style
    if not style_text:
        raise fail("load", ConfigError("no style text in config or scene manifest"))

    # ---- stage: global style image
    try:
        prompt = object_prompt(style_text, config.room_kind)
        style_img, style_id = global_style_image(prompt, backend, seed=config.seed)
    except InstexError as e:
        raise fail("style", e)
    _write_png(out / "style_image.png", style_img)
    manifest["style_prompt"] = prompt
    manifest["style_image_id"] = style_id

    # ---- stage: canonicalize
    try:
        canonical_entries = []  # (id, name, canonical mesh, room flag)
        canon_objects = []
        canon_rooms = []
        for obj in scene.objects:
            mesh_c, placement = canonicalize(obj.mesh, obj.placement)
            canon_objects.append(type(obj)(obj.object_id, mesh_c, placement, obj.name))
            canonical_entries.append((obj.object_id, obj.name, mesh_c, False))
        for rm in scene.rooms:
            mesh_c, placement = canonicalize(rm.mesh, rm.placement)
            canon_rooms.append(type(rm)(rm.room_id, mesh_c, placement))
            canonical_entries.append((rm.room_id, config.room_kind, mesh_c, True))
        canonical_scene = SceneGraph(objects=canon_objects, rooms=canon_rooms,
                                     style=style_text)
    except InstexError as e:
        raise fail("canonicalize", e)

    # ---- stage: per-object texturing (objects first, then rooms)
    textured: dict = {}

    def run_one(entry):
        entry_id, name, mesh_c, is_room = entry
        view_dir = out / "objects" / entry_id / "views" if config.save_views else None
        atlas, record = texture_object(
            mesh_c,
            object_prompt(style_text, name),
            style_id,
            backend,
            config,
            base_seed=object_base_seed(config.seed, entry_id),
            room=is_room,
            view_dir=view_dir,
        )
        return entry_id, atlas, record

    object_entries = [e for e in canonical_entries if not e[3]]
    room_entries = [e for e in canonical_entries if e[3]]
    try:
        results = []
        with ThreadPoolExecutor(max_workers=config.in_flight) as pool:
            results += list(pool.map(run_one, object_entries))  # rooms wait for objects
            results += list(pool.map(run_one, room_entries))
        for (entry_id, _, mesh_c, _room), (rid, atlas, record) in zip(
            object_entries + room_entries, results
        ):
            assert entry_id == rid
            textured[entry_id] = (mesh_c, atlas)
            record["id"] = entry_id
            manifest["objects"].append(record)
            obj_dir = out / "objects" / entry_id
            obj_dir.mkdir(parents=True, exist_ok=True)
            (obj_dir / "atlas.png").write_bytes(atlas_color_png(atlas))
            (obj_dir / "state.png").write_bytes(atlas_state_png(atlas))
    except InstexError as e:
        raise fail("texture", e)

    # ---- stage: recompose
    try:
        recomposed = recompose(canonical_scene, textured)
    except InstexError as e:
        raise fail("recompose", e)

    # ---- stage: postprocess (flag-gated; default no-op)
    try:
        _, calls = refine_mod.postprocess_scene(
            recomposed, backend, enabled=config.postprocess, prompt=style_text,
            seed=view_seed(config.seed, POSTPROCESS_SEED_OFFSET),
        )
        manifest["postprocess_calls"] = calls
        if calls:
            for entry_id, atlas in recomposed.atlases.items():
                obj_dir = out / "objects" / entry_id
                (obj_dir / "atlas.png").write_bytes(atlas_color_png(atlas))
    except InstexError as e:
        raise fail("postprocess", e)

    # ---- stage: evaluation renders
    try:
        images = eval_renders(recomposed, out_dir=out / "scene",
                              image_resolution=config.image_resolution)
        manifest["eval_renders"] = len(images)
    except InstexError as e:
        raise fail("eval", e)

    manifest["timings"]["wall_clock_s"] = time.perf_counter() - t_start
    _write_manifest(out, manifest)
    return manifest


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_png(path: Path, image: np.ndarray) -> None:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image, mode="RGB").save(buf, format="PNG")
    path.write_bytes(buf.getvalue())


def replay_eval(scene_dir: Path) -> list[np.ndarray]:
    """Re-render evaluation views from a finished run directory."""
    scene_dir = Path(scene_dir)
    manifest_path = scene_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"no manifest.json under {scene_dir}")
    manifest = json.loads(manifest_path.read_text())
    config = PipelineConfig(**manifest["config"])
    scene = load_scene(config.scene, config)
    style_text = config.style or scene.style
    canon_objects = []
    canon_rooms = []
    textured = {}
    from .scene_model import load_atlas_images

    for obj in scene.objects:
        mesh_c, placement = canonicalize(obj.mesh, obj.placement)
        canon_objects.append(type(obj)(obj.object_id, mesh_c, placement, obj.name))
        obj_dir = scene_dir / "objects" / obj.object_id
        atlas = load_atlas_images(
            mesh_c, (config.atlas_resolution, config.atlas_resolution),
            (obj_dir / "atlas.png").read_bytes(), (obj_dir / "state.png").read_bytes(),
        )
        textured[obj.object_id] = (mesh_c, atlas)
    for rm in scene.rooms:
        mesh_c, placement = canonicalize(rm.mesh, rm.placement)
        canon_rooms.append(type(rm)(rm.room_id, mesh_c, placement))
        room_dir = scene_dir / "objects" / rm.room_id
        atlas = load_atlas_images(
            mesh_c, (config.atlas_resolution, config.atlas_resolution),
            (room_dir / "atlas.png").read_bytes(), (room_dir / "state.png").read_bytes(),
        )
        textured[rm.room_id] = (mesh_c, atlas)
    canonical_scene = SceneGraph(objects=canon_objects, rooms=canon_rooms, style=style_text)
    recomposed = recompose(canonical_scene, textured)
    return eval_renders(recomposed, out_dir=scene_dir / "scene",
                        image_resolution=config.image_resolution)
