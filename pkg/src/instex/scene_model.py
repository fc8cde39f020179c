"""Scene, mesh, and texture-atlas data model.

Conventions used throughout the engine:
- world and canonical space are right-handed, y-up
- UV space is [0,1]^2 with v pointing up; atlas row 0 holds v ~ 1
- texel (row i, col j) has its center at UV ((j+0.5)/W, 1-(i+0.5)/H)
- colors are 8-bit sRGB; unwritten texels carry a magenta sentinel
"""

from __future__ import annotations

import base64
import json
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import AtlasStateError, ConfigError, GeometryError

logger = logging.getLogger(__name__)

SENTINEL_COLOR = np.array([255, 0, 255], dtype=np.uint8)
DEGENERATE_AREA_TOL = 1e-12


class TexelState(IntEnum):
    UNWRITTEN = 0
    GENERATED = 1
    UPDATED = 2
    KEPT = 3


# Allowed state transitions during the coarse sweep. Refinement additionally
# may promote UNWRITTEN texels straight to KEPT (inpainted after the sweep).
_SWEEP_TRANSITIONS = {
    (TexelState.UNWRITTEN, TexelState.GENERATED),
    (TexelState.GENERATED, TexelState.UPDATED),
    (TexelState.GENERATED, TexelState.KEPT),
    (TexelState.UPDATED, TexelState.KEPT),
}
_REFINE_TRANSITIONS = _SWEEP_TRANSITIONS | {(TexelState.UNWRITTEN, TexelState.KEPT)}


@dataclass
class MeshReport:
    """Diagnostics from mesh validation; informational, never fatal."""

    degenerate_dropped: int = 0
    uv_clamped: int = 0
    nonmanifold_edges: int = 0

    def is_clean(self) -> bool:
        return self.degenerate_dropped == 0 and self.uv_clamped == 0


class Mesh:
    """Indexed triangle mesh with per-corner UVs and per-vertex normals.

    vertices: (V, 3) float64, triangles: (T, 3) int32 vertex indices,
    uvs: (T, 3, 2) float64 in [0,1], normals: (V, 3) float64 unit vectors.
    Arrays are frozen after construction; meshes are safe to share.
    """

    def __init__(self, vertices, triangles, uvs, normals=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        self.uvs = np.ascontiguousarray(uvs, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise GeometryError("vertices must be (V, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise GeometryError("triangles must be (T, 3)")
        if self.uvs.shape != (len(self.triangles), 3, 2):
            raise GeometryError("uvs must be (T, 3, 2), one UV per triangle corner")
        if not np.all(np.isfinite(self.vertices)):
            raise GeometryError("non-finite vertex coordinate")
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise GeometryError("triangle index out of range")
        if len(self.triangles) and self.triangles.min() < 0:
            raise GeometryError("negative triangle index")
        if normals is None:
            normals = compute_vertex_normals(self.vertices, self.triangles)
        self.normals = np.ascontiguousarray(normals, dtype=np.float64)
        for arr in (self.vertices, self.triangles, self.uvs, self.normals):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise GeometryError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def triangle_corners(self) -> np.ndarray:
        """(T, 3, 3) corner positions."""
        return self.vertices[self.triangles]

    def face_normals(self) -> np.ndarray:
        c = self.triangle_corners()
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.maximum(norm, 1e-30)


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; degenerate vertices fall back to +z."""
    normals = np.zeros_like(vertices, dtype=np.float64)
    if len(triangles):
        c = vertices[triangles]
        fn = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])  # length ~ 2*area
        for k in range(3):
            np.add.at(normals, triangles[:, k], fn)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    out = np.divide(normals, norm, out=np.tile([0.0, 0.0, 1.0], (len(vertices), 1)),
                    where=norm > 1e-30)
    return out


def validate_mesh(mesh: Mesh) -> MeshReport:
    """Report-only diagnostics: degenerates, UV range, non-manifold edges."""
    report = MeshReport()
    if len(mesh.triangles):
        c = mesh.triangle_corners()
        area2 = np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
        report.degenerate_dropped = int(np.count_nonzero(area2 <= 2 * DEGENERATE_AREA_TOL))
    report.uv_clamped = int(np.count_nonzero((mesh.uvs < 0.0) | (mesh.uvs > 1.0)))
    report.nonmanifold_edges = _count_nonmanifold_edges(mesh.triangles)
    return report


def clean_mesh(vertices, triangles, uvs, normals=None) -> tuple[Mesh, MeshReport]:
    """Drop degenerate triangles, clamp out-of-range UVs, build a Mesh.

    Real indoor datasets contain slivers; they are dropped with a count
    rather than rejected.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
    uvs = np.asarray(uvs, dtype=np.float64).reshape(-1, 3, 2)
    report = MeshReport()
    if len(triangles):
        c = vertices[triangles]
        area2 = np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
        keep = area2 > 2 * DEGENERATE_AREA_TOL
        report.degenerate_dropped = int(np.count_nonzero(~keep))
        if report.degenerate_dropped:
            logger.warning("dropped %d degenerate triangles", report.degenerate_dropped)
            triangles = triangles[keep]
            uvs = uvs[keep]
    report.uv_clamped = int(np.count_nonzero((uvs < 0.0) | (uvs > 1.0)))
    if report.uv_clamped:
        logger.warning("clamped %d out-of-range UV coordinates", report.uv_clamped)
        uvs = np.clip(uvs, 0.0, 1.0)
    report.nonmanifold_edges = _count_nonmanifold_edges(triangles)
    return Mesh(vertices, triangles, uvs, normals), report


def _count_nonmanifold_edges(triangles: np.ndarray) -> int:
    if not len(triangles):
        return 0
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return int(np.count_nonzero(counts > 2))


@dataclass
class Placement:
    """Rigid placement plus uniform scale: world = rotate(scale * v) + translation."""

    translation: np.ndarray
    scale: float
    rotation: np.ndarray  # unit quaternion, [x, y, z, w]

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.scale = float(self.scale)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if self.scale <= 0:
            raise GeometryError(f"placement scale must be positive, got {self.scale}")
        norm = float(np.linalg.norm(self.rotation))
        if abs(norm - 1.0) > 1e-6:
            raise GeometryError(f"rotation quaternion norm {norm} too far from 1")
        self.rotation = self.rotation / norm

    @classmethod
    def identity(cls) -> "Placement":
        return cls(np.zeros(3), 1.0, np.array([0.0, 0.0, 0.0, 1.0]))

    def rotation_matrix(self) -> np.ndarray:
        x, y, z, w = self.rotation
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (self.rotation_matrix() @ (self.scale * points).T).T + self.translation


@dataclass
class SceneObject:
    object_id: str
    mesh: Mesh
    placement: Placement
    name: str


@dataclass
class SceneRoom:
    room_id: str
    mesh: Mesh
    placement: Placement


@dataclass
class SceneGraph:
    objects: list[SceneObject]
    rooms: list[SceneRoom]
    style: str
    atlases: dict = field(default_factory=dict)  # id -> TextureAtlas, once textured

    def __post_init__(self):
        ids = [o.object_id for o in self.objects] + [r.room_id for r in self.rooms]
        if len(ids) != len(set(ids)):
            raise ConfigError("duplicate object/room ids in scene")


@dataclass
class TexelTable:
    """Per-valid-texel geometry cache, flattened over the atlas grid.

    rows/cols index the atlas; tri/bary locate each texel center inside a
    UV triangle; point/normal are the barycentric surface samples in the
    mesh's own space.
    """

    rows: np.ndarray
    cols: np.ndarray
    tri: np.ndarray
    bary: np.ndarray
    point: np.ndarray
    normal: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class TextureAtlas:
    """Accumulating per-object texture with per-texel state and confidence.

    Invariants: state == UNWRITTEN exactly where confidence == 0; confidence
    in [0, 1]; color holds the sentinel only where UNWRITTEN (gutter texels,
    written at finalize, are the invalid-texel exception).
    """

    color: np.ndarray  # (H, W, 3) uint8
    state: np.ndarray  # (H, W) uint8 TexelState
    confidence: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool
    lookup: np.ndarray  # (H, W) int32, flat index of nearest valid texel
    table: TexelTable
    num_triangles: int
    transition_log: list = field(default_factory=list)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.state.shape

    def copy(self) -> "TextureAtlas":
        return TextureAtlas(
            color=self.color.copy(),
            state=self.state.copy(),
            confidence=self.confidence.copy(),
            valid=self.valid,
            lookup=self.lookup,
            table=self.table,
            num_triangles=self.num_triangles,
            transition_log=list(self.transition_log),
        )

    def check_invariants(self) -> None:
        unwritten = self.state == TexelState.UNWRITTEN
        if not np.array_equal(unwritten, self.confidence == 0.0):
            raise AtlasStateError("state UNWRITTEN must coincide with confidence 0")
        if self.confidence.min() < 0.0 or self.confidence.max() > 1.0:
            raise AtlasStateError("confidence outside [0, 1]")
        written = ~unwritten
        if np.any(np.all(self.color[written] == SENTINEL_COLOR, axis=-1)):
            raise AtlasStateError("written texel still carries the sentinel color")

    def apply_states(self, rows, cols, new_state, phase: str = "sweep") -> None:
        """Set texel states, enforcing the lifecycle and logging the change."""
        allowed = _REFINE_TRANSITIONS if phase == "refine" else _SWEEP_TRANSITIONS
        old = self.state[rows, cols]
        new = np.broadcast_to(np.asarray(new_state, dtype=np.uint8), old.shape)
        changed = old != new
        pairs, counts = np.unique(
            np.stack([old[changed], new[changed]], axis=1), axis=0, return_counts=True
        ) if np.any(changed) else (np.empty((0, 2), np.uint8), np.empty(0, np.int64))
        record = {}
        for (a, b), n in zip(pairs, counts):
            if (TexelState(a), TexelState(b)) not in allowed:
                raise AtlasStateError(
                    f"illegal texel transition {TexelState(a).name}->{TexelState(b).name} "
                    f"in phase {phase!r}"
                )
            record[f"{TexelState(a).name}->{TexelState(b).name}"] = int(n)
        if record:
            self.transition_log.append({"phase": phase, "transitions": record})
        self.state[rows, cols] = new


# Offsets searched when redirecting an invalid texel to its nearest valid
# neighbor; sorted by (distance^2, di, dj) so ties break deterministically.
_LOOKUP_OFFSETS = sorted(
    ((di, dj) for di in range(-2, 3) for dj in range(-2, 3)),
    key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]),
)


def new_atlas(mesh: Mesh, resolution: tuple[int, int] = (1024, 1024)) -> TextureAtlas:
    """Create an all-UNWRITTEN atlas for a mesh, rasterizing its UV charts.

    The valid mask marks texels whose center lies inside some UV triangle
    (inclusive edges, first triangle in index order wins).
    """
    h, w = int(resolution[0]), int(resolution[1])
    if h < 1 or w < 1:
        raise ConfigError(f"atlas resolution must be at least 1x1, got {resolution}")
    valid, tri_id, bary = _rasterize_uv_charts(mesh, h, w)
    if not valid.any():
        logger.warning("mesh has empty UV charts: no valid texels at %dx%d", h, w)
    rows, cols = np.nonzero(valid)
    t = tri_id[rows, cols]
    b = bary[rows, cols]
    corners = mesh.triangle_corners()[t]
    point = np.einsum("nk,nkd->nd", b, corners)
    n = np.einsum("nk,nkd->nd", b, mesh.normals[mesh.triangles[t]])
    n_norm = np.linalg.norm(n, axis=1, keepdims=True)
    normal = np.divide(n, n_norm, out=np.zeros_like(n), where=n_norm > 1e-30)
    table = TexelTable(rows=rows.astype(np.int32), cols=cols.astype(np.int32),
                       tri=t.astype(np.int32), bary=b, point=point, normal=normal)
    color = np.tile(SENTINEL_COLOR, (h, w, 1))
    atlas = TextureAtlas(
        color=color,
        state=np.zeros((h, w), dtype=np.uint8),
        confidence=np.zeros((h, w), dtype=np.float64),
        valid=valid,
        lookup=_build_lookup(valid),
        table=table,
        num_triangles=mesh.num_triangles,
    )
    atlas.valid.setflags(write=False)
    atlas.lookup.setflags(write=False)
    return atlas


def _rasterize_uv_charts(mesh: Mesh, h: int, w: int):
    valid = np.zeros((h, w), dtype=bool)
    tri_id = np.full((h, w), -1, dtype=np.int32)
    bary = np.zeros((h, w, 3), dtype=np.float64)
    for t in range(mesh.num_triangles):
        (au, av), (bu, bv), (cu, cv) = mesh.uvs[t]
        area2 = (bu - au) * (cv - av) - (bv - av) * (cu - au)
        if abs(area2) < 1e-15:
            continue
        # texel index ranges covering the UV bbox
        j0 = max(0, int(np.floor(min(au, bu, cu) * w - 0.5)))
        j1 = min(w - 1, int(np.ceil(max(au, bu, cu) * w - 0.5)))
        i0 = max(0, int(np.floor((1.0 - max(av, bv, cv)) * h - 0.5)))
        i1 = min(h - 1, int(np.ceil((1.0 - min(av, bv, cv)) * h - 0.5)))
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        u = (jj + 0.5) / w
        v = 1.0 - (ii + 0.5) / h
        e_ab = (bu - au) * (v - av) - (bv - av) * (u - au)
        e_bc = (cu - bu) * (v - bv) - (cv - bv) * (u - bu)
        e_ca = (au - cu) * (v - cv) - (av - cv) * (u - cu)
        if area2 > 0:
            inside = (e_ab >= 0) & (e_bc >= 0) & (e_ca >= 0)
        else:
            inside = (e_ab <= 0) & (e_bc <= 0) & (e_ca <= 0)
        if not inside.any():
            continue
        rr = ii[inside]
        cc = jj[inside]
        free = ~valid[rr, cc]  # first triangle keeps the texel
        rr, cc = rr[free], cc[free]
        if not len(rr):
            continue
        valid[rr, cc] = True
        tri_id[rr, cc] = t
        ba = e_bc[inside][free] / area2
        bb = e_ca[inside][free] / area2
        bary[rr, cc, 0] = ba
        bary[rr, cc, 1] = bb
        bary[rr, cc, 2] = 1.0 - ba - bb
    return valid, tri_id, bary


def _build_lookup(valid: np.ndarray) -> np.ndarray:
    """Redirect map: every texel points at the nearest valid texel within a
    Chebyshev radius of 2, or at itself when none exists."""
    h, w = valid.shape
    flat = np.arange(h * w, dtype=np.int32).reshape(h, w)
    lookup = np.where(valid, flat, -1).astype(np.int32)
    for di, dj in _LOOKUP_OFFSETS[1:]:
        missing = lookup < 0
        if not missing.any():
            break
        src_r0, src_r1 = max(0, di), min(h, h + di)
        dst_r0, dst_r1 = max(0, -di), min(h, h - di)
        src_c0, src_c1 = max(0, dj), min(w, w + dj)
        dst_c0, dst_c1 = max(0, -dj), min(w, w - dj)
        window = np.zeros((h, w), dtype=bool)
        window[dst_r0:dst_r1, dst_c0:dst_c1] = valid[src_r0:src_r1, src_c0:src_c1]
        take = missing & window
        if take.any():
            shifted = np.full((h, w), -1, dtype=np.int32)
            shifted[dst_r0:dst_r1, dst_c0:dst_c1] = flat[src_r0:src_r1, src_c0:src_c1]
            lookup[take] = shifted[take]
    still = lookup < 0
    lookup[still] = flat[still]
    return lookup


def resolve_texels(atlas: TextureAtlas, rows: np.ndarray, cols: np.ndarray):
    """Apply the nearest-valid redirect to raw texel indices."""
    flat = atlas.lookup[rows, cols]
    w = atlas.resolution[1]
    return flat // w, flat % w


# ---------------------------------------------------------------------------
# Scene manifest + mesh file IO
# ---------------------------------------------------------------------------

def load_scene(path, config=None) -> SceneGraph:
    """Load a scene manifest (JSON) and its referenced meshes.

    Manifest schema: {objects: [{id, mesh_path, translation: [3], scale: [3],
    rotation_quat: [4] (xyzw), name}], rooms: [...], style: text}. Meshes may
    be OBJ (v/vt/f) or glTF 2.0 (.gltf/.glb with POSITION, TEXCOORD_0,
    indices). Every mesh must carry UVs; refinement cannot run without them.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scene manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed scene manifest {path}: {e}") from e
    if not isinstance(manifest, dict):
        raise ConfigError("scene manifest must be a JSON object")
    base = path.parent
    objects = []
    for entry in manifest.get("objects", []):
        mesh, placement = _load_entry(entry, base)
        objects.append(SceneObject(
            object_id=_require(entry, "id"),
            mesh=mesh,
            placement=placement,
            name=entry.get("name", _require(entry, "id")),
        ))
    rooms = []
    for entry in manifest.get("rooms", []):
        mesh, placement = _load_entry(entry, base)
        rooms.append(SceneRoom(room_id=_require(entry, "id"), mesh=mesh, placement=placement))
    return SceneGraph(objects=objects, rooms=rooms, style=manifest.get("style", ""))


def _require(entry: dict, key: str):
    if key not in entry:
        raise ConfigError(f"scene manifest entry missing required field {key!r}")
    return entry[key]


def _load_entry(entry: dict, base: Path):
    mesh_path = base / _require(entry, "mesh_path")
    mesh = load_mesh(mesh_path)
    scale = np.asarray(entry.get("scale", [1.0, 1.0, 1.0]), dtype=np.float64).reshape(3)
    if np.any(scale <= 0):
        raise ConfigError(f"non-positive scale for {entry.get('id')}")
    if np.max(np.abs(scale - scale[0])) > 1e-6 * max(1.0, abs(scale[0])):
        raise ConfigError(
            f"non-uniform scale {scale.tolist()} for {entry.get('id')}: "
            "placements are uniform-scale only"
        )
    placement = Placement(
        translation=np.asarray(entry.get("translation", [0, 0, 0]), dtype=np.float64),
        scale=float(scale[0]),
        rotation=np.asarray(entry.get("rotation_quat", [0, 0, 0, 1]), dtype=np.float64),
    )
    return mesh, placement


def load_mesh(path) -> Mesh:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        mesh, _ = load_obj(path)
        return mesh
    if suffix in (".gltf", ".glb"):
        mesh, _ = load_gltf(path)
        return mesh
    raise ConfigError(f"unsupported mesh format {suffix!r} (use .obj/.gltf/.glb)")


def load_obj(path) -> tuple[Mesh, MeshReport]:
    """Parse OBJ v/vt/f data. Faces are fan-triangulated; vt is required."""
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    faces: list[list[tuple[int, int]]] = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                texcoords.append([float(parts[1]), float(parts[2])])
            elif tag == "f":
                corners = []
                for token in parts[1:]:
                    fields = token.split("/")
                    vi = int(fields[0])
                    vi = vi - 1 if vi > 0 else len(positions) + vi
                    if len(fields) < 2 or fields[1] == "":
                        raise GeometryError(
                            f"mesh has no UV parameterization: face corner {token!r} in {path}"
                        )
                    ti = int(fields[1])
                    ti = ti - 1 if ti > 0 else len(texcoords) + ti
                    corners.append((vi, ti))
                for k in range(1, len(corners) - 1):
                    faces.append([corners[0], corners[k], corners[k + 1]])
    if not faces:
        return clean_mesh(np.zeros((0, 3)), np.zeros((0, 3), np.int32), np.zeros((0, 3, 2)))
    if not texcoords:
        raise GeometryError(f"mesh has no UV parameterization: {path}")
    tris = np.array([[c[0] for c in f] for f in faces], dtype=np.int32)
    uv_idx = np.array([[c[1] for c in f] for f in faces], dtype=np.int64)
    vt = np.asarray(texcoords, dtype=np.float64)
    return clean_mesh(np.asarray(positions, dtype=np.float64), tris, vt[uv_idx])


def save_obj(mesh: Mesh, path) -> None:
    """Write OBJ with one vt per corner; round-trips topology exactly."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for uv_tri in mesh.uvs:
        for u, vv in uv_tri:
            lines.append(f"vt {u:.9g} {vv:.9g}")
    for t, tri in enumerate(mesh.triangles):
        base = 3 * t
        lines.append(
            f"f {tri[0] + 1}/{base + 1} {tri[1] + 1}/{base + 2} {tri[2] + 1}/{base + 3}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


_GLTF_COMPONENT = {5121: np.uint8, 5123: np.uint16, 5125: np.uint32, 5126: np.float32}
_GLTF_COUNT = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}


def load_gltf(path) -> tuple[Mesh, MeshReport]:
    """Minimal glTF 2.0 reader: POSITION + TEXCOORD_0 + indices, all
    primitives merged. glTF stores v with the origin at the top; it is
    flipped to the engine's v-up convention here."""
    path = Path(path)
    if path.suffix.lower() == ".glb":
        doc, bin_chunk = _parse_glb(path.read_bytes())
    else:
        doc = json.loads(path.read_text())
        bin_chunk = None
    buffers = []
    for buf in doc.get("buffers", []):
        uri = buf.get("uri")
        if uri is None:
            if bin_chunk is None:
                raise ConfigError(f"glTF buffer without uri and no GLB chunk: {path}")
            buffers.append(bin_chunk)
        elif uri.startswith("data:"):
            buffers.append(base64.b64decode(uri.split(",", 1)[1]))
        else:
            buffers.append((path.parent / uri).read_bytes())

    def read_accessor(idx: int) -> np.ndarray:
        acc = doc["accessors"][idx]
        view = doc["bufferViews"][acc["bufferView"]]
        data = buffers[view["buffer"]]
        dtype = _GLTF_COMPONENT[acc["componentType"]]
        ncomp = _GLTF_COUNT[acc["type"]]
        itemsize = np.dtype(dtype).itemsize * ncomp
        stride = view.get("byteStride", itemsize)
        start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
        count = acc["count"]
        if stride == itemsize:
            arr = np.frombuffer(data, dtype=dtype, count=count * ncomp, offset=start)
            return arr.reshape(count, ncomp)
        rows = [
            np.frombuffer(data, dtype=dtype, count=ncomp, offset=start + i * stride)
            for i in range(count)
        ]
        return np.stack(rows)

    all_v, all_t, all_uv = [], [], []
    vert_base = 0
    for mesh_def in doc.get("meshes", []):
        for prim in mesh_def.get("primitives", []):
            if prim.get("mode", 4) != 4:
                continue
            attrs = prim["attributes"]
            pos = read_accessor(attrs["POSITION"]).astype(np.float64)
            if "TEXCOORD_0" not in attrs:
                raise GeometryError(f"mesh has no UV parameterization: {path}")
            uv = read_accessor(attrs["TEXCOORD_0"]).astype(np.float64)
            uv[:, 1] = 1.0 - uv[:, 1]
            if "indices" in prim:
                idx = read_accessor(prim["indices"]).reshape(-1).astype(np.int64)
            else:
                idx = np.arange(len(pos), dtype=np.int64)
            tris = idx.reshape(-1, 3)
            all_v.append(pos)
            all_t.append(tris + vert_base)
            all_uv.append(uv[tris])
            vert_base += len(pos)
    if not all_v:
        raise GeometryError(f"glTF file contains no triangle primitives: {path}")
    return clean_mesh(np.concatenate(all_v), np.concatenate(all_t), np.concatenate(all_uv))


def _parse_glb(data: bytes):
    magic, version, _length = struct.unpack("<III", data[:12])
    if magic != 0x46546C67:
        raise ConfigError("not a GLB container")
    if version != 2:
        raise ConfigError(f"unsupported GLB version {version}")
    pos = 12
    doc = None
    bin_chunk = None
    while pos < len(data):
        chunk_len, chunk_type = struct.unpack("<II", data[pos : pos + 8])
        chunk = data[pos + 8 : pos + 8 + chunk_len]
        if chunk_type == 0x4E4F534A:  # JSON
            doc = json.loads(chunk.decode("utf-8"))
        elif chunk_type == 0x004E4942:  # BIN
            bin_chunk = chunk
        pos += 8 + chunk_len
    if doc is None:
        raise ConfigError("GLB container missing JSON chunk")
    return doc, bin_chunk


# ---------------------------------------------------------------------------
# Atlas PNG export
# ---------------------------------------------------------------------------

def atlas_color_png(atlas: TextureAtlas) -> bytes:
    from PIL import Image
    import io

    buf = io.BytesIO()
    Image.fromarray(atlas.color, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def atlas_state_png(atlas: TextureAtlas) -> bytes:
    """Sidecar state channel: UNWRITTEN 0, GENERATED 85, UPDATED 170, KEPT 255."""
    from PIL import Image
    import io

    buf = io.BytesIO()
    Image.fromarray((atlas.state * 85).astype(np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def load_atlas_images(mesh: Mesh, resolution: tuple[int, int],
                      color_png: bytes, state_png: bytes) -> TextureAtlas:
    """Rebuild a renderable atlas from its exported color/state PNG pair.

    Per-texel confidence is not persisted; it is reconstructed as 1.0 for
    written texels, which is enough for rendering and recomposition but
    not for resuming a sweep.
    """
    from PIL import Image
    import io

    atlas = new_atlas(mesh, resolution)
    color = np.asarray(Image.open(io.BytesIO(color_png)).convert("RGB"), dtype=np.uint8)
    state_gray = np.asarray(Image.open(io.BytesIO(state_png)).convert("L"), dtype=np.uint8)
    if color.shape[:2] != tuple(resolution) or state_gray.shape != tuple(resolution):
        raise ConfigError("atlas PNG resolution does not match requested resolution")
    atlas.color = color.copy()
    atlas.state = (state_gray // 85).astype(np.uint8)
    atlas.confidence = np.where(atlas.state != TexelState.UNWRITTEN, 1.0, 0.0)
    return atlas
