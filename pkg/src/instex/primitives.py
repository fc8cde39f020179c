"""Parametric fixture meshes: quads, boxes, spheres, room shells.

These are the geometry used by tests and demo scenes. All generators
produce CCW-outward winding, per-face UV charts with gutter-friendly
margins, and hard edges where appropriate (box faces do not share
vertices, so vertex normals equal face normals).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .scene_model import Mesh, save_obj

# (normal axis, sign, u axis, v axis) with u x v = outward normal
_BOX_FACES = [
    (0, +1, 1, 2),
    (0, -1, 2, 1),
    (1, +1, 2, 0),
    (1, -1, 0, 2),
    (2, +1, 0, 1),
    (2, -1, 1, 0),
]


def quad(size: float = 1.0) -> Mesh:
    """Unit quad in the z=0 plane facing +z, chart covering all of UV."""
    s = size / 2.0
    vertices = np.array([
        [-s, -s, 0.0], [s, -s, 0.0], [s, s, 0.0], [-s, s, 0.0],
    ])
    triangles = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    uv_corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    uvs = uv_corners[triangles]
    return Mesh(vertices, triangles, uvs)


def box(extents=(1.0, 1.0, 1.0), chart_margin: float = 0.04,
        chart_order=None) -> Mesh:
    """Axis-aligned box with six independent UV charts in a 3x2 grid.

    chart_margin is the UV-space gap around each chart (fractions of the
    full square), wide enough that off-chart texel rounding never reaches
    a neighboring chart.
    """
    e = np.asarray(extents, dtype=np.float64) / 2.0
    order = chart_order if chart_order is not None else list(range(6))
    vertices = []
    triangles = []
    uvs = []
    for face_idx, (axis, sign, ua, va) in enumerate(_BOX_FACES):
        center = np.zeros(3)
        center[axis] = sign * e[axis]
        du = np.zeros(3)
        du[ua] = e[ua]
        dv = np.zeros(3)
        dv[va] = e[va]
        base = len(vertices)
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            vertices.append(center + su * du + sv * dv)
        cell = order[face_idx]
        gx, gy = cell % 3, cell // 3
        u0 = gx / 3.0 + chart_margin
        u1 = (gx + 1) / 3.0 - chart_margin
        v0 = gy / 2.0 + chart_margin
        v1 = (gy + 1) / 2.0 - chart_margin
        chart = {(-1, -1): (u0, v0), (1, -1): (u1, v0), (1, 1): (u1, v1), (-1, 1): (u0, v1)}
        corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
        for tri in ((0, 1, 2), (0, 2, 3)):
            triangles.append([base + tri[0], base + tri[1], base + tri[2]])
            uvs.append([chart[corners[k]] for k in tri])
    return Mesh(np.array(vertices), np.array(triangles, dtype=np.int32), np.array(uvs))


def cube(size: float = 1.0) -> Mesh:
    return box((size, size, size))


def seamed_cube(size: float = 1.0) -> Mesh:
    """Cube whose charts are shuffled and widely separated: every 3D edge
    between faces is distant in UV, the worst case for seam handling."""
    return box((size, size, size), chart_margin=0.06, chart_order=[0, 3, 1, 4, 2, 5])


def uv_sphere(slices: int = 16, stacks: int = 11, radius: float = 0.5) -> Mesh:
    """Lat-long sphere; slices=16, stacks=11 gives exactly 320 triangles.

    One chart covers the whole UV square with the usual seam at u=0/1 and
    duplicated pole vertices per column.
    """
    vertices = []
    grid = {}
    for r in range(stacks + 1):
        theta = math.pi * r / stacks  # 0 at +y pole
        for c in range(slices + 1):
            phi = 2.0 * math.pi * c / slices
            x = radius * math.sin(theta) * math.sin(phi)
            y = radius * math.cos(theta)
            z = radius * math.sin(theta) * math.cos(phi)
            grid[(r, c)] = len(vertices)
            vertices.append([x, y, z])

    def uv(r, c):
        return (c / slices, 1.0 - r / stacks)

    triangles = []
    uvs = []
    for r in range(stacks):
        for c in range(slices):
            i00, i01 = grid[(r, c)], grid[(r, c + 1)]
            i10, i11 = grid[(r + 1, c)], grid[(r + 1, c + 1)]
            if r > 0:  # upper triangle collapses at the top pole
                triangles.append([i00, i10, i01])
                uvs.append([uv(r, c), uv(r + 1, c), uv(r, c + 1)])
            if r < stacks - 1:  # lower triangle collapses at the bottom pole
                triangles.append([i01, i10, i11])
                uvs.append([uv(r, c + 1), uv(r + 1, c), uv(r + 1, c + 1)])
    return Mesh(np.array(vertices), np.array(triangles, dtype=np.int32), np.array(uvs))


def room_shell(width: float = 4.0, height: float = 3.0, depth: float = 5.0) -> Mesh:
    """Room box with outward winding; render its interior with FRONT culling."""
    return box((width, height, depth))


def stacked_quads(separation: float = 0.2, size: float = 1.0) -> Mesh:
    """Two parallel +z-facing quads; the nearer one occludes the farther.

    Charts sit side by side in UV (left half near, right half far)."""
    s = size / 2.0
    z0 = separation / 2.0
    z1 = -separation / 2.0
    vertices = np.array([
        [-s, -s, z0], [s, -s, z0], [s, s, z0], [-s, s, z0],
        [-s, -s, z1], [s, -s, z1], [s, s, z1], [-s, s, z1],
    ])
    triangles = np.array([
        [0, 1, 2], [0, 2, 3],
        [4, 5, 6], [4, 6, 7],
    ], dtype=np.int32)
    near_chart = np.array([[0.02, 0.02], [0.46, 0.02], [0.46, 0.98], [0.02, 0.98]])
    far_chart = np.array([[0.54, 0.02], [0.98, 0.02], [0.98, 0.98], [0.54, 0.98]])
    uvs = np.stack([
        near_chart[[0, 1, 2]], near_chart[[0, 2, 3]],
        far_chart[[0, 1, 2]], far_chart[[0, 2, 3]],
    ])
    return Mesh(vertices, triangles, uvs)


def write_fixture_scene(directory, objects: int = 4, room: bool = True,
                        style: str = "Baroque") -> Path:
    """Write a small OBJ + manifest scene for tests and demos.

    Four furniture stand-ins (two boxes, a sphere, a flat quad) inside a
    room shell, with distinct placements. Returns the manifest path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    catalog = [
        ("bed", box((2.0, 0.6, 1.6)), [-0.8, 0.3, -1.2], 1.0, "bed"),
        ("table", box((0.8, 0.8, 0.8)), [1.0, 0.4, 0.8], 1.0, "coffee table"),
        ("lamp", uv_sphere(), [1.2, 1.5, -1.4], 0.5, "lamp"),
        ("rug", quad(2.0), [0.0, 0.01, 0.3], 1.0, "rug"),
    ]
    entries = []
    for obj_id, mesh, translation, scale, name in catalog[:objects]:
        mesh_file = f"{obj_id}.obj"
        save_obj(mesh, directory / mesh_file)
        rotation = [0.0, 0.0, 0.0, 1.0]
        if obj_id == "rug":  # lay flat: rotate -90 deg about x so +z faces up
            rotation = [-math.sin(math.pi / 4), 0.0, 0.0, math.cos(math.pi / 4)]
        entries.append({
            "id": obj_id,
            "mesh_path": mesh_file,
            "translation": translation,
            "scale": [scale, scale, scale],
            "rotation_quat": rotation,
            "name": name,
        })
    rooms = []
    if room:
        shell = room_shell(4.0, 3.0, 5.0)
        save_obj(shell, directory / "room.obj")
        rooms.append({
            "id": "room",
            "mesh_path": "room.obj",
            "translation": [0.0, 1.5, 0.0],
            "scale": [1.0, 1.0, 1.0],
            "rotation_quat": [0.0, 0.0, 0.0, 1.0],
        })
    manifest = {"objects": entries, "rooms": rooms, "style": style}
    path = directory / "scene.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
