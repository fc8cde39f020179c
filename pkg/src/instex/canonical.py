"""Canonical-space transforms: unit-cube normalization and scene recomposition.

Objects are textured in a canonical frame: bbox centered at the origin and
uniformly scaled so the longest extent is exactly 1 (the mesh fits
[-0.5, 0.5]^3). Uniform rather than per-axis scaling keeps texel density
and view-angle statistics undistorted; the returned placement undoes the
transform exactly.
"""

from __future__ import annotations

from .errors import GeometryError
from .scene_model import Mesh, Placement, SceneGraph

__all__ = ["Placement", "canonicalize", "recompose"]


def canonicalize(mesh: Mesh, placement_in: Placement) -> tuple[Mesh, Placement]:
    """Center a mesh at the origin and scale its max bbox extent to 1.

    Returns the canonical mesh and the placement that maps canonical space
    back to the original world position (composing placement_in on top of
    the inverse normalization).
    """
    if not mesh.num_vertices:
        raise GeometryError("cannot canonicalize an empty mesh")
    lo, hi = mesh.bbox()
    extent = hi - lo
    scale = float(extent.max())
    if scale <= 0.0:
        raise GeometryError("degenerate bounding box: all extents are zero")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) / scale
    canonical = Mesh(verts, mesh.triangles, mesh.uvs, mesh.normals)
    rot = placement_in.rotation_matrix()
    placement_out = Placement(
        translation=rot @ (placement_in.scale * center) + placement_in.translation,
        scale=placement_in.scale * scale,
        rotation=placement_in.rotation,
    )
    return canonical, placement_out


def recompose(scene: SceneGraph, textured: dict) -> SceneGraph:
    """Restore textured canonical meshes to their world placements.

    `scene` is the canonicalized scene graph (placements as returned by
    canonicalize); `textured` maps object/room id -> (canonical Mesh,
    TextureAtlas). Every scene entry must have a textured entry. Atlases
    ride along unchanged in the returned scene's `atlases` map.
    """
    out_objects = []
    atlases = {}
    for obj in scene.objects:
        if obj.object_id not in textured:
            raise GeometryError(f"no textured entry for object {obj.object_id!r}")
        mesh_c, atlas = textured[obj.object_id]
        world = _to_world(mesh_c, obj.placement)
        out_objects.append(type(obj)(obj.object_id, world, Placement.identity(), obj.name))
        atlases[obj.object_id] = atlas
    out_rooms = []
    for room in scene.rooms:
        if room.room_id not in textured:
            raise GeometryError(f"no textured entry for room {room.room_id!r}")
        mesh_c, atlas = textured[room.room_id]
        world = _to_world(mesh_c, room.placement)
        out_rooms.append(type(room)(room.room_id, world, Placement.identity()))
        atlases[room.room_id] = atlas
    recomposed = SceneGraph(objects=out_objects, rooms=out_rooms, style=scene.style)
    recomposed.atlases = atlases
    return recomposed


def _to_world(mesh: Mesh, placement: Placement) -> Mesh:
    verts = placement.apply(mesh.vertices)
    return Mesh(verts, mesh.triangles, mesh.uvs)
