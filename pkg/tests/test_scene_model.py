import base64
import json

import numpy as np
import pytest

from instex import primitives
from instex.errors import AtlasStateError, ConfigError, GeometryError
from instex.scene_model import (
    Mesh,
    TexelState,
    clean_mesh,
    load_obj,
    load_gltf,
    load_scene,
    new_atlas,
    resolve_texels,
    save_obj,
    validate_mesh,
)

from oracles import brute_force_valid_mask


def write_manifest(tmp_path, objects, rooms=(), style="Baroque"):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({"objects": objects, "rooms": list(rooms), "style": style}))
    return path


class TestLoadScene:
    def test_single_cube_identity_placement(self, tmp_path):
        save_obj(primitives.cube(), tmp_path / "cube.obj")
        path = write_manifest(tmp_path, [{
            "id": "cube", "mesh_path": "cube.obj",
            "translation": [0, 0, 0], "scale": [1, 1, 1],
            "rotation_quat": [0, 0, 0, 1], "name": "cube",
        }])
        scene = load_scene(path)
        assert len(scene.objects) == 1
        assert scene.objects[0].placement.scale == 1.0
        assert np.allclose(scene.objects[0].placement.translation, 0.0)

    def test_mesh_without_uvs_is_hard_error(self, tmp_path):
        (tmp_path / "bare.obj").write_text(
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        )
        path = write_manifest(tmp_path, [{"id": "o", "mesh_path": "bare.obj", "name": "o"}])
        with pytest.raises(GeometryError, match="no UV parameterization"):
            load_scene(path)

    def test_fixture_scene_counts_match_raw_json(self, scene_manifest):
        # independent reader: raw JSON, no engine code
        raw = json.loads(scene_manifest.read_text())
        scene = load_scene(scene_manifest)
        assert len(scene.objects) == len(raw["objects"]) == 4
        assert len(scene.rooms) == len(raw["rooms"]) == 1
        assert {o.object_id for o in scene.objects} == {o["id"] for o in raw["objects"]}

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_scene(tmp_path / "nope.json")

    def test_malformed_manifest(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="malformed"):
            load_scene(path)

    def test_missing_mesh_file(self, tmp_path):
        path = write_manifest(tmp_path, [{"id": "o", "mesh_path": "gone.obj", "name": "o"}])
        with pytest.raises(ConfigError, match="not found"):
            load_scene(path)

    def test_non_uniform_scale_rejected(self, tmp_path):
        save_obj(primitives.cube(), tmp_path / "cube.obj")
        path = write_manifest(tmp_path, [{
            "id": "o", "mesh_path": "cube.obj", "scale": [1, 2, 1], "name": "o",
        }])
        with pytest.raises(ConfigError, match="non-uniform"):
            load_scene(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        save_obj(primitives.cube(), tmp_path / "cube.obj")
        entry = {"id": "same", "mesh_path": "cube.obj", "name": "x"}
        path = write_manifest(tmp_path, [entry, dict(entry)])
        with pytest.raises(ConfigError, match="duplicate"):
            load_scene(path)


class TestMeshValidation:
    def test_clean_cube_empty_report(self, cube_mesh):
        report = validate_mesh(cube_mesh)
        assert report.degenerate_dropped == 0
        assert report.uv_clamped == 0

    def test_degenerate_triangle_dropped(self):
        vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        triangles = np.array([[0, 1, 2], [0, 1, 1]])  # second has two equal corners
        uvs = np.tile(np.array([[0, 0], [1, 0], [0, 1]], dtype=float), (2, 1, 1))
        mesh, report = clean_mesh(vertices, triangles, uvs)
        assert report.degenerate_dropped == 1
        assert mesh.num_triangles == 1
        # report-only path sees the same defect without mutating
        dirty = Mesh(vertices, triangles, uvs)
        assert validate_mesh(dirty).degenerate_dropped == 1

    def test_uv_clamp_recorded(self):
        vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        triangles = np.array([[0, 1, 2]])
        uvs = np.array([[[0, 0], [1.0001, 0], [0, 1]]])
        mesh, report = clean_mesh(vertices, triangles, uvs)
        assert report.uv_clamped == 1
        assert mesh.uvs.max() <= 1.0

    def test_nonfinite_vertex_rejected(self):
        with pytest.raises(GeometryError, match="non-finite"):
            Mesh(np.array([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]]),
                 np.array([[0, 1, 2]]),
                 np.zeros((1, 3, 2)))

    def test_triangle_index_out_of_range(self):
        with pytest.raises(GeometryError, match="out of range"):
            Mesh(np.zeros((2, 3)), np.array([[0, 1, 2]]), np.zeros((1, 3, 2)))


class TestObjRoundTrip:
    def test_save_load_preserves_geometry(self, tmp_path, sphere_mesh):
        path = tmp_path / "sphere.obj"
        save_obj(sphere_mesh, path)
        loaded, report = load_obj(path)
        assert report.is_clean()
        assert loaded.num_triangles == sphere_mesh.num_triangles
        assert np.array_equal(loaded.triangles, sphere_mesh.triangles)
        scale = np.abs(sphere_mesh.vertices).max()
        assert np.abs(loaded.vertices - sphere_mesh.vertices).max() <= 1e-6 * scale
        assert np.abs(loaded.uvs - sphere_mesh.uvs).max() <= 1e-6


def minimal_gltf(tmp_path):
    """Quad as embedded-buffer glTF: positions, TEXCOORD_0, uint16 indices."""
    positions = np.array([[-0.5, -0.5, 0], [0.5, -0.5, 0], [0.5, 0.5, 0], [-0.5, 0.5, 0]],
                         dtype=np.float32)
    # glTF v runs top-down; engine flips it back
    uvs = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], dtype=np.float32)
    indices = np.array([0, 1, 2, 0, 2, 3], dtype=np.uint16)
    blob = positions.tobytes() + uvs.tobytes() + indices.tobytes()
    doc = {
        "asset": {"version": "2.0"},
        "buffers": [{
            "byteLength": len(blob),
            "uri": "data:application/octet-stream;base64," + base64.b64encode(blob).decode(),
        }],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": 48},
            {"buffer": 0, "byteOffset": 48, "byteLength": 32},
            {"buffer": 0, "byteOffset": 80, "byteLength": 12},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": 4, "type": "VEC3"},
            {"bufferView": 1, "componentType": 5126, "count": 4, "type": "VEC2"},
            {"bufferView": 2, "componentType": 5123, "count": 6, "type": "SCALAR"},
        ],
        "meshes": [{"primitives": [{
            "attributes": {"POSITION": 0, "TEXCOORD_0": 1}, "indices": 2,
        }]}],
    }
    path = tmp_path / "quad.gltf"
    path.write_text(json.dumps(doc))
    return path


def test_gltf_loader_matches_quad(tmp_path, quad_mesh):
    mesh, report = load_gltf(minimal_gltf(tmp_path))
    assert report.is_clean()
    assert mesh.num_triangles == 2
    assert np.allclose(mesh.vertices, quad_mesh.vertices)
    assert np.allclose(np.sort(mesh.uvs.reshape(-1, 2), axis=0),
                       np.sort(quad_mesh.uvs.reshape(-1, 2), axis=0))


def test_glb_container_round_trip(tmp_path):
    import struct

    gltf_path = minimal_gltf(tmp_path)
    doc = json.loads(gltf_path.read_text())
    uri = doc["buffers"][0].pop("uri")
    blob = base64.b64decode(uri.split(",", 1)[1])
    json_bytes = json.dumps(doc).encode()
    json_bytes += b" " * (-len(json_bytes) % 4)
    blob += b"\x00" * (-len(blob) % 4)
    glb = (struct.pack("<III", 0x46546C67, 2, 12 + 8 + len(json_bytes) + 8 + len(blob))
           + struct.pack("<II", len(json_bytes), 0x4E4F534A) + json_bytes
           + struct.pack("<II", len(blob), 0x004E4942) + blob)
    glb_path = tmp_path / "quad.glb"
    glb_path.write_bytes(glb)
    mesh, report = load_gltf(glb_path)
    assert report.is_clean()
    assert mesh.num_triangles == 2


def test_png16_round_trip():
    from instex.png16 import read_png16, write_gray16, write_rgb16

    rng = np.random.default_rng(8)
    gray = rng.integers(0, 65535, (11, 7), dtype=np.uint16)
    assert np.array_equal(read_png16(write_gray16(gray)), gray)
    rgb = rng.integers(0, 65535, (5, 9, 3), dtype=np.uint16)
    assert np.array_equal(read_png16(write_rgb16(rgb)), rgb)


class TestNewAtlas:
    @pytest.mark.parametrize("fixture", ["quad_mesh", "cube_mesh", "seamed_cube_mesh",
                                         "sphere_mesh"])
    def test_valid_mask_matches_point_in_triangle_oracle(self, fixture, request):
        mesh = request.getfixturevalue(fixture)
        atlas = new_atlas(mesh, (64, 64))
        assert np.array_equal(atlas.valid, brute_force_valid_mask(mesh, 64, 64))

    def test_quad_fully_charted_area_fraction(self, quad_mesh):
        atlas = new_atlas(quad_mesh, (128, 128))
        assert atlas.valid.all()  # chart covers the whole UV square

    def test_single_texel(self, quad_mesh):
        atlas = new_atlas(quad_mesh, (1, 1))
        assert atlas.valid.shape == (1, 1)
        assert atlas.valid[0, 0]  # quad chart covers (0.5, 0.5)

    def test_empty_charts_all_invalid(self, caplog):
        vertices = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        mesh = Mesh(vertices, np.array([[0, 1, 2]]),
                    np.array([[[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]]))
        import logging

        with caplog.at_level(logging.WARNING):
            atlas = new_atlas(mesh, (16, 16))
        assert not atlas.valid.any()
        assert any("empty UV charts" in r.message for r in caplog.records)

    def test_zero_dimension_rejected(self, quad_mesh):
        with pytest.raises(ConfigError):
            new_atlas(quad_mesh, (0, 64))

    def test_fresh_atlas_state(self, quad_atlas):
        assert (quad_atlas.state == TexelState.UNWRITTEN).all()
        assert (quad_atlas.confidence == 0).all()
        quad_atlas.check_invariants()

    def test_lookup_redirects_to_nearest_valid(self, cube_mesh):
        atlas = new_atlas(cube_mesh, (64, 64))
        h, w = atlas.resolution
        rows, cols = np.nonzero(~atlas.valid)
        rr, cc = resolve_texels(atlas, rows, cols)
        redirected = atlas.valid[rr, cc]
        # every invalid texel within Chebyshev distance 2 of a chart must redirect
        for i, (r, c) in enumerate(zip(rows, cols)):
            window = atlas.valid[max(0, r - 2):r + 3, max(0, c - 2):c + 3]
            if window.any():
                assert redirected[i]
                assert max(abs(int(rr[i]) - r), abs(int(cc[i]) - c)) <= 2
            else:
                assert (rr[i], cc[i]) == (r, c)

    def test_valid_texels_resolve_to_themselves(self, quad_atlas):
        rows, cols = np.nonzero(quad_atlas.valid)
        rr, cc = resolve_texels(quad_atlas, rows, cols)
        assert np.array_equal(rr, rows)
        assert np.array_equal(cc, cols)


class TestStateTransitions:
    def test_legal_sweep_transitions(self, quad_atlas):
        a = quad_atlas.copy()
        a.confidence[0, 0] = 0.5
        a.apply_states(np.array([0]), np.array([0]), np.uint8(TexelState.GENERATED))
        a.apply_states(np.array([0]), np.array([0]), np.uint8(TexelState.UPDATED))
        a.apply_states(np.array([0]), np.array([0]), np.uint8(TexelState.KEPT))
        assert a.transition_log[-1]["transitions"] == {"UPDATED->KEPT": 1}

    def test_illegal_transition_raises(self, quad_atlas):
        a = quad_atlas.copy()
        with pytest.raises(AtlasStateError, match="illegal"):
            a.apply_states(np.array([0]), np.array([0]), np.uint8(TexelState.KEPT))

    def test_unwritten_to_kept_requires_refine_phase(self, quad_atlas):
        a = quad_atlas.copy()
        a.confidence[0, 0] = 1.0
        a.apply_states(np.array([0]), np.array([0]), np.uint8(TexelState.KEPT),
                       phase="refine")
        assert a.state[0, 0] == TexelState.KEPT
