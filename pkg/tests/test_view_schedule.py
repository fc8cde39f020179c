import json
import math

import numpy as np
import pytest

from instex.errors import ConfigError, GeometryError
from instex.view_schedule import (
    CameraIntrinsics,
    ViewKind,
    Viewpoint,
    camera_matrices,
    dump_schedules,
    object_viewpoints,
    project_points,
    room_viewpoints,
)


class TestObjectSchedule:
    def test_exactly_ten_views(self):
        views = object_viewpoints()
        assert len(views) == 10
        orbit = [v for v in views if v.kind == ViewKind.OBJECT_ORBIT]
        assert [v.azimuth for v in orbit] == [0, 45, 90, 135, 180, 225, 270, 315]
        assert all(v.elevation == 15.0 for v in orbit)
        assert all(v.distance == 1.0 for v in orbit)
        assert views[8].kind == ViewKind.OBJECT_TOP
        assert views[9].kind == ViewKind.OBJECT_BOTTOM

    def test_first_view_camera_position(self):
        pos = object_viewpoints()[0].camera_position()
        expected = [0.0, math.sin(math.radians(15)), math.cos(math.radians(15))]
        assert np.allclose(pos, expected)
        assert pos[1] == pytest.approx(0.2588, abs=1e-4)
        assert pos[2] == pytest.approx(0.9659, abs=1e-4)

    def test_top_view_position(self):
        top = object_viewpoints()[8]
        assert np.allclose(top.camera_position(), [0.0, 1.0, 0.0], atol=1e-12)
        assert top.look_at == (0.0, 0.0, 0.0)

    def test_schedule_is_pure_constant(self):
        assert object_viewpoints() == object_viewpoints()

    def test_direction_coverage(self):
        # worst gap of this schedule is ~55 deg (azimuth midway between orbit
        # views at elevation ~ -35); assert the true bound over 10k samples
        dirs = np.stack([v.direction() for v in object_viewpoints()])
        rng = np.random.default_rng(3)
        samples = rng.normal(size=(10_000, 3))
        samples /= np.linalg.norm(samples, axis=1, keepdims=True)
        cos_best = (samples @ dirs.T).max(axis=1)
        worst_angle = math.degrees(math.acos(cos_best.min()))
        assert worst_angle <= 56.0


class TestRoomSchedule:
    def test_step_45_gives_ten(self):
        views = room_viewpoints(45)
        assert len(views) == 10
        assert sum(v.kind == ViewKind.ROOM_PANO for v in views) == 8
        assert views[-2].kind == ViewKind.ROOM_UP
        assert views[-1].kind == ViewKind.ROOM_DOWN

    def test_step_90_gives_six(self):
        assert len(room_viewpoints(90)) == 6

    def test_step_7_rejected(self):
        with pytest.raises(ConfigError, match="does not divide"):
            room_viewpoints(7)

    def test_cameras_sit_at_center_facing_outward(self):
        center = (1.0, 2.0, 3.0)
        for v in room_viewpoints(90, center=center):
            assert np.allclose(v.camera_position(), center, atol=1e-12)
            assert np.allclose(
                np.asarray(v.look_at) - center, v.direction(), atol=1e-12
            )


class TestCameraMatrices:
    def test_front_view_pose(self, small_intrinsics):
        v = Viewpoint(0.0, 0.0, 2.0, (0, 0, 0), ViewKind.OBJECT_ORBIT)
        cam = camera_matrices(v, small_intrinsics)
        assert np.allclose(cam.position, [0, 0, 2])
        assert np.allclose(cam.forward, [0, 0, -1])

    def test_look_at_projects_to_image_center(self, small_intrinsics):
        for v in object_viewpoints():
            cam = camera_matrices(v, small_intrinsics)
            pix, depth = project_points(cam, np.array([v.look_at]))
            k = small_intrinsics
            assert abs(pix[0, 0] - (k.height - 1) / 2) <= 0.5
            assert abs(pix[0, 1] - (k.width - 1) / 2) <= 0.5
            assert depth[0] == pytest.approx(max(v.distance, 1.0))

    def test_near_plane_maps_to_ndc_zero(self, small_intrinsics):
        v = Viewpoint(0.0, 0.0, 2.0, (0, 0, 0), ViewKind.OBJECT_ORBIT)
        cam = camera_matrices(v, small_intrinsics)
        for dist, expected in ((cam.intrinsics.near, 0.0), (cam.intrinsics.far, 1.0)):
            point = cam.position + dist * cam.forward
            hom = np.append(point, 1.0)
            clip = cam.proj @ (cam.view @ hom)
            assert clip[2] / clip[3] == pytest.approx(expected, abs=1e-9)

    def test_view_matrix_maps_camera_to_origin(self, small_intrinsics):
        for v in object_viewpoints() + room_viewpoints(90):
            cam = camera_matrices(v, small_intrinsics)
            mapped = cam.view @ np.append(cam.position, 1.0)
            assert np.abs(mapped[:3]).max() <= 1e-6

    def test_pole_views_use_z_up(self, small_intrinsics):
        top = object_viewpoints()[8]
        cam = camera_matrices(top, small_intrinsics)  # must not be singular
        assert np.isfinite(cam.view).all()

    def test_coincident_camera_rejected(self, small_intrinsics):
        v = Viewpoint(0.0, 15.0, 0.0, (0, 0, 0), ViewKind.OBJECT_ORBIT)
        with pytest.raises(GeometryError, match="coincides"):
            camera_matrices(v, small_intrinsics)

    def test_intrinsics_validation(self):
        with pytest.raises(ConfigError):
            CameraIntrinsics(fov_deg=180.0)
        with pytest.raises(ConfigError):
            CameraIntrinsics(near=2.0, far=1.0)


def test_dump_schedules_is_json():
    payload = json.loads(dump_schedules())
    assert len(payload["object_viewpoints"]) == 10
    assert len(payload["room_viewpoints"]) == 10
    assert payload["object_viewpoints"][0] == {
        "azimuth": 0.0, "elevation": 15.0, "distance": 1.0,
        "look_at": [0.0, 0.0, 0.0], "kind": "object_orbit",
    }
