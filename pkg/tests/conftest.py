import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from instex import primitives
from instex.scene_model import new_atlas
from instex.synthesis import ProceduralStubBackend
from instex.view_schedule import CameraIntrinsics, Viewpoint, ViewKind, camera_matrices


@pytest.fixture(scope="session")
def quad_mesh():
    return primitives.quad()


@pytest.fixture(scope="session")
def cube_mesh():
    return primitives.cube()


@pytest.fixture(scope="session")
def seamed_cube_mesh():
    return primitives.seamed_cube()


@pytest.fixture(scope="session")
def sphere_mesh():
    return primitives.uv_sphere()


@pytest.fixture(scope="session")
def room_mesh():
    return primitives.room_shell(1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def stacked_mesh():
    return primitives.stacked_quads()


@pytest.fixture
def small_intrinsics():
    return CameraIntrinsics(height=128, width=128)


@pytest.fixture
def front_camera(small_intrinsics):
    view = Viewpoint(0.0, 0.0, 2.0, (0.0, 0.0, 0.0), ViewKind.OBJECT_ORBIT)
    return camera_matrices(view, small_intrinsics)


@pytest.fixture
def stub_backend():
    return ProceduralStubBackend()


@pytest.fixture
def quad_atlas(quad_mesh):
    return new_atlas(quad_mesh, (64, 64))


@pytest.fixture
def scene_manifest(tmp_path):
    return primitives.write_fixture_scene(tmp_path / "scene")
