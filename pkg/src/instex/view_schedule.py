"""Deterministic viewpoint schedules and camera matrices.

Object sweeps orbit the canonical object at distance 1 and elevation 15
degrees in 45-degree azimuth steps (8 views), then add a top and a bottom
view. Room sweeps put the camera at the room center and pan it around the
up axis, plus straight-up and straight-down views.

Camera convention: right-handed, y-up. A viewpoint's direction is
dir = (cos(el) sin(az), sin(el), cos(el) cos(az)); object cameras sit at
look_at + distance * dir looking inward, room cameras sit at the center
looking outward along dir.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, GeometryError


class ViewKind(str, Enum):
    OBJECT_ORBIT = "object_orbit"
    OBJECT_TOP = "object_top"
    OBJECT_BOTTOM = "object_bottom"
    ROOM_PANO = "room_pano"
    ROOM_UP = "room_up"
    ROOM_DOWN = "room_down"


_POLE_KINDS = {ViewKind.OBJECT_TOP, ViewKind.OBJECT_BOTTOM, ViewKind.ROOM_UP, ViewKind.ROOM_DOWN}

OBJECT_ORBIT_ELEVATION = 15.0
OBJECT_ORBIT_DISTANCE = 1.0
OBJECT_AZIMUTH_STEP = 45.0


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float  # degrees in [0, 360)
    elevation: float  # degrees in [-90, 90], w.r.t. the xz-plane
    distance: float  # 0 for ROOM_* kinds (camera at the room center)
    look_at: tuple[float, float, float]
    kind: ViewKind

    def direction(self) -> np.ndarray:
        az = math.radians(self.azimuth)
        el = math.radians(self.elevation)
        return np.array([
            math.cos(el) * math.sin(az),
            math.sin(el),
            math.cos(el) * math.cos(az),
        ])

    def camera_position(self) -> np.ndarray:
        look = np.asarray(self.look_at, dtype=np.float64)
        if self.kind in (ViewKind.ROOM_PANO, ViewKind.ROOM_UP, ViewKind.ROOM_DOWN):
            return look - self.direction()  # look_at = center + dir, camera at center
        return look + self.distance * self.direction()

    def to_dict(self) -> dict:
        return {
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "distance": self.distance,
            "look_at": list(self.look_at),
            "kind": self.kind.value,
        }


@dataclass(frozen=True)
class CameraIntrinsics:
    fov_deg: float = 60.0  # vertical field of view
    height: int = 512
    width: int = 512
    near: float = 0.01
    far: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"fov must be in (0, 180), got {self.fov_deg}")
        if self.near <= 0 or self.near >= self.far:
            raise ConfigError(f"need 0 < near < far, got {self.near}, {self.far}")
        if self.height < 1 or self.width < 1:
            raise ConfigError("image resolution must be at least 1x1")


def object_viewpoints_with_step(azimuth_step: float = OBJECT_AZIMUTH_STEP) -> list[Viewpoint]:
    """Orbit schedule at a custom azimuth step, plus top and bottom views."""
    step = float(azimuth_step)
    if step <= 0 or abs(360.0 / step - round(360.0 / step)) > 1e-9:
        raise ConfigError(f"azimuth step {azimuth_step} does not divide 360")
    views = [
        Viewpoint(k * step, OBJECT_ORBIT_ELEVATION, OBJECT_ORBIT_DISTANCE,
                  (0.0, 0.0, 0.0), ViewKind.OBJECT_ORBIT)
        for k in range(int(round(360.0 / step)))
    ]
    views.append(Viewpoint(0.0, 90.0, OBJECT_ORBIT_DISTANCE, (0.0, 0.0, 0.0),
                           ViewKind.OBJECT_TOP))
    views.append(Viewpoint(0.0, -90.0, OBJECT_ORBIT_DISTANCE, (0.0, 0.0, 0.0),
                           ViewKind.OBJECT_BOTTOM))
    return views


def object_viewpoints() -> list[Viewpoint]:
    """The fixed 10-view object schedule: 8 orbit views, then top, then bottom.

    Pure constant: the 45-degree orbit excludes the duplicate 360-degree
    sample, so 8 orbit views + top + bottom = 10.
    """
    return object_viewpoints_with_step(OBJECT_AZIMUTH_STEP)


def room_viewpoints(azimuth_step: float = 45.0,
                    center: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> list[Viewpoint]:
    """Panoramic room schedule: outward-facing ring at the center plus up/down."""
    step = float(azimuth_step)
    if step <= 0 or abs(360.0 / step - round(360.0 / step)) > 1e-9:
        raise ConfigError(f"azimuth step {azimuth_step} does not divide 360")
    c = np.asarray(center, dtype=np.float64)
    views = []
    for k in range(int(round(360.0 / step))):
        az = k * step
        direction = Viewpoint(az, 0.0, 0.0, (0, 0, 0), ViewKind.ROOM_PANO).direction()
        look = tuple((c + direction).tolist())
        views.append(Viewpoint(az, 0.0, 0.0, look, ViewKind.ROOM_PANO))
    views.append(Viewpoint(0.0, 90.0, 0.0, tuple((c + [0, 1, 0]).tolist()), ViewKind.ROOM_UP))
    views.append(Viewpoint(0.0, -90.0, 0.0, tuple((c + [0, -1, 0]).tolist()), ViewKind.ROOM_DOWN))
    return views


@dataclass(frozen=True)
class Camera:
    """View/projection matrices plus the raw quantities raster needs."""

    view: np.ndarray  # (4, 4) world -> camera
    proj: np.ndarray  # (4, 4) camera -> clip, NDC depth 0 at near, 1 at far
    position: np.ndarray
    forward: np.ndarray  # unit vector, camera look direction
    intrinsics: CameraIntrinsics


def camera_matrices(v: Viewpoint, k: CameraIntrinsics) -> Camera:
    """Build the look-at view matrix and perspective projection for a viewpoint.

    Up is +y everywhere except the straight-up/straight-down views, which
    use +z to dodge the look-at singularity at the poles.
    """
    pos = v.camera_position()
    look = np.asarray(v.look_at, dtype=np.float64)
    offset = look - pos
    dist = np.linalg.norm(offset)
    if dist < 1e-12:
        raise GeometryError(f"camera position coincides with look_at for {v.kind.value}")
    forward = offset / dist
    up = np.array([0.0, 0.0, 1.0]) if v.kind in _POLE_KINDS else np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    true_up = np.cross(right, forward)
    view = np.eye(4)
    view[0, :3] = right
    view[1, :3] = true_up
    view[2, :3] = -forward
    view[:3, 3] = -view[:3, :3] @ pos
    proj = _perspective(k)
    return Camera(view=view, proj=proj, position=pos, forward=forward, intrinsics=k)


def _perspective(k: CameraIntrinsics) -> np.ndarray:
    f = 1.0 / math.tan(math.radians(k.fov_deg) / 2.0)
    aspect = k.width / k.height
    a = k.far / (k.near - k.far)
    proj = np.zeros((4, 4))
    proj[0, 0] = f / aspect
    proj[1, 1] = f
    proj[2, 2] = a
    proj[2, 3] = k.near * a
    proj[3, 2] = -1.0
    return proj


def project_points(camera: Camera, points: np.ndarray):
    """World points -> (continuous pixel coords (N, 2) as (row, col), view depth).

    View depth is the distance along the camera forward axis (positive in
    front). Pixel centers sit at integer coordinates; row 0 is the top of
    the image. Points behind the camera get depth <= 0 and unusable pixels.
    """
    pts = np.asarray(points, dtype=np.float64)
    hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    cam = hom @ camera.view.T
    depth = -cam[:, 2]
    clip = cam @ camera.proj.T
    w = np.where(np.abs(clip[:, 3]) < 1e-30, 1e-30, clip[:, 3])
    ndc = clip[:, :2] / w[:, None]
    k = camera.intrinsics
    col = (ndc[:, 0] + 1.0) * 0.5 * k.width - 0.5
    row = (1.0 - ndc[:, 1]) * 0.5 * k.height - 0.5
    return np.stack([row, col], axis=1), depth


def dump_schedules(room_azimuth_step: float = 45.0) -> str:
    """JSON dump of both schedules for inspection and test fixtures."""
    payload = {
        "object_viewpoints": [v.to_dict() for v in object_viewpoints()],
        "room_viewpoints": [v.to_dict() for v in room_viewpoints(room_azimuth_step)],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
