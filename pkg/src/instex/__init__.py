"""Coarse-to-fine texture synthesis engine for 3D indoor scenes."""

__version__ = "0.1.0"

from .canonical import canonicalize, recompose
from .errors import (
    AtlasStateError,
    BackendError,
    ConfigError,
    GeometryError,
    InstexError,
)
from .pipeline import PipelineConfig, object_prompt, run_pipeline
from .scene_model import (
    Mesh,
    Placement,
    SceneGraph,
    TexelState,
    TextureAtlas,
    load_scene,
    new_atlas,
    validate_mesh,
)
from .synthesis import Mode, ProceduralStubBackend, SynthesisRequest, make_backend
from .view_schedule import CameraIntrinsics, Viewpoint, camera_matrices, object_viewpoints

__all__ = [
    "AtlasStateError",
    "BackendError",
    "CameraIntrinsics",
    "ConfigError",
    "GeometryError",
    "InstexError",
    "Mesh",
    "Mode",
    "PipelineConfig",
    "Placement",
    "ProceduralStubBackend",
    "SceneGraph",
    "SynthesisRequest",
    "TexelState",
    "TextureAtlas",
    "Viewpoint",
    "camera_matrices",
    "canonicalize",
    "load_scene",
    "make_backend",
    "new_atlas",
    "object_prompt",
    "object_viewpoints",
    "recompose",
    "run_pipeline",
    "validate_mesh",
]
