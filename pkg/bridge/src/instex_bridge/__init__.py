"""HTTP bridge hosting generation pipelines behind the texture engine's
wire protocol."""

__version__ = "0.1.0"

from .app import create_app
from .config import BridgeConfig
from .pipelines import GenerationJob, MockPipeline, build_pipeline

__all__ = ["BridgeConfig", "GenerationJob", "MockPipeline", "build_pipeline", "create_app"]
