"""Live interop: the texture engine drives a real bridge over HTTP.

The engine package is a dev-time dependency here (the bridge serves it in
production); the test is skipped when it is not installed. The engine's
own suite never imports the bridge.
"""

import json
import socket
import threading
import time

import pytest

instex = pytest.importorskip("instex")

import uvicorn  # noqa: E402

from instex_bridge.app import create_app  # noqa: E402
from instex_bridge.config import BridgeConfig  # noqa: E402


@pytest.fixture(scope="module")
def live_bridge():
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    app = create_app(BridgeConfig(engine="mock", max_concurrent_jobs=2))
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    import requests

    deadline = time.time() + 10
    url = f"http://127.0.0.1:{port}"
    while time.time() < deadline:
        try:
            if requests.get(url + "/health", timeout=0.5).status_code == 200:
                break
        except requests.RequestException:
            time.sleep(0.05)
    else:
        raise RuntimeError("bridge did not come up")
    yield url, app
    server.should_exit = True
    thread.join(timeout=5)


def test_engine_pipeline_against_live_bridge(live_bridge, tmp_path):
    url, app = live_bridge
    from instex import primitives
    from instex.pipeline import PipelineConfig, run_pipeline

    manifest_path = primitives.write_fixture_scene(tmp_path / "scene", objects=1,
                                                   room=False)
    config = PipelineConfig(
        scene=str(manifest_path), seed=5, backend=url,
        atlas_resolution=64, image_resolution=96,
        out_dir=str(tmp_path / "out"), save_views=False,
    )
    manifest = run_pipeline(config)
    assert manifest["errors"] == []
    assert len(manifest["objects"]) == 1
    assert manifest["eval_renders"] == 20
    # the style image went through POST /style and is resolvable server-side
    assert manifest["style_image_id"] in app.state.styles
    out = tmp_path / "out"
    assert (out / "objects" / "bed" / "atlas.png").exists()
    written = json.loads((out / "manifest.json").read_text())
    assert written["style_image_id"] == manifest["style_image_id"]


def test_engine_http_backend_single_call(live_bridge):
    url, _ = live_bridge
    import numpy as np

    from instex.partition import DenoiseSpec
    from instex.raster import DepthMap
    from instex.synthesis import HttpBackend, Mode, SynthesisRequest, synthesize

    h = w = 32
    backend = HttpBackend(url, backoff_s=0.01)
    req = SynthesisRequest(
        mode=Mode.DEPTH2IMG, prompt="a Nordic style stool",
        denoise=DenoiseSpec(50, 1.0), seed=3, resolution=(h, w),
        depth=DepthMap(depth=np.full((h, w), 1.2), mask=np.ones((h, w), bool)),
    )
    resp = synthesize(req, backend)
    assert resp.image.shape == (h, w, 3)
    assert resp.backend_id == "mock-procedural"
