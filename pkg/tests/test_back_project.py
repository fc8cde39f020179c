import numpy as np
import pytest

from instex.back_project import finalize_object, project_image
from instex.errors import ConfigError
from instex.partition import DenoiseSpec, Region, RegionMask, classify_view
from instex.raster import (
    CorrespondenceMap,
    rasterize_frame,
    render_color,
    render_depth,
    texel_correspondence,
)
from instex.scene_model import TexelState, new_atlas
from instex.synthesis import Mode, ProceduralStubBackend, SynthesisRequest, synthesize
from instex.view_schedule import CameraIntrinsics, ViewKind, Viewpoint, camera_matrices, object_viewpoints

from oracles import reference_gutter_fill


def synthetic_corr(atlas, visible, cosines, pix_rows, pix_cols, image_hw=(8, 8)):
    """Hand-built correspondence for unit cases."""
    n = len(atlas.table)
    h, w = image_hw
    return CorrespondenceMap(
        atlas_resolution=atlas.resolution,
        pix_mask=np.ones((h, w), dtype=bool),
        pix_depth=np.ones((h, w)),
        pix_tri=np.zeros((h, w), dtype=np.int32),
        pix_texel_row=np.zeros((h, w), dtype=np.int32),
        pix_texel_col=np.zeros((h, w), dtype=np.int32),
        pix_cosine=np.ones((h, w)),
        tex_visible=np.asarray(visible, dtype=bool),
        tex_pix_row=np.asarray(pix_rows, dtype=np.int32),
        tex_pix_col=np.asarray(pix_cols, dtype=np.int32),
        tex_cosine=np.asarray(cosines, dtype=np.float64),
        tex_depth=np.ones(n),
    )


def uniform_mask(region, hw=(8, 8)):
    return RegionMask(region=np.full(hw, np.uint8(region)))


@pytest.fixture
def tiny_atlas(quad_mesh):
    return new_atlas(quad_mesh, (2, 2))  # 4 texels, all valid


class TestProjectImage:
    def test_single_texel_written(self, tiny_atlas):
        n = len(tiny_atlas.table)
        vis = np.zeros(n, dtype=bool)
        vis[0] = True
        corr = synthetic_corr(tiny_atlas, vis, np.full(n, 1.0),
                              np.zeros(n), np.zeros(n))
        image = np.full((8, 8, 3), 77, dtype=np.uint8)
        report = project_image(image, corr, uniform_mask(Region.GENERATE), tiny_atlas)
        assert report.texels_written == 1
        r, c = tiny_atlas.table.rows[0], tiny_atlas.table.cols[0]
        assert (tiny_atlas.color[r, c] == 77).all()
        assert tiny_atlas.confidence[r, c] == 1.0
        assert tiny_atlas.state[r, c] == TexelState.GENERATED

    def test_grazing_cosine_skipped(self, tiny_atlas):
        n = len(tiny_atlas.table)
        vis = np.ones(n, dtype=bool)
        corr = synthetic_corr(tiny_atlas, vis, np.full(n, 0.1),
                              np.zeros(n), np.zeros(n))
        image = np.full((8, 8, 3), 99, dtype=np.uint8)
        report = project_image(image, corr, uniform_mask(Region.GENERATE), tiny_atlas)
        assert report.texels_written == 0
        assert report.texels_skipped == n
        assert (tiny_atlas.state == TexelState.UNWRITTEN).all()

    def test_better_confidence_wins(self, tiny_atlas):
        n = len(tiny_atlas.table)
        r, c = tiny_atlas.table.rows, tiny_atlas.table.cols
        tiny_atlas.color[r, c] = 10
        tiny_atlas.state[r, c] = TexelState.GENERATED
        tiny_atlas.confidence[r, c] = 0.9
        corr = synthetic_corr(tiny_atlas, np.ones(n, bool), np.full(n, 0.6),
                              np.zeros(n), np.zeros(n))
        image = np.full((8, 8, 3), 222, dtype=np.uint8)
        report = project_image(image, corr, uniform_mask(Region.GENERATE), tiny_atlas)
        assert report.texels_written == 0
        assert (tiny_atlas.color[r, c] == 10).all()
        assert (tiny_atlas.confidence[r, c] == 0.9).all()

    def test_keep_region_untouched(self, tiny_atlas):
        n = len(tiny_atlas.table)
        corr = synthetic_corr(tiny_atlas, np.ones(n, bool), np.ones(n),
                              np.zeros(n), np.zeros(n))
        image = np.full((8, 8, 3), 50, dtype=np.uint8)
        report = project_image(image, corr, uniform_mask(Region.KEEP), tiny_atlas)
        assert report.texels_written == 0
        assert (tiny_atlas.state == TexelState.UNWRITTEN).all()

    def test_best_of_views_oracle(self, quad_mesh):
        """Confidence/color after K fabricated views equals a per-texel
        replay of the best-cosine rule."""
        atlas = new_atlas(quad_mesh, (4, 4))
        n = len(atlas.table)
        rng = np.random.default_rng(23)
        views = []
        for v in range(6):
            cosines = np.round(rng.uniform(0, 1, n), 3)
            color = rng.integers(0, 255, size=3)
            views.append((cosines, color))
            corr = synthetic_corr(atlas, np.ones(n, bool), cosines,
                                  np.zeros(n), np.zeros(n))
            image = np.tile(color.astype(np.uint8), (8, 8, 1))
            project_image(image, corr, uniform_mask(Region.GENERATE), atlas)
        # oracle: independent per-texel loop
        for i in range(n):
            best_cos = 0.0
            best_color = None
            for cosines, color in views:
                cos = cosines[i]
                if cos >= 0.2 and cos > best_cos:
                    best_cos = cos
                    best_color = color
            r, c = atlas.table.rows[i], atlas.table.cols[i]
            assert atlas.confidence[r, c] == pytest.approx(best_cos)
            if best_color is not None:
                assert (atlas.color[r, c] == best_color).all()
            else:
                assert atlas.state[r, c] == TexelState.UNWRITTEN

    def test_resolution_mismatch_rejected(self, tiny_atlas):
        n = len(tiny_atlas.table)
        corr = synthetic_corr(tiny_atlas, np.ones(n, bool), np.ones(n),
                              np.zeros(n), np.zeros(n))
        with pytest.raises(ConfigError, match="resolution"):
            project_image(np.zeros((4, 4, 3), np.uint8), corr,
                          uniform_mask(Region.GENERATE), tiny_atlas)

    def test_never_writes_occluded_texels(self, stacked_mesh, front_camera):
        atlas = new_atlas(stacked_mesh, (64, 64))
        corr = texel_correspondence(stacked_mesh, atlas, front_camera)
        h, w = corr.image_resolution
        mask = RegionMask(region=np.where(corr.pix_mask, np.uint8(Region.GENERATE),
                                          np.uint8(Region.BACKGROUND)))
        image = np.full((h, w, 3), 128, dtype=np.uint8)
        project_image(image, corr, mask, atlas)
        far = atlas.table.tri >= 2
        rows, cols = atlas.table.rows[far], atlas.table.cols[far]
        assert (atlas.state[rows, cols] == TexelState.UNWRITTEN).all()


class TestRoundTrip:
    @pytest.mark.parametrize("fixture,az", [("quad_mesh", 0.0), ("sphere_mesh", 30.0)])
    def test_render_reproject_round_trip(self, fixture, az, request):
        mesh = request.getfixturevalue(fixture)
        atlas = new_atlas(mesh, (128, 128))
        # fully-KEPT atlas with piecewise-constant colors and floor confidence
        table = atlas.table
        bucket = (table.point * 4).astype(np.int64).sum(axis=1) % 5
        palette = np.array([[200, 40, 40], [40, 200, 40], [40, 40, 200],
                            [180, 180, 40], [40, 180, 180]], dtype=np.uint8)
        atlas.color[table.rows, table.cols] = palette[bucket]
        atlas.state[table.rows, table.cols] = TexelState.KEPT
        atlas.confidence[table.rows, table.cols] = 0.01
        before = atlas.color.copy()

        k = CameraIntrinsics(height=256, width=256)
        cam = camera_matrices(Viewpoint(az, 15.0, 1.5, (0, 0, 0), ViewKind.OBJECT_ORBIT), k)
        frame = rasterize_frame(mesh, cam)
        rgb, _ = render_color(mesh, atlas, cam, frame=frame)
        corr = texel_correspondence(mesh, atlas, cam, frame=frame)
        mask = RegionMask(region=np.where(frame.mask, np.uint8(Region.GENERATE),
                                          np.uint8(Region.BACKGROUND)))
        project_image(rgb, corr, mask, atlas)

        strong = corr.tex_visible & (corr.tex_cosine >= 0.5)
        rows, cols = table.rows[strong], table.cols[strong]
        diff = np.abs(atlas.color[rows, cols].astype(np.int16) -
                      before[rows, cols].astype(np.int16))
        assert diff.mean() <= 2.0 / 255.0 * 255.0  # mean |delta| <= 2 of 255


def test_confidence_non_decreasing_over_sweep(cube_mesh):
    atlas = new_atlas(cube_mesh, (64, 64))
    k = CameraIntrinsics(height=128, width=128)
    backend = ProceduralStubBackend()
    prev = atlas.confidence.copy()
    for i, view in enumerate(object_viewpoints()):
        cam = camera_matrices(view, k)
        frame = rasterize_frame(cube_mesh, cam)
        corr = texel_correspondence(cube_mesh, atlas, cam, frame=frame)
        mask = classify_view(atlas, corr)
        init, _ = render_color(cube_mesh, atlas, cam, frame=frame)
        req = SynthesisRequest(
            mode=Mode.DEPTH_INPAINT, prompt="x", denoise=DenoiseSpec(50, 1.0), seed=i,
            resolution=(128, 128), depth=render_depth(cube_mesh, cam, frame=frame),
            region_mask=mask, init_image=init,
        )
        resp = synthesize(req, backend)
        project_image(resp.image, corr, mask, atlas)
        assert (atlas.confidence >= prev - 1e-12).all()
        prev = atlas.confidence.copy()


class TestFinalize:
    def test_written_becomes_kept_unwritten_stays(self, sphere_mesh):
        atlas = new_atlas(sphere_mesh, (64, 64))
        table = atlas.table
        half = len(table) // 2
        rows, cols = table.rows[:half], table.cols[:half]
        atlas.color[rows, cols] = 120
        atlas.state[rows, cols] = TexelState.GENERATED
        atlas.confidence[rows, cols] = 0.8
        finalize_object(atlas)
        assert (atlas.state[rows, cols] == TexelState.KEPT).all()
        rest_r, rest_c = table.rows[half:], table.cols[half:]
        assert (atlas.state[rest_r, rest_c] == TexelState.UNWRITTEN).all()

    def test_fully_written_all_kept(self, quad_mesh):
        atlas = new_atlas(quad_mesh, (16, 16))
        table = atlas.table
        atlas.color[table.rows, table.cols] = 90
        atlas.state[table.rows, table.cols] = TexelState.GENERATED
        atlas.confidence[table.rows, table.cols] = 1.0
        finalize_object(atlas)
        valid = atlas.valid
        assert (atlas.state[valid] == TexelState.KEPT).all()
        assert not (atlas.state[valid] == TexelState.UNWRITTEN).any()

    def test_gutter_matches_reference_dilation(self, cube_mesh):
        atlas = new_atlas(cube_mesh, (48, 48))
        table = atlas.table
        rng = np.random.default_rng(9)
        colors = rng.integers(0, 255, size=(len(table), 3), dtype=np.uint8)
        atlas.color[table.rows, table.cols] = colors
        atlas.state[table.rows, table.cols] = TexelState.GENERATED
        atlas.confidence[table.rows, table.cols] = 0.7
        expected = reference_gutter_fill(
            atlas.color, atlas.valid,
            np.full(atlas.resolution, True), iterations=2,
        )
        finalize_object(atlas)
        assert np.array_equal(atlas.color, expected)

    def test_gutter_copies_boundary_color(self, quad_mesh):
        # shrink the chart artificially so a gutter ring exists
        atlas = new_atlas(quad_mesh, (16, 16))
        object.__setattr__(atlas, "valid", atlas.valid.copy())
        atlas.valid.setflags(write=True)
        atlas.valid[:, :] = False
        atlas.valid[4:12, 4:12] = True
        atlas.state[:] = TexelState.UNWRITTEN
        atlas.confidence[:] = 0.0
        atlas.state[4:12, 4:12] = TexelState.GENERATED
        atlas.confidence[4:12, 4:12] = 1.0
        atlas.color[:] = 0
        atlas.color[4:12, 4:12] = 200
        finalize_object(atlas)
        assert (atlas.color[3, 4:12] == 200).all()  # first ring
        assert (atlas.color[2, 4:12] == 200).all()  # second ring
        assert (atlas.color[1, 4:12] == 0).all()  # beyond the 2-texel gutter
