import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdbev import synth
from pdbev.depth_model import B_MIN, laplace_pdf
from pdbev.errors import DomainError
from pdbev.geometry import CameraModel, cameras_from_rig
from pdbev.lifting import ViewInput, lift
from pdbev.tensors_io import Box, GridConfig, RoadRect, Scene

from scenes import rig_cameras, wall_grid, wall_scene


def _pitched_camera(pitch_deg=20.0, size=(48, 64), height=1.5):
    p = math.radians(pitch_deg)
    c, s = math.cos(p), math.sin(p)
    R = np.array([[1.0, 0, 0], [0, -s, -c], [0, c, -s]])
    H, W = size
    K = np.array([[40.0, 0, (W - 1) / 2], [0, 40.0, (H - 1) / 2], [0, 0, 1]])
    return CameraModel(K=K, R=R, T=-R @ np.array([0.0, 0.0, height]), image_size=size)


def _rz(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


boxes = st.tuples(
    st.floats(-20, 20), st.floats(1, 30), st.floats(-2, 3), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 5)
).map(lambda t: Box((t[0], t[1], t[2]), (t[0] + t[3], t[1] + t[4], t[2] + t[5])))


class TestRaycast:
    def test_wall_depth(self):
        (cam,) = rig_cameras(1)
        depth = synth.raycast_depth(wall_scene(), cam, 64, 64)
        np.testing.assert_allclose(depth, 10.0, atol=1e-5)

    def test_empty_scene(self):
        (cam,) = rig_cameras(1)
        np.testing.assert_array_equal(synth.raycast_depth(Scene(has_ground=False), cam), synth.FAR_DEPTH)

    def test_size_must_match_camera(self):
        (cam,) = rig_cameras(1)
        with pytest.raises(DomainError):
            synth.raycast_depth(Scene(), cam, 32, 64)

    def test_ground_rises_toward_horizon(self):
        cam = _pitched_camera()
        depth, kind, _ = synth.raycast(Scene(has_ground=True), cam)
        assert np.all(np.diff(depth, axis=0) <= 0)
        assert (kind == synth.HIT_GROUND).any() and (kind == synth.HIT_NONE).any()

    def test_ground_depth_by_hand(self):
        cam = _pitched_camera(pitch_deg=30.0)
        H, W = cam.image_size
        depth = synth.raycast_depth(Scene(has_ground=True), cam)
        # the optical axis meets the ground after 1.5 / sin 30 = 3 m
        v, u = (H - 1) / 2, (W - 1) / 2
        centre = depth[int(v - 0.5) : int(v + 1.5), int(u - 0.5) : int(u + 1.5)].mean()
        assert centre == pytest.approx(3.0, rel=2e-2)

    def test_hit_points_lie_on_surfaces(self):
        cam = _pitched_camera()
        box = Box((-2.0, 4.0, 0.0), (2.0, 6.0, 1.0))
        depth, kind, pts = synth.raycast(Scene(occluders=(box,), has_ground=True), cam)
        on_box = pts[kind == synth.HIT_BOX]
        assert on_box.size
        lo, hi = np.array(box.min), np.array(box.max)
        assert np.all((on_box >= lo - 1e-9) & (on_box <= hi + 1e-9))
        assert np.all(np.min(np.minimum(np.abs(on_box - lo), np.abs(on_box - hi)), axis=1) < 1e-9)
        np.testing.assert_allclose(pts[kind == synth.HIT_GROUND][:, 2], 0.0, atol=1e-9)
        # stored depth is camera z, not ray length
        z = (cam.R @ pts.reshape(-1, 3).T + cam.T[:, None])[2].reshape(depth.shape)
        np.testing.assert_allclose(z, depth, rtol=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(boxes, max_size=3), boxes, st.booleans())
    def test_adding_occluder_never_increases_depth(self, base, extra, ground):
        cam = _pitched_camera(size=(12, 16))
        before = synth.raycast_depth(Scene(occluders=tuple(base), has_ground=ground), cam)
        after = synth.raycast_depth(Scene(occluders=tuple(base) + (extra,), has_ground=ground), cam)
        assert np.all(after <= before)


class TestDeltaParams:
    def test_constant_depth(self):
        prm = synth.delta_params(np.full((3, 4), 10.0), 0.05)
        np.testing.assert_array_equal(prm[..., 0], 10.0)
        np.testing.assert_array_equal(prm[..., 1], 0.05)
        assert laplace_pdf(10.0, prm[0, 0, 0], prm[0, 0, 1]) == pytest.approx(10.0, rel=1e-14)

    def test_clamped(self):
        assert synth.delta_params(np.ones((1, 1)), 1e-6)[0, 0, 1] == B_MIN

    def test_nonpositive_depth(self):
        with pytest.raises(DomainError):
            synth.delta_params(np.array([[1.0, 0.0]]), 0.05)


class TestRenderGtBev:
    GRID = GridConfig((0, 0, 0), (8, 4, 2), (0.5, 0.5, 0.5), (4, 2), 1.0)

    def test_full_cover(self):
        scene = Scene(road_rects=(RoadRect((0, 0), (4, 2)),))
        np.testing.assert_array_equal(synth.render_gt_bev(scene, self.GRID), np.ones((4, 2)))

    def test_left_half(self):
        scene = Scene(road_rects=(RoadRect((0, 0), (2, 2)),))
        out = synth.render_gt_bev(scene, self.GRID)
        np.testing.assert_array_equal(out[:2], 1.0)
        np.testing.assert_array_equal(out[2:], 0.0)

    def test_no_roads(self):
        np.testing.assert_array_equal(synth.render_gt_bev(Scene(), self.GRID), np.zeros((4, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.permutations(range(3)))
    def test_order_invariant(self, order):
        rects = (RoadRect((0, 0), (1, 1)), RoadRect((0.5, 0.5), (2.5, 1.5)), RoadRect((3, 0), (4, 2)))
        base = synth.render_gt_bev(Scene(road_rects=rects), self.GRID)
        perm = synth.render_gt_bev(Scene(road_rects=tuple(rects[i] for i in order)), self.GRID)
        np.testing.assert_array_equal(base, perm)


class TestMakeRig:
    def test_single_forward_camera(self):
        rig = synth.make_rig(1, 70.0, 64, 64, 1.5)
        (cam,) = cameras_from_rig(rig)
        np.testing.assert_allclose(cam.center, [0, 0, 1.5], atol=1e-12)
        np.testing.assert_allclose(cam.R[2], [0, 1, 0], atol=1e-12)
        # half width over focal length spans half the field of view
        assert 32 / cam.K[0, 0] == pytest.approx(math.tan(math.radians(35)), rel=1e-12)

    def test_six_cameras_yaw_step(self):
        rig = synth.make_rig(6, 70.0, 64, 64, 1.5)
        assert len(rig.cameras) == 6
        step = _rz(math.radians(60))
        for a, b in zip(rig.cameras, rig.cameras[1:]):
            np.testing.assert_allclose(b.R, a.R @ step.T, atol=1e-9)
            assert np.degrees(np.arccos(np.clip(a.R[2] @ b.R[2], -1, 1))) == pytest.approx(60.0)

    def test_at_least_one(self):
        with pytest.raises(DomainError):
            synth.make_rig(0, 70.0, 64, 64, 1.5)


class TestFeaturesAndSamples:
    def test_pixel_features(self):
        scene = Scene(road_rects=(RoadRect((-3, 0), (3, 30)),), has_ground=True)
        cam = _pitched_camera()
        f = synth.pixel_features(scene, cam)
        assert f.shape == (48, 64, 4)
        assert f[5, 7, synth.FEAT_U] == 7 and f[5, 7, synth.FEAT_V] == 5
        np.testing.assert_array_equal(f[..., synth.FEAT_ONE], 1.0)
        assert f[-1, 32, synth.FEAT_ROAD] == 1.0 and f[0, 32, synth.FEAT_ROAD] == 0.0

    def test_sparse_samples(self):
        depth = np.arange(1, 65, dtype=float).reshape(8, 8)
        s = synth.sparse_samples(depth, stride=4)
        np.testing.assert_array_equal(s, [[0, 0, 1], [0, 4, 5], [4, 0, 33], [4, 4, 37]])

    def test_decode_ratio(self):
        m = np.array([[[2.0, 4.0], [1.0, 0.0]]])
        np.testing.assert_array_equal(synth.decode_ratio(m, 0, 1), [[0.5, 0.0]])

    def test_lifted_pixel_coordinates_decode_to_projection(self):
        (cam,) = rig_cameras(1)
        scene = wall_scene()
        grid = wall_grid()
        hits = synth.raycast(scene, cam)
        view = ViewInput(synth.pixel_features(scene, cam, hits), synth.delta_params(hits[0], 0.05), cam)
        feat, lik = lift([view], grid)
        occupied = lik > 1e-6 * lik.max()
        assert occupied.sum() > 50
        u = synth.decode_ratio(feat, synth.FEAT_U, synth.FEAT_ONE)[occupied]
        v = synth.decode_ratio(feat, synth.FEAT_V, synth.FEAT_ONE)[occupied]
        uv, _, _ = cam.project(grid.centers()[occupied])
        assert np.max(np.abs(u - uv[:, 0])) < 1.0
        assert np.max(np.abs(v - uv[:, 1])) < 1.0


class TestGeometricVisibility:
    def test_wall(self):
        (cam,) = rig_cameras(1)
        pts = np.array([[0.0, 5.0, 1.5], [0.0, 15.0, 1.5], [0.0, -5.0, 1.5]])
        np.testing.assert_array_equal(synth.geometric_visibility(wall_scene(), [cam], pts), [True, False, False])

    def test_grazing_edge_not_blocked(self):
        (cam,) = rig_cameras(1)
        box = Box((0.0, 5.0, 0.0), (1.0, 6.0, 3.0))
        # the segment to (2, 10) touches the box only along its edge x=1, y=5
        pts = np.array([[2.0, 10.0, 1.5], [1.5, 10.0, 1.5]])
        np.testing.assert_array_equal(synth.geometric_visibility(Scene(occluders=(box,)), [cam], pts), [True, False])

    def test_below_ground(self):
        (cam,) = rig_cameras(1)
        pts = np.array([[0.0, 8.0, -0.1], [0.0, 8.0, 0.1]])
        np.testing.assert_array_equal(synth.geometric_visibility(Scene(has_ground=True), [cam], pts), [False, True])
