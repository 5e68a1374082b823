"""Geometry tests: every expected value is hand-computed or produced by an
independent scalar oracle written in this file.

Back-projection math:
    dir = K^-1 [u, v, 1]^T = [(u - cx)/fx, (v - cy)/fy, 1]
    p_cam = dir * depth                  (depth is planar z-depth)
    p_world = R @ p_cam + t
Patch (r, c) of a rows x cols grid over a width x height image sits at
    u = (c + 0.5) * width / cols,  v = (r + 0.5) * height / rows.
"""

import math

import numpy as np
import pytest

from gabev.errors import ContractViolationError, PoseValidationError
from gabev.features import FeatureMap
from gabev.geometry import (
    CameraIntrinsics,
    DepthMap,
    PointFeatureSet,
    Pose,
    Stream,
    backproject_patch_grid,
    compose,
    grid_pixel_centers,
    invert,
    resize_depth,
    world_to_agent,
)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation matrix from a normalized random quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def features_grid(rows, cols, dim=2, stream=Stream.VISUAL, fill=0.0):
    return FeatureMap(np.full((rows, cols, dim), fill, dtype=np.float32), stream)


# ---------------------------------------------------------------------------
# Intrinsics and poses


class TestIntrinsics:
    def test_from_hfov_60_degrees(self):
        # fx = (64/2) / tan(30 deg) = 32 / 0.57735 = 55.4256
        intr = CameraIntrinsics.from_hfov(60.0, 64, 64)
        assert intr.fx == pytest.approx(32.0 / math.tan(math.radians(30.0)), abs=1e-12)
        assert intr.fy == intr.fx
        assert (intr.cx, intr.cy) == (32.0, 32.0)

    def test_invariants_rejected(self):
        with pytest.raises(ContractViolationError):
            CameraIntrinsics(fx=0.0, fy=1.0, cx=0.0, cy=0.0, width=2, height=2)
        with pytest.raises(ContractViolationError):
            CameraIntrinsics(fx=1.0, fy=1.0, cx=5.0, cy=0.0, width=2, height=2)


class TestPose:
    def test_rejects_non_orthonormal(self):
        bad = np.eye(3)
        bad[0, 0] = 1.1
        with pytest.raises(PoseValidationError):
            Pose(bad, np.zeros(3))

    def test_rejects_reflection(self):
        # Orthonormal but det = -1.
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(PoseValidationError):
            Pose(refl, np.zeros(3))

    def test_compose_identity(self):
        rng = np.random.default_rng(3)
        p = Pose(random_rotation(rng), rng.normal(size=3))
        out = compose(Pose.identity(), p)
        np.testing.assert_array_equal(out.rotation, p.rotation)
        np.testing.assert_array_equal(out.translation, p.translation)

    def test_invert_identity(self):
        inv = invert(Pose.identity())
        np.testing.assert_array_equal(inv.rotation, np.eye(3))
        np.testing.assert_array_equal(inv.translation, np.zeros(3))

    def test_compose_applies_second_argument_first(self):
        # a = +90 deg yaw about y, b = translation by (1, 0, 0):
        # compose(a, b) maps the origin to a's rotation of (1,0,0).
        rot = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        a = Pose(rot, np.zeros(3))
        b = Pose(np.eye(3), np.array([1.0, 0.0, 0.0]))
        ab = compose(a, b)
        np.testing.assert_allclose(ab.transform(np.zeros((1, 3)))[0], rot @ [1, 0, 0], atol=1e-15)

    def test_compose_with_inverse_is_identity_1000_random_poses(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(1000):
            p = Pose(random_rotation(rng), rng.normal(scale=5.0, size=3))
            round_trip = compose(p, invert(p))
            worst = max(worst, np.abs(round_trip.rotation - np.eye(3)).max())
            worst = max(worst, np.abs(round_trip.translation).max())
        assert worst < 1e-10


# ---------------------------------------------------------------------------
# Back-projection


class TestBackproject:
    def test_identity_intrinsics_unit_grid(self):
        # fx=fy=1, cx=cy=0, width=height=1, single patch at center (0.5, 0.5),
        # depth 1 -> (u*D, v*D, D) = (0.5, 0.5, 1.0).
        intr = CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 1, 1)
        pts = backproject_patch_grid(
            features_grid(1, 1), DepthMap.full(1, 1, 1.0), intr, Pose.identity()
        )
        np.testing.assert_allclose(pts.points[0], [0.5, 0.5, 1.0], atol=1e-15)

    def test_zero_depth_dropped(self):
        intr = CameraIntrinsics(1.0, 1.0, 0.0, 0.0, 1, 1)
        pose = Pose(np.eye(3), np.array([1.0, 2.0, 3.0]))
        pts = backproject_patch_grid(
            features_grid(1, 1), DepthMap.full(1, 1, 0.0), intr, pose
        )
        assert len(pts) == 0

    def test_hand_worked_off_center_patch(self):
        # fx=fy=100, cx=cy=50, 100x100 image, 1x2 patch grid:
        # patch (0, 1) center = (75, 50); depth 2 ->
        # ((75-50)/100*2, (50-50)/100*2, 2) = (0.5, 0, 2).
        intr = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)
        pts = backproject_patch_grid(
            features_grid(1, 2), DepthMap.full(1, 2, 2.0), intr, Pose.identity()
        )
        np.testing.assert_allclose(pts.points[1], [0.5, 0.0, 2.0], atol=1e-12)
        # Reproject with u = fx * x / z + cx and recover u = 75.
        x, _, z = pts.points[1]
        assert intr.fx * x / z + intr.cx == pytest.approx(75.0, abs=1e-12)

    def test_dropped_point_accounting_is_exact(self):
        # |output| must equal the number of valid, nonzero-depth patches.
        rng = np.random.default_rng(5)
        rows, cols = 13, 9
        vals = rng.uniform(0.0, 4.0, size=(rows, cols)).astype(np.float32)
        vals[rng.uniform(size=(rows, cols)) < 0.2] = 0.0
        mask = rng.uniform(size=(rows, cols)) > 0.25
        depth = DepthMap(vals, mask)
        intr = CameraIntrinsics.from_hfov(60.0, 64, 64)
        pts = backproject_patch_grid(features_grid(rows, cols), depth, intr, Pose.identity())
        expected = int(np.count_nonzero(mask & (depth.values > 0)))
        assert len(pts) == expected

    def test_grid_mismatch_raises(self):
        intr = CameraIntrinsics.from_hfov(60.0, 64, 64)
        with pytest.raises(ContractViolationError):
            backproject_patch_grid(
                features_grid(2, 2), DepthMap.full(2, 3, 1.0), intr, Pose.identity()
            )

    def test_projection_round_trip_random(self):
        # Scalar pinhole projector as the oracle: u = fx x/z + cx. Points with
        # z > 0 projected then back-projected must come back within 1e-9.
        rng = np.random.default_rng(17)
        for _ in range(50):
            rot = random_rotation(rng)
            t = rng.normal(scale=3.0, size=3)
            pose = Pose(rot, t)
            intr = CameraIntrinsics(
                fx=rng.uniform(20, 200),
                fy=rng.uniform(20, 200),
                cx=rng.uniform(10, 54),
                cy=rng.uniform(10, 54),
                width=64,
                height=64,
            )
            rows, cols = 4, 4
            depth_vals = rng.uniform(0.5, 8.0, size=(rows, cols)).astype(np.float32)
            depth = DepthMap(depth_vals, np.ones((rows, cols), dtype=bool))
            pts = backproject_patch_grid(features_grid(rows, cols), depth, intr, pose)
            cam = (pts.points - t) @ rot  # back to camera frame
            u = intr.fx * cam[:, 0] / cam[:, 2] + intr.cx
            v = intr.fy * cam[:, 1] / cam[:, 2] + intr.cy
            uu, vv = grid_pixel_centers(rows, cols, intr.width, intr.height)
            np.testing.assert_allclose(u, uu.ravel(), atol=1e-9)
            np.testing.assert_allclose(v, vv.ravel(), atol=1e-9)
            np.testing.assert_allclose(cam[:, 2], depth_vals.astype(np.float64).ravel(), atol=1e-9)


class TestWorldToAgent:
    def test_identity_pose_is_noop(self):
        rng = np.random.default_rng(2)
        pts = PointFeatureSet(
            rng.normal(size=(5, 3)),
            rng.normal(size=(5, 2)).astype(np.float32),
            np.zeros(5, np.uint8),
            np.zeros(5, np.int32),
            np.arange(5, dtype=np.int32),
        )
        out = world_to_agent(pts, Pose.identity())
        np.testing.assert_array_equal(out.points, pts.points)

    def test_pure_translation(self):
        pts = PointFeatureSet(
            np.array([[1.0, 0.0, 0.0]]),
            np.zeros((1, 1), np.float32),
            np.zeros(1, np.uint8),
            np.zeros(1, np.int32),
            np.zeros(1, np.int32),
        )
        agent = Pose(np.eye(3), np.array([1.0, 0.0, 0.0]))
        out = world_to_agent(pts, agent)
        np.testing.assert_allclose(out.points[0], [0.0, 0.0, 0.0], atol=1e-15)

    def test_round_trip_through_agent_frame(self):
        # world_to_agent then mapping back with the pose recovers the input.
        rng = np.random.default_rng(23)
        agent = Pose(random_rotation(rng), rng.normal(size=3))
        pts = PointFeatureSet(
            rng.normal(scale=4.0, size=(40, 3)),
            rng.normal(size=(40, 3)).astype(np.float32),
            np.zeros(40, np.uint8),
            np.zeros(40, np.int32),
            np.arange(40, dtype=np.int32),
        )
        local = world_to_agent(pts, agent)
        back = agent.transform(local.points)
        np.testing.assert_allclose(back, pts.points, atol=1e-12)

    def test_isometry(self):
        rng = np.random.default_rng(29)
        agent = Pose(random_rotation(rng), rng.normal(size=3))
        pts = PointFeatureSet(
            rng.normal(scale=3.0, size=(30, 3)),
            np.zeros((30, 1), np.float32),
            np.zeros(30, np.uint8),
            np.zeros(30, np.int32),
            np.arange(30, dtype=np.int32),
        )
        out = world_to_agent(pts, agent)
        before = np.linalg.norm(pts.points[:, None, :] - pts.points[None, :, :], axis=2)
        after = np.linalg.norm(out.points[:, None, :] - out.points[None, :, :], axis=2)
        np.testing.assert_allclose(after, before, atol=1e-9)


# ---------------------------------------------------------------------------
# Bicubic depth resampling


def keys_weight(x: float, a: float = -0.5) -> float:
    ax = abs(x)
    if ax <= 1.0:
        return (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0
    if ax < 2.0:
        return a * ax**3 - 5.0 * a * ax**2 + 8.0 * a * ax - 4.0 * a
    return 0.0


def oracle_resize(values: np.ndarray, mask: np.ndarray, th: int, tw: int):
    """Scalar-loop Keys bicubic with clamp-to-edge and pixel-center mapping.
    Independent of the vectorized production path."""
    sh, sw = values.shape
    out = np.zeros((th, tw))
    out_mask = np.zeros((th, tw), dtype=bool)
    for r in range(th):
        sy = (r + 0.5) * (sh / th) - 0.5
        iy = math.floor(sy)
        for c in range(tw):
            sx = (c + 0.5) * (sw / tw) - 0.5
            ix = math.floor(sx)
            total = 0.0
            ok = True
            for dy in range(-1, 3):
                wy = keys_weight(sy - (iy + dy))
                ry = min(max(iy + dy, 0), sh - 1)
                for dx in range(-1, 3):
                    wx = keys_weight(sx - (ix + dx))
                    rx = min(max(ix + dx, 0), sw - 1)
                    total += wy * wx * float(values[ry, rx])
                    ok = ok and bool(mask[ry, rx])
            out[r, c] = max(total, 0.0)
            out_mask[r, c] = ok
    return out.astype(np.float32), out_mask


class TestResizeDepth:
    def test_constant_map_any_size(self):
        depth = DepthMap.full(4, 4, 3.0)
        for th, tw in [(2, 2), (7, 3), (9, 9), (1, 5)]:
            out = resize_depth(depth, th, tw)
            np.testing.assert_array_equal(out.values, np.full((th, tw), 3.0, np.float32))
            assert out.mask.all()

    def test_identity_resample_bitwise(self):
        rng = np.random.default_rng(31)
        vals = rng.uniform(0.1, 9.0, size=(6, 5)).astype(np.float32)
        depth = DepthMap(vals, np.ones((6, 5), dtype=bool))
        out = resize_depth(depth, 6, 5)
        assert np.array_equal(out.values, depth.values)

    def test_affine_ramp_exact_away_from_borders(self):
        # f(r, c) = 5 + 0.5 r - 0.25 c on a 12x12 grid, downsampled to 6x6.
        # Output (dr, dc) samples the source at (2 dr + 0.5, 2 dc + 0.5);
        # targets with 1 <= dr, dc <= 4 keep their 4x4 support interior,
        # where the Keys kernel reproduces affine fields exactly.
        r, c = np.meshgrid(np.arange(12.0), np.arange(12.0), indexing="ij")
        vals = (5.0 + 0.5 * r - 0.25 * c).astype(np.float32)
        out = resize_depth(DepthMap(vals, np.ones((12, 12), bool)), 6, 6)
        for dr in range(1, 5):
            for dc in range(1, 5):
                expected = 5.0 + 0.5 * (2 * dr + 0.5) - 0.25 * (2 * dc + 0.5)
                assert out.values[dr, dc] == pytest.approx(expected, abs=1e-6)

    def test_ramp_4x4_to_2x2_matches_scalar_oracle(self):
        # Every 2x2 target's support touches the clamped border here, so the
        # values come from the independent scalar oracle, not the analytic
        # ramp. (For the pure row ramp f=r: 0.4375 and 2.5625, not 0.5/2.5.)
        r, c = np.meshgrid(np.arange(4.0), np.arange(4.0), indexing="ij")
        vals = r.astype(np.float32)
        out = resize_depth(DepthMap(vals, np.ones((4, 4), bool)), 2, 2)
        exp_vals, exp_mask = oracle_resize(vals, np.ones((4, 4), bool), 2, 2)
        np.testing.assert_allclose(out.values, exp_vals, atol=1e-6)
        assert out.values[0, 0] == pytest.approx(0.4375, abs=1e-6)
        assert out.values[1, 0] == pytest.approx(2.5625, abs=1e-6)
        assert exp_mask.all() and out.mask.all()

    def test_matches_scalar_oracle_on_random_fields(self):
        rng = np.random.default_rng(37)
        for sh, sw, th, tw in [(8, 6, 5, 9), (5, 5, 12, 3), (9, 4, 4, 4), (6, 9, 2, 13)]:
            vals = rng.uniform(0.0, 10.0, size=(sh, sw)).astype(np.float32)
            mask = rng.uniform(size=(sh, sw)) > 0.15
            vals = np.where(mask, vals, 0.0).astype(np.float32)
            out = resize_depth(DepthMap(vals, mask), th, tw)
            exp_vals, exp_mask = oracle_resize(vals, mask, th, tw)
            np.testing.assert_array_equal(out.mask, exp_mask)
            np.testing.assert_allclose(
                out.values[out.mask], exp_vals[exp_mask], atol=1e-5
            )

    def test_single_invalid_pixel_poisons_exactly_its_support(self):
        vals = np.full((8, 8), 2.0, dtype=np.float32)
        mask = np.ones((8, 8), dtype=bool)
        mask[3, 4] = False
        out = resize_depth(DepthMap(vals, mask), 8, 8)
        # Identity mapping: target (r, c) samples source rows r-1..r+2 and
        # cols c-1..c+2 (clamped). Source (3, 4) sits in the support of
        # targets with r in 1..4 and c in 2..5, which all go invalid.
        expected = np.ones((8, 8), dtype=bool)
        expected[1:5, 2:6] = False
        np.testing.assert_array_equal(out.mask, expected)

    def test_zero_target_rejected(self):
        with pytest.raises(ContractViolationError):
            resize_depth(DepthMap.full(2, 2, 1.0), 0, 2)


class TestDepthMapInvariants:
    def test_negative_valid_depth_rejected(self):
        with pytest.raises(ContractViolationError):
            DepthMap(np.array([[-1.0]], dtype=np.float32), np.array([[True]]))

    def test_invalid_entries_are_zeroed(self):
        # NaN under an invalid mask bit must not survive into arithmetic.
        vals = np.array([[np.nan, 2.0]], dtype=np.float32)
        mask = np.array([[False, True]])
        depth = DepthMap(vals, mask)
        assert depth.values[0, 0] == 0.0
        assert depth.values[0, 1] == np.float32(2.0)
