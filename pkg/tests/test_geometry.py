import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from panoscene.geometry import (
    CameraSpec,
    ErpGrid,
    angles_to_direction,
    direction_to_pixel,
    erp_to_perspective,
    perspective_to_erp,
    pixel_to_direction,
    rig_angles,
    rotation_from_angles,
    tangent_rig,
)
from panoscene.metrics import psnr

angle = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


class TestPixelDirection:
    def test_center_pixel_is_forward(self):
        d = pixel_to_direction(ErpGrid(512, 1024), 255.5, 511.5)
        np.testing.assert_allclose(d, [0, 0, 1], atol=1e-15)

    def test_hand_evaluated_pixel(self):
        d = pixel_to_direction(ErpGrid(4, 8), 0.5, 6.5)
        np.testing.assert_allclose(d, [0.5, math.sqrt(0.5), -0.5], atol=1e-15)

    @pytest.mark.parametrize("i", [-0.5, -1e-9, 511.0 + 1e-6, math.nan])
    def test_row_out_of_range_rejected(self, i):
        with pytest.raises(ValueError):
            pixel_to_direction(ErpGrid(512, 1024), i, 10.0)

    def test_column_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            pixel_to_direction(ErpGrid(512, 1024), 10.0, 1024.5)

    def test_forward_maps_to_center(self):
        i, j = direction_to_pixel(ErpGrid(512, 1024), [0.0, 0.0, 1.0])
        assert (float(i), float(j)) == (255.5, 511.5)

    def test_pole_clamps_to_first_row(self):
        i, j = direction_to_pixel(ErpGrid(512, 1024), [0.0, 1.0, 0.0])
        assert float(i) == 0.0
        # longitude defaults to atan2(0, 0) = 0
        assert float(j) == 511.5
        i, _ = direction_to_pixel(ErpGrid(512, 1024), [0.0, -1.0, 0.0])
        assert float(i) == 511.0

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError):
            direction_to_pixel(ErpGrid(4, 8), [0.0, 0.0, 2.0])

    def test_grid_directions_match_pointwise(self):
        grid = ErpGrid(6, 10)
        dirs = grid.directions()
        i, j = np.meshgrid(np.arange(6.0), np.arange(10.0), indexing="ij")
        np.testing.assert_allclose(dirs, pixel_to_direction(grid, i, j), atol=1e-15)

    def test_invalid_grid(self):
        with pytest.raises(ValueError):
            ErpGrid(0, 5)

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6),
        st.floats(-math.pi, math.pi),
        st.sampled_from([(512, 1024), (7, 9), (64, 64)]),
    )
    def test_round_trip(self, theta, phi, dims):
        grid = ErpGrid(*dims)
        d = angles_to_direction(theta, phi)
        if abs(theta) > math.pi / 2 - 0.5 * math.pi / grid.height:
            return  # inside the clamped polar cap
        i, j = direction_to_pixel(grid, d)
        back = pixel_to_direction(grid, i, j)
        assert np.max(np.abs(back - d)) < 1e-10


class TestRotation:
    def test_identity(self):
        np.testing.assert_array_equal(rotation_from_angles(0, 0, 0), np.eye(3))

    def test_yaw_quarter_turn_points_to_x(self):
        np.testing.assert_allclose(rotation_from_angles(math.pi / 2, 0, 0) @ [0, 0, 1], [1, 0, 0], atol=1e-15)

    def test_positive_pitch_looks_up(self):
        fwd = rotation_from_angles(0, 0.3, 0) @ [0, 0, 1]
        np.testing.assert_allclose(fwd, [0, math.sin(0.3), math.cos(0.3)], atol=1e-15)

    def test_yaw_matches_longitude(self):
        fwd = rotation_from_angles(1.1, -0.4, 0.7) @ [0, 0, 1]
        np.testing.assert_allclose(fwd, angles_to_direction(-0.4, 1.1), atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(angle, angle, angle)
    def test_orthonormal(self, yaw, pitch, roll):
        r = rotation_from_angles(yaw, pitch, roll)
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


class TestCamera:
    @pytest.mark.parametrize("hfov", [0.0, -0.1, math.pi, 4.0])
    def test_degenerate_fov_rejected(self, hfov):
        with pytest.raises(ValueError):
            CameraSpec(0, 0, hfov, 10, 10)

    def test_focal_and_vertical_fov(self):
        cam = CameraSpec(0, 0, math.pi / 2, 200, 100)
        assert cam.focal == pytest.approx(100.0)
        assert cam.vfov == pytest.approx(2 * math.atan(0.5))

    def test_rays_project_back_to_pixel_centers(self):
        cam = CameraSpec(0.3, -0.2, 1.2, 9, 7, roll=0.1)
        x, y, inside = cam.project(cam.pixel_rays())
        assert inside.all()
        u, v = np.meshgrid(np.arange(9) + 0.5, np.arange(7) + 0.5)
        np.testing.assert_allclose(x, u, atol=1e-12)
        np.testing.assert_allclose(y, v, atol=1e-12)


class TestPerspectiveErp:
    def test_constant_image(self):
        cam = CameraSpec(0.5, 0.2, 1.0, 40, 30)
        img = np.full((30, 40, 3), [10.0, 20.0, 30.0])
        erp, mask = perspective_to_erp(img, cam, ErpGrid(64, 128))
        assert mask.sum() > 0
        np.testing.assert_allclose(erp[mask > 0], [[10, 20, 30]] * int(mask.sum()))
        assert np.all(erp[mask == 0] == 0)

    def test_optical_axis_sample(self):
        cam = CameraSpec(0, 0, math.pi / 2, 33, 33)
        img = np.arange(33 * 33, dtype=float).reshape(33, 33)
        erp, mask = perspective_to_erp(img, cam, ErpGrid(65, 129))
        assert mask[32, 64] == 1
        assert erp[32, 64] == pytest.approx(img[16, 16], abs=1e-9)

    def test_behind_camera_masked(self):
        cam = CameraSpec(0, 0, math.pi / 2, 32, 32)
        _, mask = perspective_to_erp(np.ones((32, 32)), cam, ErpGrid(64, 128))
        assert mask[32, 0] == 0 and mask[32, 127] == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            perspective_to_erp(np.ones((10, 10)), CameraSpec(0, 0, 1.0, 12, 10), ErpGrid(8, 16))

    def test_mask_monotone_in_fov(self):
        grid = ErpGrid(64, 128)
        masks = [
            perspective_to_erp(np.ones((24, 32)), CameraSpec(0.7, 0.3, f, 32, 24), grid)[1]
            for f in (0.5, 1.0, 1.5, 2.5)
        ]
        for small, large in zip(masks, masks[1:]):
            assert np.all(large >= small)

    def test_constant_erp_gives_constant_view(self):
        erp = np.full((32, 64, 3), 7.0)
        out = erp_to_perspective(erp, CameraSpec(2.0, 1.2, 1.5, 20, 16))
        np.testing.assert_allclose(out, 7.0)

    def test_rig_view_16_centre_looks_forward(self):
        grid = ErpGrid(65, 129)
        erp = np.zeros(grid.shape)
        erp[32, 64] = 1.0
        cam16 = tangent_rig(size=33)[15]
        out = erp_to_perspective(erp, cam16)
        assert out[16, 16] == pytest.approx(1.0, abs=1e-9)

    def test_round_trip_smooth_image(self):
        cam = CameraSpec(0.4, 0.1, math.pi / 2, 128, 128)
        v, u = np.mgrid[0:128, 0:128]
        img = 127.5 + 100 * np.sin(u / 15.0) * np.cos(v / 11.0)
        erp, mask = perspective_to_erp(img, cam, ErpGrid(256, 512))
        back = erp_to_perspective(erp, cam)
        inner = np.zeros((128, 128), bool)
        inner[4:-4, 4:-4] = True
        assert psnr(np.round(back), np.round(img), inner) >= 40


class TestRig:
    def test_sixteen_square_views(self):
        rig = tangent_rig()
        assert len(rig) == 16
        for cam in rig:
            assert (cam.width, cam.height, cam.hfov, cam.roll) == (512, 512, math.pi / 2, 0.0)

    @pytest.mark.parametrize(
        "n, theta, phi",
        [(1, math.pi / 4, math.pi / 2), (9, 0.0, math.pi / 4), (16, 0.0, 0.0), (4, math.pi / 4, 0.0),
         (7, -math.pi / 4, 3 * math.pi / 2), (12, 0.0, math.pi)],
    )
    def test_angles(self, n, theta, phi):
        assert rig_angles(n) == (theta, phi)
        cam = tangent_rig()[n - 1]
        assert (cam.pitch, cam.yaw) == (theta, phi)

    def test_longitudes_are_reduced_multiples(self):
        for n in range(1, 17):
            _, phi = rig_angles(n)
            raw = math.pi * n / 2 if n <= 8 else math.pi * n / 4
            assert 0 <= phi < 2 * math.pi
            assert math.remainder(raw - phi, 2 * math.pi) == pytest.approx(0.0, abs=1e-12)
