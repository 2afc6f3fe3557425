import numpy as np
import pytest

from apbface.geometry import LandmarkSet
from apbface.render import (BinaryImage, convex_hull, dilate_disk, face_mask, fill_convex_polygon,
                            landmark_pixels, rasterize)
from oracles import dilation_oracle, polygon_fill_oracle, raster_membership_oracle

TOY_GROUPS = {"left_eye": [0, 1, 2, 3], "mouth": [4, 5, 6]}


def toy_set(rng=None):
    rng = rng or np.random.default_rng(42)
    return LandmarkSet(rng.uniform(0.1, 0.9, size=(8, 2)), TOY_GROUPS)


class TestRasterize:
    def test_empty_set_all_black(self):
        img = rasterize(LandmarkSet(np.zeros((0, 2))), 64)
        assert img.pixels.sum() == 0

    def test_single_center_point_disk(self):
        lm = LandmarkSet(np.array([[0.5, 0.5]]))
        img = rasterize(lm, 256, point_radius=1)
        ys, xs = np.nonzero(img.pixels)
        expected = {(128, 128), (127, 128), (129, 128), (128, 127), (128, 129)}
        assert set(zip(ys.tolist(), xs.tolist())) == expected

    def test_matches_membership_oracle_exactly(self):
        lm = toy_set()
        img = rasterize(lm, 64, point_radius=1.5)
        expected = raster_membership_oracle(lm, 64, 1.5)
        assert np.array_equal(img.pixels, expected)

    def test_full_layout_matches_oracle_exactly(self):
        from apbface.data import landmarks_from_params, layout_index_groups

        pts = landmarks_from_params((0.1, -0.2, 0.3), (0.4, 0.6), 0.5, 20)
        lm = LandmarkSet(pts, layout_index_groups(20))
        img = rasterize(lm, 64, point_radius=1.0)
        expected = raster_membership_oracle(lm, 64, 1.0)
        assert np.array_equal(img.pixels, expected)

    def test_every_landmark_pixel_lit(self):
        rng = np.random.default_rng(3)
        lm = LandmarkSet(rng.uniform(-0.2, 1.2, size=(30, 2)))  # some clamp
        img = rasterize(lm, 64, point_radius=1)
        for col, row in landmark_pixels(lm.points, 64):
            assert img.pixels[row, col] == 1

    def test_translation_covariance_one_pixel(self):
        lm = toy_set(np.random.default_rng(5))
        base = rasterize(lm, 64).pixels
        shifted = rasterize(LandmarkSet(lm.points + 1.0 / 64, TOY_GROUPS), 64).pixels
        assert np.array_equal(shifted[1:, 1:], base[:-1, :-1])

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            rasterize(toy_set(), 4)

    def test_deterministic(self):
        lm = toy_set(np.random.default_rng(9))
        assert np.array_equal(rasterize(lm, 48).pixels, rasterize(lm, 48).pixels)


class TestFaceMask:
    def test_triangle_matches_point_in_polygon_oracle(self):
        lm = LandmarkSet(np.array([[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]]))
        mask = face_mask(lm, 64, dilation_radius=0)
        verts = np.clip(lm.points, 0, 1) * 64
        expected = polygon_fill_oracle(verts, 64)
        assert np.array_equal(mask.pixels, expected)

    def test_dilation_saturates(self):
        lm = LandmarkSet(np.array([[0.2, 0.2], [0.8, 0.2], [0.5, 0.8]]))
        mask = face_mask(lm, 32, dilation_radius=32)
        assert mask.pixels.all()

    def test_dilation_monotone(self):
        lm = LandmarkSet(np.array([[0.3, 0.3], [0.7, 0.35], [0.5, 0.7], [0.25, 0.6]]))
        small = face_mask(lm, 64, dilation_radius=0).pixels
        big = face_mask(lm, 64, dilation_radius=8).pixels
        assert np.all(big >= small)
        assert big.sum() > small.sum()

    def test_dilation_matches_brute_force(self):
        rng = np.random.default_rng(8)
        mask = rng.uniform(size=(24, 24)) > 0.92
        got = dilate_disk(mask, 3)
        assert np.array_equal(got.astype(np.uint8), dilation_oracle(mask.astype(np.uint8), 3))

    def test_landmark_pixels_inside_mask(self):
        lm = toy_set(np.random.default_rng(10))
        mask = face_mask(lm, 64, dilation_radius=4)
        for col, row in landmark_pixels(lm.points, 64):
            assert mask.pixels[row, col] == 1

    def test_degenerate_hull_rejected(self):
        collinear = LandmarkSet(np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]]))
        with pytest.raises(ValueError, match="degenerate hull"):
            face_mask(collinear, 64)
        with pytest.raises(ValueError, match="degenerate hull"):
            face_mask(LandmarkSet(np.array([[0.2, 0.2], [0.8, 0.3]])), 64)


class TestHullAndFill:
    def test_hull_of_square_plus_interior(self):
        pts = np.array([[0, 0], [4, 0], [4, 4], [0, 4], [2, 2], [1, 3]], dtype=float)
        hull = convex_hull(pts)
        assert hull.shape == (4, 2)
        assert {tuple(p) for p in hull.tolist()} == {(0, 0), (4, 0), (4, 4), (0, 4)}

    def test_fill_matches_oracle_random_polygons(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            pts = rng.uniform(4, 28, size=(7, 2))
            hull = convex_hull(pts)
            assert np.array_equal(fill_convex_polygon(hull, 32).astype(np.uint8),
                                  polygon_fill_oracle(hull, 32))


class TestBinaryImage:
    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            BinaryImage(np.full((8, 8), 0.5))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            BinaryImage(np.zeros((4, 8)))
