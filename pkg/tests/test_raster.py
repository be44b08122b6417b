import numpy as np
import pytest

from hsb import raster
from oracles import brute_feature_transform, flood_components, oracle_boundary


def disk(r, size=None):
    size = size or 2 * r + 5
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - c) ** 2 + (xx - c) ** 2 <= r * r


def test_load_store_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.integers(0, 256, (13, 9)).astype(np.uint8) / 255.0
    path = tmp_path / "m.png"
    raster.store_gray(m, path)
    back = raster.load_gray(path)
    assert np.array_equal(back, m)


def test_load_gray_rgb_reduction(tmp_path):
    from PIL import Image
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[0, 1] = (0, 255, 0)
    rgb[1, 0] = (0, 0, 255)
    rgb[1, 1] = (255, 255, 255)
    path = tmp_path / "c.png"
    Image.fromarray(rgb).save(path)
    g = raster.load_gray(path)
    assert g[1, 1] == pytest.approx(1.0)
    assert g[0, 0] == pytest.approx(0.299)
    assert g[0, 1] == pytest.approx(0.587)
    assert g[1, 0] == pytest.approx(0.114)


def test_load_gray_16bit(tmp_path):
    from PIL import Image
    arr = np.array([[0, 32768], [65535, 1]], np.uint16)
    path = tmp_path / "d.png"
    Image.fromarray(arr).save(path)
    g = raster.load_gray(path)
    assert np.array_equal(g, arr / 65535.0)


def test_load_gray_missing_file(tmp_path):
    with pytest.raises(raster.RasterIOError):
        raster.load_gray(tmp_path / "nope.png")


def test_binarize_inclusive():
    m = np.array([0.4999, 0.5, 0.5001])
    assert list(raster.binarize(m, 0.5)) == [False, True, True]


def test_resize_identity_is_exact():
    rng = np.random.default_rng(1)
    m = rng.random((7, 11))
    out = raster.resize_bilinear(m, 11, 7)
    assert np.array_equal(out, m)
    assert out is not m


def test_resize_constant_preserved():
    m = np.full((8, 8), 0.37)
    out = raster.resize_bilinear(m, 13, 5)
    assert np.allclose(out, 0.37)


def test_resize_downsample_shape_and_range():
    rng = np.random.default_rng(2)
    m = rng.random((64, 48))
    out = raster.resize_bilinear(m, 12, 16)
    assert out.shape == (16, 12)
    assert out.min() >= m.min() and out.max() <= m.max()


@pytest.mark.parametrize("connectivity", [4, 8])
def test_connected_components_match_flood_fill(connectivity):
    rng = np.random.default_rng(3)
    for _ in range(50):
        m = rng.random((12, 15)) < 0.45
        got = raster.connected_components(m, connectivity).count
        assert got == flood_components(m, connectivity)


def test_components_diagonal_distinction():
    m = np.array([[1, 0], [0, 1]], bool)
    assert raster.connected_components(m, 8).count == 1
    assert raster.connected_components(m, 4).count == 2


def test_hole_mask():
    m = np.ones((7, 7), bool)
    m[2:5, 2:5] = False
    holes = raster.hole_mask(m)
    assert holes.count == 1
    border_touch = np.ones((5, 5), bool)
    border_touch[0, 2] = False
    assert raster.hole_mask(border_touch).count == 0


def test_square_perimeter_exact():
    m = np.zeros((14, 14), bool)
    m[2:12, 2:12] = True  # 10x10 square
    contours = raster.trace_contours(m)
    assert len(contours) == 1
    assert contours[0][1] == pytest.approx(36.0)


def test_single_pixel_perimeter():
    m = np.zeros((3, 3), bool)
    m[1, 1] = True
    contours = raster.trace_contours(m)
    assert contours[0][1] == raster.SINGLE_PIXEL_PERIMETER


def test_annulus_has_two_contours():
    m = disk(8) & ~disk(4, size=21)
    contours = raster.trace_contours(m)
    assert len(contours) == 2


def test_feature_transform_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(40):
        m = rng.random((14, 17)) < rng.uniform(0.05, 0.6)
        if not m.any():
            continue
        d, ny, nx = raster.feature_transform(m)
        bd, bny, bnx = brute_feature_transform(m)
        assert np.array_equal(ny, bny), "tie-break mismatch (rows)"
        assert np.array_equal(nx, bnx), "tie-break mismatch (cols)"
        assert np.array_equal(d, bd)


def test_feature_transform_empty_mask_rejected():
    with pytest.raises(ValueError):
        raster.feature_transform(np.zeros((4, 4), bool))


def test_distance_transform_empty_is_infinite():
    d = raster.distance_transform(np.zeros((3, 3), bool))
    assert np.all(np.isinf(d))


def test_boundary_pixels_matches_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        m = rng.random((10, 12)) < 0.5
        assert np.array_equal(raster.boundary_pixels(m), oracle_boundary(m))


def test_boundary_band_radius():
    m = np.zeros((11, 11), bool)
    m[5, 5] = True
    band = raster.boundary_band(m, 2.0)
    yy, xx = np.mgrid[0:11, 0:11]
    expect = np.hypot(yy - 5, xx - 5) <= 2.0
    assert np.array_equal(band, expect)
