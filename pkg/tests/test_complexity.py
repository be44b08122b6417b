import math

import numpy as np
import pytest

from hsb import complexity
from oracles import oracle_contour_count, oracle_euler


def disk(r, size=None, center=None):
    size = size or 2 * r + 5
    cy = cx = (size - 1) / 2.0
    if center is not None:
        cy, cx = center
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def test_ipq_disk_near_one():
    assert complexity.ipq(disk(200)) == pytest.approx(1.0, abs=0.05)


def test_ipq_square_near_analytic():
    m = np.zeros((120, 120), bool)
    m[10:110, 10:110] = True
    # analytic 4/pi for a square
    assert 1.22 <= complexity.ipq(m) <= 1.33


def test_ipq_empty_mask_rejected():
    with pytest.raises(ValueError):
        complexity.ipq(np.zeros((5, 5), bool))


def test_topology_annulus():
    m = disk(10) & ~disk(5, size=25)
    assert complexity.contour_count(m) == 2
    assert complexity.euler_number(m) == 0


def test_topology_disk_with_two_holes():
    m = disk(12, size=31)
    m[10:13, 8:11] = False
    m[18:21, 18:21] = False
    assert complexity.euler_number(m) == -1
    assert complexity.contour_count(m) == 3


def test_topology_matches_flood_fill_random():
    rng = np.random.default_rng(0)
    for _ in range(60):
        m = rng.random((9, 9)) < rng.uniform(0.2, 0.8)
        assert complexity.euler_number(m) == oracle_euler(m)
        assert complexity.contour_count(m) == oracle_contour_count(m)


def test_geometry_full_frame():
    m = np.ones((51, 61), bool)
    fg, cdist, mdist = complexity.geometry_stats(m)
    assert fg == 1.0
    assert cdist == 0.0
    assert mdist == 0.0


def test_geometry_corner_pixel():
    m = np.zeros((41, 41), bool)
    m[0, 0] = True
    fg, cdist, mdist = complexity.geometry_stats(m)
    assert cdist == pytest.approx(1.0)
    assert mdist == pytest.approx(1.0)


def test_color_contrast_constant_image_is_zero():
    m = disk(6, size=21)
    img = np.full((21, 21, 3), 123, np.uint8)
    gc, lc = complexity.color_contrast(img, m)
    assert gc == 0.0
    assert lc == 0.0


def test_color_contrast_distinct_colors_is_high():
    m = disk(6, size=21)
    img = np.zeros((21, 21, 3), np.uint8)
    img[m] = (255, 0, 0)
    img[~m] = (0, 0, 255)
    gc, lc = complexity.color_contrast(img, m)
    assert gc == pytest.approx(1.0, abs=1e-9)
    assert lc == pytest.approx(1.0, abs=1e-9)


def test_color_contrast_degenerate_mask_rejected():
    img = np.zeros((5, 5, 3), np.uint8)
    with pytest.raises(ValueError):
        complexity.color_contrast(img, np.zeros((5, 5), bool))
    with pytest.raises(ValueError):
        complexity.color_contrast(img, np.ones((5, 5), bool))


def test_profile_mask_score_definition():
    m = disk(10, size=31).astype(float)
    prof = complexity.profile_mask("d", m)
    assert prof.score == prof.ipq * prof.c_num
    assert math.isnan(prof.global_contrast)  # no RGB image given


def test_split_sizes_and_monotonicity():
    rng = np.random.default_rng(1)
    profiles = [
        complexity.ComplexityProfile(
            image_id=f"im{i:04d}", ipq=1.0, c_num=1, e_num=1, fg_ratio=0.5,
            center_dist=0.1, margin_dist=0.1, global_contrast=0.2,
            local_contrast=0.2, score=float(rng.random()))
        for i in range(988)
    ]
    groups = complexity.split_subsets(profiles, 4)
    assert [len(g) for g in groups] == [247, 247, 247, 247]
    assert sorted(sum(groups, [])) == sorted(p.image_id for p in profiles)
    by_id = {p.image_id: p.score for p in profiles}
    prev_max = -math.inf
    for g in groups:
        scores = [by_id[i] for i in g]
        assert min(scores) >= prev_max
        prev_max = max(scores)


def test_split_uneven_and_tie_break():
    profiles = [
        complexity.ComplexityProfile(
            image_id=name, ipq=1.0, c_num=1, e_num=1, fg_ratio=0.5,
            center_dist=0.0, margin_dist=0.0, global_contrast=0.0,
            local_contrast=0.0, score=score)
        for name, score in [("c", 1.0), ("a", 1.0), ("b", 1.0),
                            ("e", 2.0), ("d", 0.5)]
    ]
    groups = complexity.split_subsets(profiles, 2)
    assert groups == [["d", "a", "b"], ["c", "e"]]
    with pytest.raises(ValueError):
        complexity.split_subsets(profiles, 6)
    with pytest.raises(ValueError):
        complexity.split_subsets(profiles, 0)


def test_dataset_summary():
    profiles = [
        complexity.ComplexityProfile(
            image_id=f"p{i}", ipq=float(i), c_num=1, e_num=1, fg_ratio=0.5,
            center_dist=0.0, margin_dist=0.0, global_contrast=0.1,
            local_contrast=0.1, score=float(i))
        for i in (1, 2, 3)
    ]
    summary = complexity.dataset_summary(profiles, dims=[(10, 20)] * 3)
    assert summary["ipq"] == (2.0, pytest.approx(np.sqrt(2 / 3)))
    assert summary["height"] == (10.0, 0.0)
    with pytest.raises(ValueError):
        complexity.dataset_summary([])
