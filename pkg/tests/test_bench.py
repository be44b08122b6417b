from pathlib import Path

import numpy as np
import pytest

from hsb import bench
from hsb.raster import store_gray

FIXTURE = Path(__file__).parent / "fixtures" / "mini"


def make_pair_dirs(tmp_path, names, size=(16, 16)):
    rng = np.random.default_rng(0)
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for name in names:
        g = np.zeros(size)
        g[4:12, 4:12] = 1.0
        store_gray(g, gt / f"{name}.png")
        store_gray(np.clip(g + rng.normal(0, 0.1, size), 0, 1),
                   pred / f"{name}.png")
    return pred, gt


def test_scan_pairs_and_warnings(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a", "b"])
    store_gray(np.zeros((4, 4)), pred / "c.png")
    store_gray(np.ones((4, 4)), gt / "d.png")
    manifest = bench.scan(pred, gt)
    assert [e.image_id for e in manifest.entries] == ["a", "b"]
    assert any("c" in w for w in manifest.warnings)
    assert any("d" in w for w in manifest.warnings)


def test_scan_empty_intersection_is_hard_error(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a"])
    (pred / "a.png").rename(pred / "z.png")
    with pytest.raises(bench.BenchError):
        bench.scan(pred, gt)


def test_scan_case_sensitive_stems(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["A"])
    (pred / "A.png").rename(pred / "a.png")
    with pytest.raises(bench.BenchError):
        bench.scan(pred, gt)


def test_run_deterministic_across_threads(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, [f"im{i}" for i in range(6)])
    manifest = bench.scan(pred, gt)
    t1 = bench.run(manifest, bench.BenchConfig(threads=1))
    t8 = bench.run(manifest, bench.BenchConfig(threads=8))
    assert bench.emit(t1, "csv") == bench.emit(t8, "csv")
    assert bench.emit(t1, "json") == bench.emit(t8, "json")


def test_run_skips_degenerate_gt(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["good"])
    store_gray(np.zeros((8, 8)), gt / "empty.png")
    store_gray(np.full((8, 8), 0.9), pred / "empty.png")
    table = bench.run(bench.scan(pred, gt), bench.BenchConfig())
    assert [r.image_id for r in table.rows] == ["good"]
    assert table.skipped and table.skipped[0][0] == "empty"


def test_run_all_skipped_is_hard_error(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    store_gray(np.zeros((8, 8)), gt / "a.png")
    store_gray(np.ones((8, 8)), pred / "a.png")
    with pytest.raises(bench.BenchError):
        bench.run(bench.scan(pred, gt), bench.BenchConfig())


def test_csv_header_constant(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a"])
    table = bench.run(bench.scan(pred, gt), bench.BenchConfig())
    text = bench.emit(table, "csv")
    assert text.splitlines()[0] == \
        "image_id,mae,max_f,weighted_f,s_measure,e_measure,mba"


def test_json_roundtrip_at_six_decimals(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a", "b"])
    table = bench.run(bench.scan(pred, gt), bench.BenchConfig())
    doc = bench.parse_json(bench.emit(table, "json"))
    for row, report in zip(doc["rows"], table.rows):
        assert row["image_id"] == report.image_id
        for m in bench.METRIC_NAMES:
            assert row[m] == round(getattr(report, m), 6)


def test_subset_aggregates(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a", "b", "c"])
    config = bench.BenchConfig(subsets={"s1": ["a", "b"], "empty": ["nope"]})
    table = bench.run(bench.scan(pred, gt), config)
    assert "s1" in table.subset_overall
    assert "empty" not in table.subset_overall
    md = bench.emit(table, "md")
    assert "| s1 |" in md and "maxF" in md


def test_emit_unknown_format(tmp_path):
    pred, gt = make_pair_dirs(tmp_path, ["a"])
    table = bench.run(bench.scan(pred, gt), bench.BenchConfig())
    with pytest.raises(ValueError):
        bench.emit(table, "yaml")


def test_mini_fixture_matches_golden_csv():
    manifest = bench.scan(FIXTURE / "pred", FIXTURE / "gt")
    table = bench.run(manifest, bench.BenchConfig(threads=4))
    golden = (FIXTURE / "golden.csv").read_text()
    assert bench.emit(table, "csv") == golden


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv("HSB_THREADS", "3")
    assert bench.default_threads() == 3
    monkeypatch.setenv("HSB_THREADS", "zero")
    with pytest.raises(bench.BenchError):
        bench.default_threads()


def test_config_validation():
    with pytest.raises(ValueError):
        bench.BenchConfig(threads=0)
    with pytest.raises(ValueError):
        bench.BenchConfig(metrics=("mae", "bogus"))
