"""Batch evaluation harness: dataset scanning, parallel metric computation,
and report serialization (CSV, JSON, markdown).

Reports are deterministic: rows are keyed and merged by image_id, so the
output is byte-identical regardless of thread count.
"""

from __future__ import annotations

import concurrent.futures
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .metrics import (
    METRIC_NAMES,
    DegenerateGroundTruthError,
    MetricReport,
    aggregate,
    evaluate_pair,
)
from .raster import RasterIOError, binarize, load_gray

CSV_HEADER = "image_id,mae,max_f,weighted_f,s_measure,e_measure,mba"
GT_THRESHOLD = 0.5
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


class BenchError(RuntimeError):
    """Hard benchmark failure (empty manifest, nothing evaluable)."""


@dataclass
class ManifestEntry:
    image_id: str
    pred_path: Path
    gt_path: Path
    img_path: Path | None = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    warnings: list[str] = field(default_factory=list)


@dataclass
class BenchConfig:
    metrics: tuple = METRIC_NAMES
    threads: int = 1
    strict: bool = False
    subsets: dict = field(default_factory=dict)  # name -> list of image_ids

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError(f"thread count must be >= 1, got {self.threads}")
        bad = [m for m in self.metrics if m not in METRIC_NAMES]
        if bad:
            raise ValueError(f"unknown metrics: {bad}")


@dataclass
class ReportTable:
    rows: list[MetricReport]
    overall: dict
    subset_overall: dict  # subset name -> aggregate dict
    skipped: list[tuple[str, str]]  # (image_id, reason)
    config: BenchConfig
    version: str = __version__


def _stem_index(directory: Path, warnings: list[str]) -> dict[str, Path]:
    index: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if path.stem in index:
            warnings.append(f"duplicate stem {path.stem!r}: ignoring {path}")
            continue
        index[path.stem] = path
    return index


def scan(pred_dir, gt_dir, img_dir=None) -> DatasetManifest:
    """Pair predictions with ground truths by filename stem (case
    sensitive).  Unpaired files become warnings; an empty intersection is
    a hard error."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir) + ((Path(img_dir),) if img_dir else ()):
        if not d.is_dir():
            raise BenchError(f"not a directory: {d}")
    warnings: list[str] = []
    preds = _stem_index(pred_dir, warnings)
    gts = _stem_index(gt_dir, warnings)
    imgs = _stem_index(Path(img_dir), warnings) if img_dir else {}

    common = sorted(preds.keys() & gts.keys())
    if not common:
        raise BenchError(
            f"no common filename stems between {pred_dir} and {gt_dir}")
    for stem in sorted(preds.keys() - gts.keys()):
        warnings.append(f"prediction without ground truth: {stem}")
    for stem in sorted(gts.keys() - preds.keys()):
        warnings.append(f"ground truth without prediction: {stem}")
    entries = [ManifestEntry(stem, preds[stem], gts[stem], imgs.get(stem))
               for stem in common]
    return DatasetManifest(entries, warnings)


def _evaluate_entry(entry: ManifestEntry, config: BenchConfig):
    try:
        pred = load_gray(entry.pred_path)
        gt = binarize(load_gray(entry.gt_path), GT_THRESHOLD)
        report = evaluate_pair(pred, gt, image_id=entry.image_id,
                               selected=config.metrics, strict=config.strict)
        return report, None
    except (RasterIOError, OSError, DegenerateGroundTruthError) as exc:
        return None, (entry.image_id, str(exc))


def run(manifest: DatasetManifest, config: BenchConfig) -> ReportTable:
    """Evaluate every manifest entry and aggregate; results are merged in
    image_id order so the table does not depend on scheduling."""
    rows: list[MetricReport] = []
    skipped: list[tuple[str, str]] = []
    with concurrent.futures.ThreadPoolExecutor(config.threads) as pool:
        for report, skip in pool.map(
                lambda e: _evaluate_entry(e, config), manifest.entries):
            if report is not None:
                rows.append(report)
            else:
                skipped.append(skip)
    if not rows:
        raise BenchError("all images were skipped; nothing to aggregate")
    rows.sort(key=lambda r: r.image_id)
    skipped.sort()
    overall = aggregate(rows)

    by_id = {r.image_id: r for r in rows}
    subset_overall = {}
    for name, ids in config.subsets.items():
        present = [by_id[i] for i in ids if i in by_id]
        if present:
            subset_overall[name] = aggregate(present)
    return ReportTable(rows=rows, overall=overall,
                       subset_overall=subset_overall, skipped=skipped,
                       config=config)


def _fmt(value: float) -> str:
    # Python's float formatting rounds half to even.
    return format(value, ".6f")


def _csv_line(image_id: str, values: dict) -> str:
    return ",".join([image_id] + [_fmt(values[m]) for m in METRIC_NAMES])


def emit_csv(table: ReportTable) -> str:
    lines = [CSV_HEADER]
    for r in table.rows:
        lines.append(_csv_line(r.image_id, r.__dict__))
    lines.append(_csv_line("overall", table.overall))
    for name in sorted(table.subset_overall):
        lines.append(_csv_line(f"subset:{name}", table.subset_overall[name]))
    return "\n".join(lines) + "\n"


def _round6(values: dict) -> dict:
    return {k: round(v, 6) for k, v in values.items()}


def emit_json(table: ReportTable) -> str:
    doc = {
        "version": table.version,
        # the thread count is deliberately not echoed: reports must be
        # byte-identical regardless of parallelism
        "config": {
            "metrics": list(table.config.metrics),
            "strict": table.config.strict,
            "subsets": {k: list(v) for k, v in table.config.subsets.items()},
        },
        "rows": [
            {"image_id": r.image_id,
             **_round6({m: getattr(r, m) for m in METRIC_NAMES})}
            for r in table.rows
        ],
        "overall": _round6(table.overall),
        "subsets": {k: _round6(v) for k, v in table.subset_overall.items()},
        "skipped": [{"image_id": i, "reason": why} for i, why in table.skipped],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> dict:
    return json.loads(text)


# markdown columns follow the usual leaderboard order
_MD_COLUMNS = ("max_f", "weighted_f", "mae", "e_measure", "s_measure", "mba")
_MD_TITLES = ("maxF", "wF", "MAE", "E-measure", "S-measure", "mBA")


def emit_markdown(table: ReportTable) -> str:
    header = "| dataset | " + " | ".join(_MD_TITLES) + " |"
    rule = "|---" * (len(_MD_TITLES) + 1) + "|"
    lines = [header, rule]

    def row(label, values):
        cells = " | ".join(_fmt(values[m]) for m in _MD_COLUMNS)
        lines.append(f"| {label} | {cells} |")

    row("overall", table.overall)
    for name in sorted(table.subset_overall):
        row(name, table.subset_overall[name])
    return "\n".join(lines) + "\n"


_EMITTERS = {"csv": emit_csv, "json": emit_json, "md": emit_markdown}


def emit(table: ReportTable, fmt: str) -> str:
    try:
        return _EMITTERS[fmt](table)
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; choose from "
                         f"{sorted(_EMITTERS)}") from None


def default_threads() -> int:
    env = os.environ.get("HSB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise BenchError(f"HSB_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise BenchError(f"HSB_THREADS must be >= 1, got {n}")
        return n
    return min(8, os.cpu_count() or 1)
