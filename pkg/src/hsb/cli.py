"""Command line interface.

Subcommands:
  eval          score a directory of predictions against ground truths
  complexity    profile ground-truth masks (shape statistics)
  split         cut a profile CSV into complexity-ranked id lists
  kernel-check  verify the grafting kernel and loss gradients numerically

Exit codes: 0 success, 1 hard error, 2 completed with warnings.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import __version__, bench, complexity, graftkern, losses
from .metrics import METRIC_NAMES
from .raster import RasterIOError, load_gray, load_rgb

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNINGS = 2

PROFILE_HEADER = ("image_id",) + complexity.ComplexityProfile.NUMERIC_FIELDS


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hsb", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("eval", help="evaluate predictions against GT masks")
    ev.add_argument("--pred", required=True, help="prediction directory")
    ev.add_argument("--gt", required=True, help="ground-truth directory")
    ev.add_argument("--img", help="RGB image directory (unused by metrics, "
                                  "kept for manifest completeness)")
    ev.add_argument("--metrics", default=",".join(METRIC_NAMES),
                    help="comma-separated subset of: " + ",".join(METRIC_NAMES))
    ev.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: HSB_THREADS or cpu count)")
    ev.add_argument("--out", help="output path (default: stdout)")
    ev.add_argument("--format", choices=("csv", "json", "md"), default="csv")
    ev.add_argument("--strict", action="store_true",
                    help="treat prediction/GT size mismatch as an error")
    ev.add_argument("--subsets", nargs="*", default=[],
                    help="id-list files; one aggregate row per file")

    cx = sub.add_parser("complexity", help="profile ground-truth masks")
    cx.add_argument("--gt", required=True, help="ground-truth directory")
    cx.add_argument("--img", help="RGB image directory for color contrast")
    cx.add_argument("--out", required=True, help="profile CSV path")

    sp = sub.add_parser("split", help="complexity-ranked dataset splitting")
    sp.add_argument("--profiles", required=True, help="profile CSV from "
                                                      "`hsb complexity`")
    sp.add_argument("--k", type=int, required=True, help="number of subsets")
    sp.add_argument("--out-prefix", required=True,
                    help="writes <prefix>_1.txt ... <prefix>_k.txt")

    kc = sub.add_parser("kernel-check",
                        help="finite-difference verification of gradients")
    kc.add_argument("--window-size", type=int, default=4)
    kc.add_argument("--channels", type=int, default=8)
    kc.add_argument("--windows", type=int, default=2)
    kc.add_argument("--alpha", type=float, default=graftkern.DEFAULT_ALPHA)
    kc.add_argument("--seed", type=int, default=14)
    kc.add_argument("--steps", type=float, nargs="+", default=[1e-3, 1e-4])
    return ap


def _write_or_print(text: str, out_path):
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _cmd_eval(args) -> int:
    manifest = bench.scan(args.pred, args.gt, args.img)
    subsets = {}
    for path in args.subsets:
        ids = [line.strip() for line in Path(path).read_text().splitlines()
               if line.strip()]
        subsets[Path(path).stem] = ids
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    config = bench.BenchConfig(
        metrics=metrics,
        threads=args.threads or bench.default_threads(),
        strict=args.strict, subsets=subsets)
    table = bench.run(manifest, config)
    _write_or_print(bench.emit(table, args.format), args.out)
    for msg in manifest.warnings:
        _warn(msg)
    for image_id, reason in table.skipped:
        _warn(f"skipped {image_id}: {reason}")
    if manifest.warnings or table.skipped:
        return EXIT_WARNINGS
    return EXIT_OK


def _profile_row(profile) -> str:
    cells = [profile.image_id]
    for name in complexity.ComplexityProfile.NUMERIC_FIELDS:
        v = getattr(profile, name)
        cells.append(str(v) if isinstance(v, int) else format(v, ".6f"))
    return ",".join(cells)


def _cmd_complexity(args) -> int:
    manifest_warnings: list[str] = []
    gt_index = bench._stem_index(Path(args.gt), manifest_warnings)
    if not gt_index:
        raise bench.BenchError(f"no mask files in {args.gt}")
    img_index = (bench._stem_index(Path(args.img), manifest_warnings)
                 if args.img else {})
    lines = [",".join(PROFILE_HEADER)]
    warned = bool(manifest_warnings)
    for stem in sorted(gt_index):
        try:
            gt = load_gray(gt_index[stem])
            img = None
            if stem in img_index:
                img = load_rgb(img_index[stem])
            lines.append(_profile_row(complexity.profile_mask(stem, gt, img)))
        except (RasterIOError, OSError, ValueError) as exc:
            _warn(f"skipped {stem}: {exc}")
            warned = True
    for msg in manifest_warnings:
        _warn(msg)
    if len(lines) == 1:
        raise bench.BenchError("no mask could be profiled")
    _write_or_print("\n".join(lines) + "\n", args.out)
    return EXIT_WARNINGS if warned else EXIT_OK


def _cmd_split(args) -> int:
    with open(args.profiles, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise bench.BenchError(f"empty profile CSV: {args.profiles}")
    profiles = [
        complexity.ComplexityProfile(
            image_id=r["image_id"], ipq=float(r["ipq"]),
            c_num=int(r["c_num"]), e_num=int(r["e_num"]),
            fg_ratio=float(r["fg_ratio"]),
            center_dist=float(r["center_dist"]),
            margin_dist=float(r["margin_dist"]),
            global_contrast=float(r["global_contrast"]),
            local_contrast=float(r["local_contrast"]),
            score=float(r["score"]))
        for r in rows
    ]
    groups = complexity.split_subsets(profiles, args.k)
    for i, ids in enumerate(groups, start=1):
        Path(f"{args.out_prefix}_{i}.txt").write_text(
            "\n".join(ids) + "\n")
    return EXIT_OK


def _cmd_kernel_check(args) -> int:
    ok = True
    for step in args.steps:
        inst = graftkern.make_test_instance(
            window_size=args.window_size, channels=args.channels,
            windows=args.windows, alpha=args.alpha, seed=args.seed)
        rep = graftkern.finite_diff_check(inst, step=step)
        status = "ok" if rep.passed else "FAIL"
        print(f"graft gradients  h={step:g}  max rel err "
              f"{rep.max_rel_error:.3e} ({rep.worst_leaf})  {status}")
        ok &= rep.passed
    for step in args.steps:
        err = losses.finite_diff_check(step=step, seed=args.seed)
        status = "ok" if err <= graftkern.FD_TOL else "FAIL"
        print(f"loss gradients   h={step:g}  max rel err {err:.3e}  {status}")
        ok &= err <= graftkern.FD_TOL
    inst = graftkern.make_test_instance(
        window_size=args.window_size, channels=args.channels,
        windows=args.windows, alpha=args.alpha, seed=args.seed)
    graftkern.check_invariants(graftkern._forward(inst))
    print("forward invariants  ok")
    return EXIT_OK if ok else EXIT_ERROR


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"eval": _cmd_eval, "complexity": _cmd_complexity,
                "split": _cmd_split, "kernel-check": _cmd_kernel_check}
    try:
        return handlers[args.command](args)
    except (bench.BenchError, RasterIOError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
