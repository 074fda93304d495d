"""Command-line front end.

Subcommands::

    dsbfsm synth SPEC PREFIX            synthetic cube, header and label grid
    dsbfsm score-bands                  per-band, per-class F scores (CSV)
    dsbfsm select [--emit-cube]         band clusters and representatives (JSON)
    dsbfsm baseline --method cbs|sfs    comparison selectors (JSON)
    dsbfsm compare [--methods ...]      accuracy curves (report.csv, report.svg)
    dsbfsm replicator-trace MATRIX      replicator iterates for one matrix (CSV)

Settings come from ``--config FILE`` (``key=value`` lines) and are
overridden by ``--set key=value`` and the dedicated flags.
"""

from __future__ import annotations

import argparse
import html
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baselines import cbs_select, sfs_select
from .config import METHODS, RunConfig, build_config, load_config, parse_pairs
from .dominant_sets import DEFAULT_MAX_ITER, iterate_replicator, uniform_vector
from .errors import DomainError, DsbfsmError
from .evaluation import AccuracyCurve, accuracy_curve, emit_report
from .hsi_io import (
    HyperCube,
    Partition,
    extract_partition,
    generate_synthetic,
    load_cube,
    load_ground_truth,
    parse_synthetic_config,
    save_cube,
    save_ground_truth,
)
from .stage1 import band_scores_csv, evaluate_all_bands
from .stage2 import SelectionResult, select_bands


class UsageError(Exception):
    pass


def _scene(config: RunConfig) -> tuple[HyperCube, object]:
    config.require("cube", "gt")
    cube = load_cube(config.cube, config.header)
    gt = load_ground_truth(config.gt, cube.rows, cube.cols)
    return cube, gt


def _partition(config: RunConfig, cube, gt) -> Partition:
    return extract_partition(cube, gt, config.region, config.classes, config.max_pixels, config.seed)


def _eval_partition(config: RunConfig, cube, gt) -> Partition:
    """Labeled pixels of the whole image used for accuracy curves."""
    return extract_partition(cube, gt, None, config.classes, config.eval_max_pixels, config.seed)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stage1_params(config: RunConfig, partition: Partition):
    return config.stage1_params(float(partition.spectra.mean()))


def run_selection(config: RunConfig, partition: Partition, threads: int) -> SelectionResult:
    perf = evaluate_all_bands(partition, _stage1_params(config, partition), threads)
    return select_bands(perf, config.stage2_params())


# ---------------------------------------------------------------- commands


def cmd_synth(spec_path, prefix) -> tuple[Path, Path, Path]:
    spec_path = Path(spec_path)
    try:
        text = spec_path.read_text()
    except FileNotFoundError:
        raise DomainError(f"synthetic spec not found: {spec_path}") from None
    spec = parse_synthetic_config(text)
    cube, gt = generate_synthetic(spec)
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    cube_path = prefix.with_name(prefix.name + ".bsq")
    echo = {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.__dict__.items()}
    header_path = save_cube(cube, cube_path, extra={"synthetic": echo})
    gt_path = prefix.with_name(prefix.name + ".gt.txt")
    save_ground_truth(gt, gt_path)
    return cube_path, header_path, gt_path


def cmd_score_bands(config: RunConfig, threads: int = 1) -> Path:
    config.require("seed")
    cube, gt = _scene(config)
    partition = _partition(config, cube, gt)
    perf = evaluate_all_bands(partition, _stage1_params(config, partition), threads)
    path = _out_dir(config) / "band_scores.csv"
    path.write_text(band_scores_csv(perf, comment=config.as_text().rstrip("\n")))
    return path


def cmd_select(config: RunConfig, threads: int = 1, emit_cube: bool = False) -> Path:
    config.require("seed")
    cube, gt = _scene(config)
    result = run_selection(config, _partition(config, cube, gt), threads)
    out = _out_dir(config)
    path = out / "selection.json"
    path.write_text(result.to_json(config.as_dict()))
    if emit_cube:
        extra = {"selected_bands": result.selected, "config": config.as_dict()}
        save_cube(cube.select_bands(result.selected), out / "selected.bsq", extra=extra)
    return path


def cmd_baseline(config: RunConfig, method: str, threads: int = 1) -> Path:
    config.require("seed")
    cube, gt = _scene(config)
    partition = _partition(config, cube, gt)
    if method == "cbs":
        config.require("k")
        result = cbs_select(partition, config.k)
    elif method == "sfs":
        max_k = config.k if config.k is not None else config.max_k
        result = sfs_select(
            partition, config.classifier_spec(), max_k, config.min_gain, config.seed, threads=threads
        )
    else:
        raise UsageError(f"unknown baseline method '{method}'")
    path = _out_dir(config) / f"baseline_{method}.json"
    path.write_text(result.to_json(config.as_dict()))
    return path


def cmd_compare(config: RunConfig, threads: int = 1) -> tuple[Path, Path]:
    """Select bands with each method and write accuracy curves for all of them.

    CBS takes as many bands as DSbFSM selects unless ``k`` is set.
    """
    config.require("seed")
    cube, gt = _scene(config)
    partition = _partition(config, cube, gt)
    evaluation = _eval_partition(config, cube, gt)
    classifier = config.classifier_spec()
    selections: dict[str, list[int]] = {}
    k = config.k
    if "dsbfsm" in config.methods:
        selections["dsbfsm"] = run_selection(config, partition, threads).selected
        k = k if k is not None else len(selections["dsbfsm"])
    for method in config.methods:
        if method == "cbs":
            if k is None:
                raise DomainError("cbs needs k when dsbfsm is not compared")
            selections["cbs"] = cbs_select(partition, max(2, k)).selected
        elif method == "sfs":
            selections["sfs"] = sfs_select(
                partition, classifier, config.max_k, config.min_gain, config.seed, threads=threads
            ).selected
    curves: dict[str, AccuracyCurve] = {}
    for method in config.methods:
        curves[method] = accuracy_curve(
            evaluation, selections[method], classifier, config.n_train, config.repetitions, config.seed, threads
        )
    out = _out_dir(config)
    csv_path, svg_path = emit_report(curves, out)
    echo = dict(config.as_dict(), selections=selections)
    (out / "report.config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    svg = svg_path.read_text().replace("</svg>", f"<desc>{html.escape(config.as_text())}</desc>\n</svg>")
    svg_path.write_text(svg)
    return csv_path, svg_path


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            w = np.load(path)
        else:
            w = np.loadtxt(path, delimiter="," if path.suffix == ".csv" else None, ndmin=2)
    except FileNotFoundError:
        raise DomainError(f"matrix file not found: {path}") from None
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from None
    return np.asarray(w, dtype=np.float64)


def cmd_replicator_trace(matrix_path, out_path, th: float, max_iter: int, x0: Optional[Sequence[float]] = None) -> Path:
    w = read_matrix(matrix_path)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise DomainError(f"similarity matrix must be square, got shape {w.shape}")
    start = uniform_vector(w.shape[0]) if x0 is None else np.asarray(x0, dtype=np.float64)
    lines = [",".join(["iter", *(f"x_{i}" for i in range(w.shape[0]))])]
    for t, x in enumerate(iterate_replicator(w, start, th, max_iter)):
        lines.append(",".join([str(t), *(repr(float(v)) for v in x)]))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    return out_path


# ---------------------------------------------------------------- argument handling


def _methods_arg(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad) or '(none)'}; choose from {', '.join(METHODS)}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("--seed", type=int, help="seed for subsampling, splits and SFS")
    common.add_argument("--threads", type=int, help="worker threads (default: available CPUs)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
    common.add_argument("--cube", help="BSQ cube path")
    common.add_argument("--gt", help="ground-truth label grid path")

    parser = argparse.ArgumentParser(prog="dsbfsm", description="Dominant-set band selection for hyperspectral cubes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cube from a spec file")
    p.add_argument("spec", help="synthetic scene spec (key=value)")
    p.add_argument("prefix", help="output prefix; writes PREFIX.bsq, PREFIX.hdr.json, PREFIX.gt.txt")

    sub.add_parser("score-bands", parents=[common], help="stage-1 per-band class scores")

    p = sub.add_parser("select", parents=[common], help="stage-2 band clustering and selection")
    p.add_argument("--emit-cube", action="store_true", help="also write the reduced cube")

    p = sub.add_parser("baseline", parents=[common], help="CBS or SFS selection")
    p.add_argument("--method", required=True, choices=["cbs", "sfs"])
    p.add_argument("--k", type=int, help="bands to select (SFS: upper bound)")

    p = sub.add_parser("compare", parents=[common], help="accuracy curves for several selectors")
    p.add_argument("--methods", type=_methods_arg, help="comma list from " + ",".join(METHODS))
    p.add_argument("--repetitions", type=int)
    p.add_argument("--k", type=int, help="CBS band count (default: DSbFSM's)")

    p = sub.add_parser("replicator-trace", parents=[common], help="dump replicator iterates")
    p.add_argument("matrix", help="square similarity matrix (.npy, .csv or whitespace text)")
    p.add_argument("--th", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    return parser


def config_from_args(args) -> RunConfig:
    pairs: dict[str, str] = {}
    if args.config:
        base_dir = Path(args.config).resolve().parent
        for key, value in load_config(args.config).items():
            # file paths in a config are relative to the config's directory
            if key in ("cube", "header", "gt") and value and not Path(value).is_absolute():
                value = str(base_dir / value)
            pairs[key] = value
    for item in args.set:
        pairs.update(parse_pairs(item, "--set"))
    for key in ("seed", "out", "cube", "gt", "k", "repetitions"):
        value = getattr(args, key, None)
        if value is not None:
            pairs[key] = str(value)
    if getattr(args, "methods", None):
        pairs["methods"] = ",".join(args.methods)
    return build_config(pairs)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = args.threads if args.threads is not None else (os.cpu_count() or 1)
    try:
        if args.command == "synth":
            for path in cmd_synth(args.spec, args.prefix):
                print(path)
            return 0
        if args.command == "replicator-trace":
            out = Path(args.out or ".") / "replicator_trace.csv"
            print(cmd_replicator_trace(args.matrix, out, args.th, args.max_iter))
            return 0
        config = config_from_args(args)
        if args.command == "score-bands":
            print(cmd_score_bands(config, threads))
        elif args.command == "select":
            print(cmd_select(config, threads, args.emit_cube))
        elif args.command == "baseline":
            print(cmd_baseline(config, args.method, threads))
        elif args.command == "compare":
            for path in cmd_compare(config, threads):
                print(path)
    except UsageError as exc:
        parser.error(str(exc))
    except (DsbfsmError, OSError, RuntimeError) as exc:
        print(f"dsbfsm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
