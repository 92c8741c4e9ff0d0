"""Command-line entry point: ``pcthull <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .evaluation import ALGORITHMS, GridMismatchError, compare_hulls, detect, export_slice_image, run_benchmark
from .geometry import GridSpec
from .hull import AlgorithmThresholds
from .io import HistoryFormatError, read_histories, read_mask, write_histories, write_mask
from .phantom import default_neo_spec, load_phantom_spec, rasterize_phantom, resample_hull, true_hull
from .pipeline import DESK_GRID, PipelineConfig, PipelineError, load_pipeline_config, run_pipeline
from .preprocessing import BinningConfig, apply_data_cuts, bin_histories
from .simulator import load_scan_config, simulate

log = logging.getLogger("pcthull")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_FORMAT = 4
EXIT_IO = 5
EXIT_GRID = 6
EXIT_STAGE = 7


class ConfigError(ValueError):
    """A config file or option value is invalid."""


def _yaml(path):
    if path is None:
        return None
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data or {}


def _guard(fn, *args):
    """Turn value errors raised while building configs into ConfigError."""
    try:
        return fn(*args)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _phantom(path):
    return default_neo_spec() if path is None else _guard(load_phantom_spec, path)


def _grid(path):
    return DESK_GRID if path is None else _guard(lambda p: GridSpec.from_dict(_yaml(p)), path)


def _binning(path):
    return BinningConfig() if path is None else _guard(lambda p: BinningConfig(**_yaml(p)), path)


def _thresholds(args) -> AlgorithmThresholds:
    base = AlgorithmThresholds() if args.thresholds is None else _guard(
        lambda p: AlgorithmThresholds.from_dict(_yaml(p)), args.thresholds
    )
    changes = {f.name: getattr(args, f.name) for f in dataclasses.fields(AlgorithmThresholds)}
    changes = {k: v for k, v in changes.items() if v is not None}
    return _guard(lambda: base.replace(**changes)) if changes else base


def cmd_simulate(args) -> int:
    spec = _phantom(args.phantom)
    scan = _guard(load_scan_config, args.config) if args.config else PipelineConfig().scan
    if args.seed is not None:
        scan = scan.replace(seed=args.seed)
    if args.noise or args.no_noise:
        scan = scan.replace(noise=dataclasses.replace(scan.noise, enabled=bool(args.noise)))
    histories = simulate(rasterize_phantom(spec), spec.grid, scan)
    write_histories(args.out, histories)
    print(f"wrote {len(histories)} histories to {args.out}")
    return EXIT_OK


def cmd_cut(args) -> int:
    histories = read_histories(args.input)
    bins = bin_histories(histories, _binning(args.config))
    survivors, cut_bins = apply_data_cuts(bins)
    write_histories(args.out, survivors)
    table = cut_bins.table(limit=args.limit)
    header = f"histories in: {len(histories)}  kept: {len(survivors)}  bins: {len(cut_bins)}\n"
    if args.report:
        Path(args.report).write_text(header + table)
    else:
        sys.stdout.write(header + table)
    return EXIT_OK


def cmd_hull(args) -> int:
    grid = _grid(args.grid)
    th = _thresholds(args)
    histories = read_histories(args.input)
    bins = None
    if args.algo in ("fbp", "sc"):
        bins = bin_histories(histories, _binning(args.binning))
        if not args.precut:
            _, bins = apply_data_cuts(bins)
    mask = detect(args.algo, grid, th, histories, bins, args.threads)
    write_mask(args.out, mask, grid)
    if args.images:
        out = Path(args.images)
        out.mkdir(parents=True, exist_ok=True)
        for iz in range(mask.shape[0]):
            export_slice_image(mask[iz], out / f"{args.algo}_z{iz:02d}.pgm", "none")
    print(f"{args.algo}: {int(mask.sum())} hull voxels written to {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    approx, approx_grid = read_mask(args.approx)
    if args.truth is not None:
        truth, truth_grid = read_mask(args.truth)
    else:
        spec = _phantom(args.phantom)
        truth_grid = approx_grid
        truth = resample_hull(true_hull(rasterize_phantom(spec)), spec.grid, truth_grid)
    result = compare_hulls(truth, approx, truth_grid, approx_grid)
    text = yaml.safe_dump(result.to_dict(), sort_keys=False)
    print(f"missing: {result.missing}\nextra: {result.extra}\ntruth voxels: {result.truth_size}")
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def _pipeline_config(args) -> PipelineConfig:
    cfg = _guard(load_pipeline_config, args.config) if args.config else PipelineConfig()
    return _guard(cfg.with_overrides, args.seed, args.threads)


def cmd_bench(args) -> int:
    cfg = _pipeline_config(args)
    spec = cfg.phantom if cfg.phantom is not None else default_neo_spec()
    histories = simulate(rasterize_phantom(spec), spec.grid, cfg.scan)
    bins = None
    if {"fbp", "sc"} & set(cfg.algorithms):
        _, bins = apply_data_cuts(bin_histories(histories, cfg.binning))
    repeats = args.repeats if args.repeats is not None else max(1, cfg.bench_repeats)
    report = run_benchmark(cfg.grid, cfg.thresholds, histories, bins, cfg.algorithms, repeats, cfg.threads)
    for algo in cfg.algorithms:
        print(f"{algo:>4}: min {report.min(algo):.4f} s  median {report.median(algo):.4f} s")
    if args.out:
        Path(args.out).write_text(yaml.safe_dump(report.to_dict(), sort_keys=False))
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args)
    if args.algorithms:
        cfg.algorithms = tuple(args.algorithms)
    result = run_pipeline(cfg, args.out)
    sys.stdout.write(result.table)
    return EXIT_OK


def _add_common(p, config_help):
    p.add_argument("--config", help=config_help)
    p.add_argument("--seed", type=int, help="override the random seed")
    p.add_argument("--threads", type=int, help="worker threads for counting stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcthull", description="Proton CT hull detection toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a proton scan into a history file")
    _add_common(p, "scan config (YAML)")
    p.add_argument("--phantom", help="phantom spec (YAML); default is the packaged NEO phantom")
    p.add_argument("--out", required=True, help="output history file")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("--noise", action="store_true", help="force WEPL noise on")
    noise.add_argument("--no-noise", action="store_true", help="force WEPL noise off")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("cut", help="bin histories and drop outliers")
    _add_common(p, "binning config (YAML)")
    p.add_argument("input", help="input history file")
    p.add_argument("--out", required=True, help="filtered history file")
    p.add_argument("--report", help="write the bin statistics table here instead of stdout")
    p.add_argument("--limit", type=int, default=50, help="rows of the bin table to show")
    p.set_defaults(run=cmd_cut)

    p = sub.add_parser("hull", help="detect the object hull")
    _add_common(p, "unused; accepted for symmetry")
    p.add_argument("input", help="input history file")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--grid", help="reconstruction grid (YAML); default 200x200x8, 1 mm x 1 mm x 3 mm")
    p.add_argument("--binning", help="binning config (YAML) for fbp and sc")
    p.add_argument("--precut", action="store_true", help="input is already cut; skip the data cuts")
    p.add_argument("--thresholds", help="threshold set (YAML)")
    for f in dataclasses.fields(AlgorithmThresholds):
        kind = int if f.name == "msc_Nt" else float
        p.add_argument(f"--{f.name}", type=kind, default=None, help=f"override {f.name}")
    p.add_argument("--out", required=True, help="output mask file")
    p.add_argument("--images", help="directory for per-slice PGM images")
    p.set_defaults(run=cmd_hull)

    p = sub.add_parser("compare", help="count missing and extra voxels")
    _add_common(p, "unused; accepted for symmetry")
    p.add_argument("approx", help="mask file to evaluate")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--truth", help="truth mask file")
    src.add_argument("--phantom", help="phantom spec to derive the truth hull from")
    p.add_argument("--out", help="write the full comparison (YAML) here")
    p.set_defaults(run=cmd_compare)

    p = sub.add_parser("bench", help="time the detection stages")
    _add_common(p, "pipeline config (YAML)")
    p.add_argument("--repeats", type=int, help="timed runs per algorithm")
    p.add_argument("--out", help="write the report (YAML) here")
    p.set_defaults(run=cmd_bench)

    p = sub.add_parser("pipeline", help="simulate, cut, detect, compare and report")
    _add_common(p, "pipeline config (YAML)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--algorithms", nargs="+", choices=ALGORITHMS, help="subset of detectors to run")
    p.set_defaults(run=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is None:
        args.threads = 1 if args.command not in ("bench", "pipeline") else None
    try:
        return args.run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except yaml.YAMLError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HistoryFormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except GridMismatchError as exc:
        print(f"grid mismatch: {exc}", file=sys.stderr)
        return EXIT_GRID
    except PipelineError as exc:
        if isinstance(exc.cause, OSError):
            print(f"i/o error in {exc.stage}: {exc.cause}", file=sys.stderr)
            return EXIT_IO
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
