"""End-to-end driver: phantom, scan, cuts, hull detection, comparison, timing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml

from .evaluation import ALGORITHMS, BenchReport, HullComparison, compare_hulls, detect, export_slice_image, run_benchmark
from .geometry import GridSpec
from .hull import AlgorithmThresholds
from .io import write_histories, write_mask
from .phantom import PhantomSpec, default_neo_spec, load_phantom_spec, rasterize_phantom, resample_hull, true_hull
from .preprocessing import BinningConfig, apply_data_cuts, bin_histories
from .simulator import ScanConfig, simulate

log = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "PipelineResult",
    "DESK_GRID",
    "desk_scan",
    "load_pipeline_config",
    "prepare_phantom",
    "run_pipeline",
    "format_table",
]

# 200 x 200 in-plane at 1 mm, eight 3 mm slices covering z in [-12, 12) mm
DESK_GRID = GridSpec.centered(200, 200, 8, 1.0, 1.0, 3.0)


def desk_scan(**changes) -> ScanConfig:
    """90 x 16,384 protons over the 24 mm band of the desk grid."""
    base = dict(protons_per_projection=16384, vertical_range=(-12.0, 12.0), sampling="stratified")
    base.update(changes)
    return ScanConfig(**base)


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    scan: ScanConfig = field(default_factory=desk_scan)
    grid: GridSpec = DESK_GRID
    phantom: Optional[PhantomSpec] = None
    binning: BinningConfig = field(default_factory=BinningConfig)
    thresholds: AlgorithmThresholds = field(default_factory=AlgorithmThresholds)
    algorithms: tuple[str, ...] = ALGORITHMS
    threads: int = 1
    bench_repeats: int = 3
    export_images: bool = True

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.bench_repeats < 0:
            raise ValueError("bench_repeats must be >= 0")

    @property
    def seed(self) -> int:
        return self.scan.seed

    def to_dict(self) -> dict:
        return {
            "scan": self.scan.to_dict(),
            "grid": self.grid.to_dict(),
            "phantom": None if self.phantom is None else self.phantom.to_dict(),
            "binning": {
                "angular_bin": self.binning.angular_bin,
                "lateral_bin": self.binning.lateral_bin,
                "vertical_bin": self.binning.vertical_bin,
                "cut_sigma": self.binning.cut_sigma,
            },
            "thresholds": self.thresholds.to_dict(),
            "algorithms": list(self.algorithms),
            "threads": self.threads,
            "bench_repeats": self.bench_repeats,
            "export_images": self.export_images,
        }

    @classmethod
    def from_dict(cls, d: Optional[dict], base_dir: Optional[Path] = None) -> "PipelineConfig":
        d = dict(d or {})
        known = {
            "scan", "grid", "phantom", "binning", "thresholds", "algorithms",
            "threads", "bench_repeats", "export_images", "seed",
        }  # fmt: skip
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        kw = {}
        scan = desk_scan().to_dict()
        scan.update(d.get("scan") or {})
        if "seed" in d:
            scan["seed"] = d["seed"]
        kw["scan"] = ScanConfig.from_dict(scan)
        if d.get("grid") is not None:
            kw["grid"] = GridSpec.from_dict(d["grid"])
        ph = d.get("phantom")
        if isinstance(ph, str):
            path = Path(ph)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kw["phantom"] = load_phantom_spec(path)
        elif isinstance(ph, dict):
            kw["phantom"] = PhantomSpec.from_dict(ph)
        if d.get("binning") is not None:
            kw["binning"] = BinningConfig(**d["binning"])
        if d.get("thresholds") is not None:
            kw["thresholds"] = AlgorithmThresholds.from_dict(d["thresholds"])
        for key in ("algorithms", "threads", "bench_repeats", "export_images"):
            if d.get(key) is not None:
                kw[key] = d[key]
        return cls(**kw)

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None) -> "PipelineConfig":
        out = PipelineConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        if seed is not None:
            out.scan = out.scan.replace(seed=int(seed))
        if threads is not None:
            out.threads = int(threads)
            out.__post_init__()
        return out


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    with open(path) as fh:
        return PipelineConfig.from_dict(yaml.safe_load(fh), base_dir=path.parent)


@dataclass
class PipelineResult:
    out_dir: Path
    truth: np.ndarray
    masks: dict[str, np.ndarray]
    comparisons: dict[str, HullComparison]
    bench: Optional[BenchReport]
    detection_times: dict[str, float]
    history_count: int
    table: str


def prepare_phantom(cfg: PipelineConfig):
    """RSP volume, its grid, and the truth hull carried to the reconstruction grid."""
    spec = cfg.phantom if cfg.phantom is not None else default_neo_spec()
    rsp = rasterize_phantom(spec)
    truth = resample_hull(true_hull(rsp), spec.grid, cfg.grid)
    return rsp, spec.grid, truth


def format_table(
    comparisons: dict[str, HullComparison], times: Optional[dict[str, float]] = None, truth_size: Optional[int] = None
) -> str:
    """Plain-text table of time (optional), missing and extra voxels per algorithm."""
    names = list(comparisons)
    width = 12
    lines = [f"{'':<18}" + "".join(f"{n.upper():>{width}}" for n in names)]
    if times is not None:
        lines.append(f"{'Computation Time':<18}" + "".join(f"{times[n]:>{width - 2}.3f} s" for n in names))
    lines.append(f"{'Missing Voxels':<18}" + "".join(f"{comparisons[n].missing:>{width}d}" for n in names))
    lines.append(f"{'Extra Voxels':<18}" + "".join(f"{comparisons[n].extra:>{width}d}" for n in names))
    if truth_size is not None:
        lines.append(f"truth hull voxels: {truth_size}")
    return "\n".join(lines) + "\n"


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except PipelineError:
                raise
            except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
                raise PipelineError(name, exc) from exc

        return run

    return wrap


def run_pipeline(cfg: Union[PipelineConfig, dict, None], out_dir) -> PipelineResult:
    """Simulate, cut, detect, compare and time; write every artifact to ``out_dir``.

    Artifacts: ``histories.bin``, ``truth.mask``, ``masks/<algo>.mask``,
    ``images/<algo>_zNN.pgm``, ``comparison.txt`` (no timings, reproducible
    byte for byte), ``report.txt`` and ``report.yaml``.
    """
    if not isinstance(cfg, PipelineConfig):
        cfg = PipelineConfig.from_dict(cfg)
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    if cfg.export_images:
        (out / "images").mkdir(exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))

    rsp, phantom_grid, truth = _stage("phantom")(prepare_phantom)(cfg)
    write_mask(out / "truth.mask", truth, cfg.grid)

    histories = _stage("simulate")(simulate)(rsp, phantom_grid, cfg.scan)
    _stage("simulate")(write_histories)(out / "histories.bin", histories)

    bins = None
    if {"fbp", "sc"} & set(cfg.algorithms):

        def cut():
            _, b = apply_data_cuts(bin_histories(histories, cfg.binning))
            return b

        bins = _stage("cut")(cut)()

    masks, comparisons, times = {}, {}, {}
    for algo in cfg.algorithms:
        t0 = time.perf_counter()
        mask = _stage(algo)(detect)(algo, cfg.grid, cfg.thresholds, histories, bins, cfg.threads)
        times[algo] = time.perf_counter() - t0
        masks[algo] = mask
        write_mask(out / "masks" / f"{algo}.mask", mask, cfg.grid)
        comparisons[algo] = compare_hulls(truth, mask)
        if cfg.export_images:
            for iz in range(mask.shape[0]):
                export_slice_image(mask[iz], out / "images" / f"{algo}_z{iz:02d}.pgm", "none")

    bench = None
    if cfg.bench_repeats > 0:
        bench = _stage("bench")(run_benchmark)(
            cfg.grid, cfg.thresholds, histories, bins, cfg.algorithms, cfg.bench_repeats, cfg.threads
        )
        shown = {a: bench.min(a) for a in cfg.algorithms}
    else:
        shown = times

    truth_size = int(truth.sum())
    (out / "comparison.txt").write_text(format_table(comparisons, None, truth_size))
    table = format_table(comparisons, shown, truth_size)
    (out / "report.txt").write_text(table)
    report = {
        "history_count": int(len(histories)),
        "seed": cfg.seed,
        "threads": cfg.threads,
        "grid": cfg.grid.to_dict(),
        "truth_size": truth_size,
        "comparisons": {a: c.to_dict() for a, c in comparisons.items()},
        "detection_time": {a: float(shown[a]) for a in cfg.algorithms},
        "bench": None if bench is None else bench.to_dict(),
    }
    (out / "report.yaml").write_text(yaml.safe_dump(report, sort_keys=False))
    log.info("pipeline finished:\n%s", table)
    return PipelineResult(out, truth, masks, comparisons, bench, times, int(len(histories)), table)
