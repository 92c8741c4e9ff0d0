"""Acceptance criteria 1-10, one test each.

Every test records a PASS/FAIL line (see ``conftest.pytest_terminal_summary``)
and prints it, so ``pytest -v -s`` or the terminal summary shows the outcome
of each criterion next to the measured numbers.
"""

import time
import warnings

import numpy as np
import pytest

from conftest import CRITERIA_RESULTS
from oracles import fine_step_integral, segment_touches_boxes
from pcthull.geometry import GridSpec, LinePath, voxels_along_line
from pcthull.hull import (
    AlgorithmThresholds,
    build_sinogram,
    count_paths,
    fbp_detect,
    fbp_reconstruct,
    find_edge_chain,
    hit_classified,
    msc_mask_from_counts,
)
from pcthull.io import HISTORY_DTYPE, read_histories
from pcthull.phantom import EllipseRegion, PhantomSpec, rasterize_phantom
from pcthull.pipeline import DESK_GRID, PipelineConfig, desk_scan, run_pipeline
from pcthull.preprocessing import apply_data_cuts, bin_histories
from pcthull.simulator import NoiseModel, ScanConfig, integrate_wepl


def record(number, ok, detail):
    CRITERIA_RESULTS[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Noiseless and noisy desk-scale runs on matched seeds."""
    out = {}
    for name, noise in (("noiseless", False), ("noisy", True)):
        cfg = PipelineConfig(
            scan=desk_scan(seed=2024, noise=NoiseModel(enabled=noise)),
            bench_repeats=3 if not noise else 0,
            export_images=not noise,
        )
        t0 = time.perf_counter()
        result = run_pipeline(cfg, tmp_path_factory.mktemp(name))
        out[name] = (cfg, result, time.perf_counter() - t0)
    return out


def test_criterion_01_containment(desk_runs):
    cfg, result, seconds = desk_runs["noiseless"]
    grid = cfg.grid
    scale_ok = grid.nx == 200 and grid.ny == 200 and grid.nz >= 8 and result.history_count >= 1_000_000
    missing = {a: result.comparisons[a].missing for a in ("sc", "msc", "sm")}
    ok = scale_ok and all(v == 0 for v in missing.values()) and seconds < 300
    record(
        1,
        ok,
        f"missing {missing}; {result.history_count} histories on {grid.nx}x{grid.ny}x{grid.nz}; "
        f"pipeline {seconds:.1f} s",
    )


def test_criterion_02_extra_voxel_ordering(desk_runs):
    _, result, _ = desk_runs["noiseless"]
    extra = {a: result.comparisons[a].extra for a in ("sc", "msc", "sm")}
    ok = extra["sc"] < extra["msc"] < extra["sm"]
    record(2, ok, f"extra SC {extra['sc']}, MSC {extra['msc']}, SM {extra['sm']} (need SC < MSC < SM)")


def test_criterion_03_fbp_noise_sensitivity(desk_runs):
    clean = desk_runs["noiseless"][1].comparisons["fbp"]
    noisy = desk_runs["noisy"][1].comparisons["fbp"]
    ok = noisy.extra > clean.extra and clean.missing > 0 and noisy.missing > 0
    record(
        3,
        ok,
        f"FBP extra {clean.extra} -> {noisy.extra}; missing {clean.missing} (noiseless), {noisy.missing} (noisy)",
    )


def test_criterion_04_speed_ordering(desk_runs):
    _, result, _ = desk_runs["noiseless"]
    t = {a: result.bench.min(a) for a in ("fbp", "sc", "msc", "sm")}
    counting = (t["msc"], t["sm"])
    similar = max(counting) / min(counting) <= 3.0
    ok = t["sc"] < min(counting) and max(counting) < t["fbp"] and similar and t["fbp"] >= 10 * t["sc"]
    record(
        4,
        ok,
        f"min times SC {t['sc']:.3f} s, MSC {t['msc']:.3f} s, SM {t['sm']:.3f} s, FBP {t['fbp']:.3f} s; "
        f"FBP/SC = {t['fbp'] / t['sc']:.1f} (need SC < SM ~ MSC < FBP and FBP/SC >= 10)",
    )


def test_criterion_05_traversal_oracle():
    rng = np.random.default_rng(55)
    shapes = [
        GridSpec.centered(200, 200, 1),
        GridSpec.centered(37, 23, 11, 1.0, 1.5, 3.0),
        GridSpec(16, 16, 16, 0.5, 0.5, 0.5, origin=(-3.0, -5.0, 0.25)),
    ]
    t0 = time.perf_counter()
    mismatches = 0
    for grid in shapes:
        lo, hi = np.array(grid.origin), np.array(grid.upper)
        span = hi - lo
        for _ in range(100):
            p0 = lo - 0.2 * span + 1.4 * span * rng.random(3)
            p1 = lo - 0.2 * span + 1.4 * span * rng.random(3)
            got = voxels_along_line(LinePath(p0, p1), grid)
            if len(got) != len(set(got)) or set(got) != segment_touches_boxes(p0, p1, grid):
                mismatches += 1
    seconds = time.perf_counter() - t0
    record(5, mismatches == 0 and seconds < 10, f"{mismatches} mismatches over 3 x 100 lines in {seconds:.1f} s")


def test_criterion_06_wepl_integration():
    grid = GridSpec.centered(120, 120, 1)
    spec = PhantomSpec(grid, [EllipseRegion((0.0, 0.0), 50.0, 50.0, 1.0)])
    rsp = rasterize_phantom(spec)
    rng = np.random.default_rng(66)
    worst = 0.0
    for _ in range(100):
        a, b = rng.uniform(0, 2 * np.pi, 2)
        z = rng.uniform(-0.5, 0.5)
        p0 = (50 * np.cos(a), 50 * np.sin(a), z)
        p1 = (50 * np.cos(b), 50 * np.sin(b), z)
        if np.hypot(p0[0] - p1[0], p0[1] - p1[1]) < 1e-6:
            continue
        got = integrate_wepl(LinePath(p0, p1), rsp, grid)
        worst = max(worst, abs(got - fine_step_integral(p0, p1, rsp, grid)))
    tolerance = 2 * 1.0 * 1.0
    record(6, worst <= tolerance, f"largest deviation {worst:.3f} mm over 100 chords (tolerance {tolerance} mm)")


def test_criterion_07_data_cuts():
    rng = np.random.default_rng(77)
    per_bin, n_bins = 2000, 20
    h = np.zeros(per_bin * n_bins, dtype=HISTORY_DTYPE)
    h["projection_angle"] = np.repeat(np.arange(n_bins) * 4.0, per_bin)
    h["lateral_displacement"] = 0.5
    h["vertical_displacement"] = 2.5
    planted = np.zeros(len(h), dtype=bool)
    for b in range(n_bins):
        sl = slice(b * per_bin, (b + 1) * per_bin)
        mean, sigma = rng.uniform(20, 200), rng.uniform(0.5, 5.0)
        h["wepl"][sl] = rng.normal(mean, sigma, per_bin)
        h["exit_angle"][sl] = rng.normal(0, 0.004, per_bin)
        h["exit_vertical_angle"][sl] = rng.normal(0, 0.004, per_bin)
        bad = b * per_bin + rng.choice(per_bin, per_bin // 20, replace=False)
        planted[bad] = True
        h["wepl"][bad] = mean + 10 * sigma * rng.choice([-1.0, 1.0], bad.size)
    h["exit_x"] = np.arange(len(h))  # tag rows so survivors can be traced back
    survivors, _ = apply_data_cuts(bin_histories(h))
    kept = np.zeros(len(h), dtype=bool)
    kept[survivors["exit_x"].astype(np.int64)] = True
    outliers_removed = 1 - kept[planted].mean()
    inliers_lost = 1 - kept[~planted].mean()
    ok = outliers_removed == 1.0 and inliers_lost <= 0.01
    record(7, ok, f"outliers removed {outliers_removed:.2%}, inliers removed {inliers_lost:.3%}")


def _disk_reconstruction(path_length):
    from pcthull.simulator import simulate

    spec = PhantomSpec(GridSpec.centered(200, 200, 24), [EllipseRegion((0.0, 0.0), 50.0, 50.0, 1.0)])
    cfg = ScanConfig(protons_per_projection=8192, vertical_range=(-5.0, 5.0), seed=8, path_length=path_length)
    _, bins = apply_data_cuts(bin_histories(simulate(rasterize_phantom(spec), spec.grid, cfg)))
    grid = GridSpec.centered(200, 200, 2, 1.0, 1.0, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        mask, recon = fbp_detect(bins, grid)
    r = np.hypot(grid.centers(0)[None, :], grid.centers(1)[:, None])
    interior = r <= 45.0
    means = [float(recon[k][interior].mean()) for k in range(grid.nz)]
    missing = int(sum((mask[k][interior] == 0).sum() for k in range(grid.nz)))
    return bins.config.num_angle_bins, means, missing


def test_criterion_08_fbp_fidelity():
    # Reconstruction fidelity needs line-integral data, so the scan uses exact
    # intersection lengths. The unit-length rule inflates oblique views and is
    # reported alongside for reference only.
    views, means, missing = _disk_reconstruction("exact")
    _, unit_means, _ = _disk_reconstruction("unit")
    ok = views == 90 and all(abs(m - 1.0) <= 0.1 for m in means) and missing == 0
    record(
        8,
        ok,
        f"{views} views; eroded-interior means {', '.join(f'{m:.4f}' for m in means)}; missing {missing} "
        f"(unit-length data: {', '.join(f'{m:.4f}' for m in unit_means)})",
    )


def test_criterion_09_invariances(desk_runs):
    cfg, result, _ = desk_runs["noiseless"]
    histories = read_histories(result.out_dir / "histories.bin")
    rng = np.random.default_rng(99)
    notes = []

    counts = rng.integers(0, 400, size=(3, 40, 40))
    msc_ok = all(
        np.array_equal(msc_mask_from_counts(counts, 50), msc_mask_from_counts(counts + c, 50))
        for c in (0, 1, 17, 50, 12345, 10**9)
    )
    notes.append(f"MSC +c {'ok' if msc_ok else 'broken'}")

    m = count_paths(histories, hit_classified(histories, AlgorithmThresholds()), cfg.grid)
    sm_ok = True
    for k in (0.001, 0.37, 3.0, 1e5):
        for iz in (0, cfg.grid.nz // 2):
            a, b = find_edge_chain(m[iz]), find_edge_chain(k * m[iz])
            sm_ok &= np.array_equal(a.pixels, b.pixels)
    notes.append(f"SM chain under k*M {'ok' if sm_ok else 'broken'}")

    _, bins = apply_data_cuts(bin_histories(histories))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sino = build_sinogram(bins)
    other = sino.with_values(rng.normal(size=sino.values.shape))
    alpha, beta = 1.7, -0.45
    combo = fbp_reconstruct(sino.with_values(alpha * sino.values + beta * other.values), cfg.grid)
    parts = alpha * fbp_reconstruct(sino, cfg.grid) + beta * fbp_reconstruct(other, cfg.grid)
    rel = float(np.abs(combo - parts).max() / np.abs(parts).max())
    lin_ok = rel <= 1e-9
    notes.append(f"FBP linearity rel. error {rel:.1e}")
    record(9, msc_ok and sm_ok and lin_ok, "; ".join(notes))


def test_criterion_10_determinism(tmp_path):
    runs = []
    for threads in (1, 2):
        cfg = PipelineConfig(
            scan=desk_scan(protons_per_projection=2048, seed=10, noise=NoiseModel(enabled=True)),
            threads=threads,
            bench_repeats=0,
        )
        runs.append(run_pipeline(cfg, tmp_path / f"threads{threads}").out_dir)
    files = ["histories.bin", "truth.mask", "comparison.txt"] + [f"masks/{a}.mask" for a in ("fbp", "sc", "msc", "sm")]
    differing = [f for f in files if (runs[0] / f).read_bytes() != (runs[1] / f).read_bytes()]
    record(10, not differing, f"{len(files) - len(differing)} of {len(files)} artifacts byte-identical across 1 and 2 threads")
