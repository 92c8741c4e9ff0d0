import numpy as np
import pytest
from scipy import stats

from oracles import fine_step_integral
from pcthull.geometry import GridSpec, LinePath
from pcthull.io import write_histories
from pcthull.phantom import EllipseRegion, PhantomSpec, default_neo_spec, rasterize_phantom
from pcthull.simulator import (
    FULL_STUDY_HISTORIES,
    NoiseModel,
    ScanConfig,
    ScatterModel,
    apply_wepl_noise,
    generate_histories,
    integrate_wepl,
    simulate,
)

QUIET = ScatterModel(0.0, 0.0, 0.0)


def _disk(radius=20.0, n=60, nz=4):
    spec = PhantomSpec(GridSpec.centered(n, n, nz), [EllipseRegion((0.0, 0.0), radius, radius, 1.0)])
    return spec, rasterize_phantom(spec)


def test_line_through_ten_unit_voxels():
    grid = GridSpec(10, 10, 1)
    rsp = np.ones(grid.shape)
    line = LinePath((-3.0, 2.5, 0.5), (15.0, 2.5, 0.5))
    assert integrate_wepl(line, rsp, grid) == pytest.approx(10.0)
    assert integrate_wepl(line, rsp, grid, "unit") == 10.0


def test_line_missing_object_has_zero_wepl():
    spec, rsp = _disk()
    assert integrate_wepl(LinePath((-40.0, 28.0, 0.5), (40.0, 28.0, 0.5)), rsp, spec.grid) == 0.0


def test_neo_diameter_chord_matches_fine_steps():
    spec = default_neo_spec(nz=2)
    rsp = rasterize_phantom(spec)
    for p0, p1 in [((-100.0, 0.3, 0.0), (100.0, 0.3, 0.0)), ((0.2, -100.0, -0.5), (0.2, 100.0, -0.5))]:
        got = integrate_wepl(LinePath(p0, p1), rsp, spec.grid)
        ref = fine_step_integral(p0, p1, rsp, spec.grid)
        assert abs(got - ref) <= 2 * 1.6


def test_unknown_path_length_model_rejected():
    spec, rsp = _disk()
    with pytest.raises(ValueError):
        integrate_wepl(LinePath((0, 0, 0), (1, 1, 0)), rsp, spec.grid, "curved")
    with pytest.raises(ValueError):
        ScanConfig(path_length="curved")


def test_zero_width_noise_is_identity():
    w = np.array([0.0, 1.5, 200.0])
    assert np.array_equal(apply_wepl_noise(w, 0.0, 0.0, np.random.default_rng(0)), w)


def test_noise_width_at_100_mm():
    samples = apply_wepl_noise(np.full(100_000, 100.0), 1.0, 0.02, np.random.default_rng(4))
    assert abs(samples.std() - 3.0) < 0.03 * 3.0


def test_noise_is_clamped_at_zero():
    samples = apply_wepl_noise(np.zeros(10_000), 1.0, 0.0, np.random.default_rng(2))
    assert samples.min() >= 0.0 and samples.max() > 0.0


def test_noise_argument_checks():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        apply_wepl_noise(np.ones(3), -1.0, 0.0, rng)
    with pytest.raises(ValueError):
        apply_wepl_noise(np.array([-1.0]), 1.0, 0.0, rng)
    with pytest.raises(ValueError):
        NoiseModel(sigma_slope=-0.1)


def test_history_totals():
    assert ScanConfig(protons_per_projection=131_072).total_histories == FULL_STUDY_HISTORIES == 11_796_480
    assert ScanConfig().total_histories == 1_474_560
    with pytest.raises(ValueError):
        ScanConfig(num_projections=45)


def test_quiet_scan_misses_have_zero_wepl_and_no_deflection():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=500, scatter=QUIET, field_half_width=40.0)
    h = simulate(rsp, spec.grid, cfg)
    assert len(h) == cfg.total_histories
    miss = h["wepl"] == 0
    assert miss.any()
    assert np.all(h["exit_angle"][miss] == h["entry_angle"][miss])
    assert np.all(h["exit_vertical_angle"][miss] == h["entry_vertical_angle"][miss])


def test_noise_free_wepl_equals_chord_integral():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=200, scatter=QUIET, field_half_width=30.0, seed=3)
    h = simulate(rsp, spec.grid, cfg)
    for r in h[::97]:
        line = LinePath((r["entry_x"], r["entry_y"], r["entry_z"]), (r["exit_x"], r["exit_y"], r["exit_z"]))
        assert r["wepl"] == integrate_wepl(line, rsp, spec.grid, cfg.path_length)


def test_exact_path_length_scan_matches_exact_integral():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=100, scatter=QUIET, field_half_width=30.0, path_length="exact")
    h = simulate(rsp, spec.grid, cfg)
    r = h[np.argmax(h["wepl"])]
    line = LinePath((r["entry_x"], r["entry_y"], r["entry_z"]), (r["exit_x"], r["exit_y"], r["exit_z"]))
    assert r["wepl"] == integrate_wepl(line, rsp, spec.grid)
    assert r["wepl"] < integrate_wepl(line, rsp, spec.grid, "unit")


def test_grazing_protons_never_fall_under_the_miss_cutoff():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=3000, scatter=QUIET, field_half_width=30.0)
    h = simulate(rsp, spec.grid, cfg)
    positive = h["wepl"][h["wepl"] > 0]
    assert positive.min() >= 1.0


def test_scattered_protons_keep_consistent_wepl():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=200, field_half_width=30.0, seed=3)
    h = simulate(rsp, spec.grid, cfg)
    assert np.any(h["exit_angle"] != 0)
    r = h[np.argmax(h["wepl"])]
    line = LinePath((r["entry_x"], r["entry_y"], r["entry_z"]), (r["exit_x"], r["exit_y"], r["exit_z"]))
    assert r["wepl"] == integrate_wepl(line, rsp, spec.grid, cfg.path_length)


def test_fixed_seed_gives_identical_files(tmp_path):
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=300, seed=9, noise=NoiseModel(enabled=True))
    write_histories(tmp_path / "a.bin", simulate(rsp, spec.grid, cfg))
    write_histories(tmp_path / "b.bin", simulate(rsp, spec.grid, cfg))
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    other = simulate(rsp, spec.grid, cfg.replace(seed=10))
    assert other.tobytes() != (tmp_path / "a.bin").read_bytes()[20:]


def test_projection_streams_are_independent_of_iteration():
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=100, seed=1)
    parts = list(generate_histories(rsp, spec.grid, cfg))
    assert len(parts) == 90
    assert np.array_equal(np.concatenate(parts), simulate(rsp, spec.grid, cfg))
    assert np.all(parts[7]["projection_angle"] == 28.0)


@pytest.mark.parametrize("sampling", ["stratified", "uniform"])
def test_entry_positions_are_uniform_over_the_field(sampling):
    spec, rsp = _disk()
    cfg = ScanConfig(protons_per_projection=4096, sampling=sampling, scatter=QUIET, vertical_range=(-2.0, 2.0))
    h = simulate(rsp, spec.grid, cfg)
    first = h[h["projection_angle"] == 0.0]
    lateral = first["entry_y"]
    assert stats.kstest(lateral, "uniform", args=(-142.0, 284.0)).pvalue > 1e-3
    assert stats.kstest(first["entry_z"], "uniform", args=(-2.0, 4.0)).pvalue > 1e-3
