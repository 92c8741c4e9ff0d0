import numpy as np
import pytest
import yaml

from pcthull.cli import EXIT_CONFIG, EXIT_FORMAT, EXIT_GRID, EXIT_IO, EXIT_OK, main
from pcthull.geometry import GridSpec
from pcthull.io import read_histories, read_mask, write_mask


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scan.yaml").write_text(
        yaml.safe_dump({"protons_per_projection": 512, "vertical_range": [-12.0, 12.0], "seed": 1})
    )
    assert main(["simulate", "--config", str(d / "scan.yaml"), "--out", str(d / "h.bin"), "--seed", "2"]) == EXIT_OK
    return d


def test_simulate_writes_histories(workdir):
    h = read_histories(workdir / "h.bin")
    assert len(h) == 90 * 512
    assert h["wepl"].max() > 100


def test_simulate_noise_switch_changes_wepl(workdir):
    out = workdir / "noisy.bin"
    args = ["simulate", "--config", str(workdir / "scan.yaml"), "--out", str(out), "--seed", "2", "--noise"]
    assert main(args) == EXIT_OK
    clean, noisy = read_histories(workdir / "h.bin"), read_histories(out)
    assert np.array_equal(clean["entry_y"], noisy["entry_y"])
    assert not np.array_equal(clean["wepl"], noisy["wepl"])


def test_cut_writes_survivors_and_report(workdir, capsys):
    out, report = workdir / "cut.bin", workdir / "bins.txt"
    assert main(["cut", str(workdir / "h.bin"), "--out", str(out), "--report", str(report)]) == EXIT_OK
    kept = read_histories(out)
    assert 0 < len(kept) <= len(read_histories(workdir / "h.bin"))
    assert report.read_text().splitlines()[1].split()[0] == "angle"


def test_hull_and_compare(workdir, capsys):
    mask = workdir / "sc.mask"
    args = ["hull", str(workdir / "h.bin"), "--algo", "sc", "--out", str(mask), "--images", str(workdir / "img")]
    assert main(args + ["--wepl_miss_cutoff", "1.0"]) == EXIT_OK
    m, grid = read_mask(mask)
    assert grid.shape == (8, 200, 200) and m.any()
    assert len(list((workdir / "img").glob("*.pgm"))) == 8
    capsys.readouterr()
    assert main(["compare", str(mask), "--out", str(workdir / "cmp.yaml")]) == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    saved = yaml.safe_load((workdir / "cmp.yaml").read_text())
    assert printed[0] == f"missing: {saved['missing']}" and printed[1] == f"extra: {saved['extra']}"
    assert saved["truth_size"] == 122688
    # 512 protons per view leave sparse bins, so a few surface voxels may go
    assert saved["missing"] < 0.001 * saved["truth_size"]


def test_hull_threshold_override_reaches_the_detector(workdir):
    loose, strict = workdir / "a.mask", workdir / "b.mask"
    base = ["hull", str(workdir / "h.bin"), "--algo", "msc"]
    assert main(base + ["--out", str(loose), "--msc_Nt", "100000"]) == EXIT_OK
    assert main(base + ["--out", str(strict), "--msc_Nt", "1"]) == EXIT_OK
    assert read_mask(loose)[0].all()
    assert read_mask(strict)[0].sum() < read_mask(loose)[0].sum()


def test_exit_codes(workdir, tmp_path):
    assert main(["cut", str(tmp_path / "nope.bin"), "--out", str(tmp_path / "x.bin")]) == EXIT_IO
    (tmp_path / "junk.bin").write_bytes(b"garbage-garbage-garbage")
    assert main(["cut", str(tmp_path / "junk.bin"), "--out", str(tmp_path / "x.bin")]) == EXIT_FORMAT
    (tmp_path / "bad.yaml").write_text("protons_per_projection: -3\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path / "x.bin")]) == EXIT_CONFIG
    (tmp_path / "th.yaml").write_text("msc_nt: 4\n")
    args = ["hull", str(workdir / "h.bin"), "--algo", "msc", "--out", str(tmp_path / "m"), "--thresholds"]
    assert main(args + [str(tmp_path / "th.yaml")]) == EXIT_CONFIG
    g1, g2 = GridSpec(4, 4, 1), GridSpec(4, 5, 1)
    write_mask(tmp_path / "a.mask", np.ones(g1.shape), g1)
    write_mask(tmp_path / "b.mask", np.ones(g2.shape), g2)
    assert main(["compare", str(tmp_path / "a.mask"), "--truth", str(tmp_path / "b.mask")]) == EXIT_GRID
    with pytest.raises(SystemExit) as err:
        main(["hull", "--algo", "ct"])
    assert err.value.code == 2


def test_pipeline_and_bench_commands(tmp_path, capsys):
    (tmp_path / "cfg.yaml").write_text(
        yaml.safe_dump({"seed": 3, "bench_repeats": 1, "algorithms": ["sc", "fbp"], "scan": {"protons_per_projection": 512}})
    )
    assert main(["pipeline", "--config", str(tmp_path / "cfg.yaml"), "--out", str(tmp_path / "run"), "--algorithms", "sc"]) == 0
    assert "SC" in capsys.readouterr().out
    assert sorted(p.name for p in (tmp_path / "run" / "masks").iterdir()) == ["sc.mask"]
    assert main(["bench", "--config", str(tmp_path / "cfg.yaml"), "--repeats", "1", "--out", str(tmp_path / "b.yaml")]) == 0
    report = yaml.safe_load((tmp_path / "b.yaml").read_text())
    assert set(report["algorithms"]) == {"sc", "fbp"}
