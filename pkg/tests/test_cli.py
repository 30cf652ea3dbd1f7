import subprocess
import sys

import numpy as np
import pytest

from nanodepth.arch import build_network, count_macs, count_params, default_config
from nanodepth.cli import run_cli
from nanodepth.formats import PfmImage, read_pfm, write_pfm, write_ppm


def run(capsys, *argv):
    code = run_cli(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def data_lines(out):
    return [ln for ln in out.splitlines() if ln.startswith("#DATA ")]


def test_count_matches_arch(capsys):
    code, out, _ = run(capsys, "count", "--config", "kitti-default")
    g = build_network(default_config("kitti"))
    p, m = count_params(g), count_macs(g)
    assert code == 0
    assert data_lines(out) == [f"#DATA {p},{m},{p / 1e6:.2f},{m / 1e9:.2f}"]


def test_netscore_example(capsys):
    code, out, _ = run(capsys, "netscore", "--delta1", "0.894", "--absrel", "0.103",
                       "--params-m", "1.75", "--macs-g", "4.66")
    assert code == 0
    assert float(data_lines(out)[0].split()[1]) == pytest.approx(23.92, abs=5e-3)


def test_eval_identical_files(tmp_path, capsys):
    gt = np.random.default_rng(0).uniform(1, 5, (1, 1, 6, 8)).astype(np.float32)
    write_pfm(tmp_path / "gt.pfm", PfmImage.from_tensor(gt))
    code, out, _ = run(capsys, "eval", "--pred", str(tmp_path / "gt.pfm"),
                       "--gt", str(tmp_path / "gt.pfm"))
    assert code == 0
    assert data_lines(out) == ["#DATA 0.000000,0.000000,0.000000,0.000000,0.000000,"
                               "1.000000,1.000000,1.000000,48"]


def test_infer_writes_depth_map(tmp_path, capsys):
    write_ppm(tmp_path / "in.ppm", np.random.default_rng(0).random((1, 3, 64, 64)))
    code, _, _ = run(capsys, "infer", "--config", "minimal", "--input", str(tmp_path / "in.ppm"),
                     "--output", str(tmp_path / "out.pfm"))
    assert code == 0
    img = read_pfm(tmp_path / "out.pfm")
    assert (img.width, img.height, img.channels) == (64, 64, 1)


def test_infer_size_mismatch_fails(tmp_path, capsys):
    write_ppm(tmp_path / "in.ppm", np.zeros((1, 3, 8, 8)))
    code, _, err = run(capsys, "infer", "--config", "minimal", "--input",
                       str(tmp_path / "in.ppm"), "--output", str(tmp_path / "o.pfm"))
    assert code != 0 and "expects" in err


def test_build_round_trips_through_file(tmp_path, capsys):
    path = tmp_path / "c.txt"
    code, out1, _ = run(capsys, "build", "--config", "reduced", "--out", str(path))
    assert code == 0
    code, out2, _ = run(capsys, "build", "--config", str(path))
    assert code == 0
    assert out2.startswith("nanodepth-config v1")
    assert data_lines(out1) == data_lines(out2)


def test_search_default_space(capsys):
    code, out, _ = run(capsys, "search", "--generations", "10")
    assert code == 0
    assert data_lines(out)[0].startswith("#DATA search,ok,")
    assert data_lines(out)[0].split(",")[3] == "44"


def test_search_impossible(capsys):
    code, out, err = run(capsys, "search", "--params-max", "1", "--generations", "1")
    assert code != 0 and "no feasible" in err


def test_train_small_run(tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--steps", "2", "--holdout", "2", "--batch", "2",
                       "--run-dir", str(tmp_path / "run"))
    assert code == 0
    assert len(data_lines(out)) == 1
    assert (tmp_path / "run" / "weights.ndnw").exists()


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--config", "minimal", "--iterations", "10")
    assert code == 0 and "images_per_second=" in out


def test_gradcheck_small(capsys):
    code, out, _ = run(capsys, "gradcheck", "--cases", "2", "--network-cases", "1")
    assert code == 0
    assert len(data_lines(out)) == 11


@pytest.mark.parametrize("argv", [["bogus"], ["count"], ["count", "--config", "x", "--nope"], []])
def test_usage_errors(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code != 0
    assert "usage:" in err


def test_missing_config_diagnostic(capsys):
    code, _, err = run(capsys, "count", "--config", "does-not-exist.txt")
    assert code == 1 and err.startswith("nanodepth count: error:")


def test_corrupt_pfm_diagnostic(tmp_path, capsys):
    (tmp_path / "bad.pfm").write_bytes(b"Pf\n2 2\n0\n")
    code, out, err = run(capsys, "eval", "--pred", str(tmp_path / "bad.pfm"),
                         "--gt", str(tmp_path / "bad.pfm"))
    assert code == 1 and "error" in err and not data_lines(out)


def test_data_lines_byte_stable_across_processes(tmp_path):
    argv = [sys.executable, "-m", "nanodepth", "netscore", "--delta1", "0.9", "--absrel", "0.1",
            "--params-m", "2", "--macs-g", "3"]
    a = subprocess.run(argv, capture_output=True, check=True).stdout
    b = subprocess.run(argv, capture_output=True, check=True).stdout
    assert a == b and b"#DATA " in a
