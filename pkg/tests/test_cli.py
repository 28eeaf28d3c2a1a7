import csv
import subprocess
import sys

import numpy as np
import pytest

from mriseg import io
from mriseg.cli import main


def test_synth_then_run_from_kspace(tmp_path, capsys):
    syn = tmp_path / "syn"
    assert main(["synth", "--degradation", "noise:0.1", "--size", "64", "--out", str(syn)]) == 0
    for name in ("clean.pgm", "degraded.pgm", "truth.pgm", "kspace.bin"):
        assert (syn / name).exists()
    k = io.load_kspace(syn / "kspace.bin")
    assert k.shape == (64, 64)

    out = tmp_path / "run"
    rc = main(["run", "--preset", "noise0.1/basic", "--kspace", str(syn / "kspace.bin"),
               "--truth", str(syn / "truth.pgm"), "--out", str(out)])
    assert rc == 0
    assert "JS" in capsys.readouterr().out
    for name in ("reconstructed.pgm", "filtered.pgm", "segmented.pgm", "diagnostics.tsv", "metrics.csv"):
        assert (out / name).exists()
    with open(out / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["image", "approach", "K", "d_p", "eta", "n_cl", "n_b", "JS", "DSC", "SA"]
    assert float(rows[1][7]) >= 90
    lines = (out / "diagnostics.tsv").read_text().splitlines()
    assert lines[0].startswith("iteration\t") and len(lines) >= 2


def test_run_synthesizes_from_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("preset = blur-motion/modified\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--size", "64", "--out", str(out)]) == 0
    assert (out / "degraded.pgm").exists() and (out / "metrics.csv").exists()


def test_run_from_image(tmp_path):
    img = np.zeros((64, 64))
    img[16:48, 16:48] = 1.0
    io.save_image(img, tmp_path / "in.png")
    out = tmp_path / "o"
    assert main(["run", "--image", str(tmp_path / "in.png"), "--out", str(out)]) == 0
    seg = io.load_labels(out / "segmented.pgm")
    assert np.array_equal(seg == 1, img == 1.0)


def test_grid_small(tmp_path, capsys):
    out = tmp_path / "g"
    assert main(["grid", "--approaches", "basic", "--size", "64", "--no-figures", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    assert (out / "metrics.csv").exists() and not (out / "metrics.png").exists()


def test_grid_suite_file_with_seed(tmp_path):
    suite = tmp_path / "s.txt"
    suite.write_text("[case one]\npreset = noise0.3\n")
    out = tmp_path / "g"
    assert main(["grid", "--suite", str(suite), "--size", "64", "--seed", "2", "--out", str(out)]) == 0
    assert (out / "one" / "panel.png").exists()


def test_metrics_subcommand(tmp_path, capsys):
    a = np.zeros((8, 8), int)
    a[:4] = 1
    b = np.zeros((8, 8), int)
    b[:2] = 1
    io.write_pgm_raw(tmp_path / "a.pgm", (a * 255).astype(np.uint8), 255)
    io.write_pgm_raw(tmp_path / "b.pgm", (b * 255).astype(np.uint8), 255)
    assert main(["metrics", str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["JS,DSC,SA", "50.00,66.67,75.00"]
    assert main(["metrics", str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm"), "--matching", "best"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "class,JS,DSC,SA"


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--kspace", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "o")]) == 2
    assert "error: [run]" in capsys.readouterr().err
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("d_p = 3\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text("lin_max_iter = 1\nsolver = cg\neta = 0.001\nspacing = 1\n")
    assert main(["run", "--config", str(cfg), "--size", "64", "--out", str(tmp_path / "o")]) == 2
    assert "[filtering]" in capsys.readouterr().err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mriseg", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "synth" in r.stdout
