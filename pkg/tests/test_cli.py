import json
import time

import numpy as np
import pytest
from click.testing import CliRunner

from krmap.bench import synthetic_task
from krmap.cli import main
from krmap.dataio import save_dataset


@pytest.fixture(scope="module")
def fixture_paths(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    train_ds, test_ds = synthetic_task(n_train=400, n_test=80, d=8, seed=7)
    train_path = root / "train.bin"
    test_path = root / "test.bin"
    save_dataset(train_ds, train_path)
    save_dataset(test_ds, test_path)
    res = run(
        ["train", "--data", str(train_path), "--out", str(root / "model.ckpt"),
         "--epochs", "3", "--batch", "200", "--seed", "0"]
    )
    assert res.exit_code == 0, res.output
    return root, train_path, test_path


def run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


class TestTrainEval:
    def test_train_then_eval_under_two_minutes(self, fixture_paths):
        root, train_path, test_path = fixture_paths
        ckpt = root / "timed.ckpt"
        t0 = time.perf_counter()
        res = run(
            ["train", "--data", str(train_path), "--out", str(ckpt), "--epochs", "20",
             "--batch", "1000", "--seed", "1"]
        )
        assert res.exit_code == 0, res.output
        assert ckpt.exists()
        hist = json.loads((root / "timed.ckpt.history.json").read_text())
        assert len(hist) == 20
        assert all(np.isfinite(rec["total"]) for rec in hist)

        out = root / "report.csv"
        res = run(
            ["eval", "--model", str(ckpt), "--train", str(train_path),
             "--test", str(test_path), "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        elapsed = time.perf_counter() - t0
        assert elapsed < 120, f"train+eval took {elapsed:.0f}s"
        header = out.read_text().splitlines()[0]
        assert header.startswith("method,metric,seed,mae_in")


class TestProjectContour:
    def test_project_csv(self, fixture_paths):
        root, train_path, _ = fixture_paths
        out = root / "proj.csv"
        res = run(
            ["project", "--model", str(root / "model.ckpt"), "--data", str(train_path),
             "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "id,x,y,score"
        assert len(lines) == 401
        xs = [float(l.split(",")[1]) for l in lines[1:]]
        assert min(xs) >= 0.0 and max(xs) <= 1.0

    def test_contour_purity_across_zoom(self, fixture_paths):
        # full-extent grid vs a zoomed bbox whose cell centers coincide
        # bitwise (dyadic steps); values must be exactly equal
        root, train_path, _ = fixture_paths
        ckpt = root / "model.ckpt"
        out_full = root / "grid_full.json"
        out_zoom = root / "grid_zoom.json"
        res = run(
            ["contour", "--model", str(ckpt), "--data", str(train_path),
             "--out", str(out_full), "--grid", "16", "--tau", "1e9"]
        )
        assert res.exit_code == 0, res.output
        res = run(
            ["contour", "--model", str(ckpt), "--data", str(train_path),
             "--out", str(out_zoom), "--grid", "8", "--bbox", "0,0.5,0,0.5",
             "--tau", "1e9"]
        )
        assert res.exit_code == 0, res.output
        full = np.array(json.loads(out_full.read_text())["values"]).reshape(16, 16)
        zoom = np.array(json.loads(out_zoom.read_text())["values"]).reshape(8, 8)
        assert np.array_equal(zoom, full[:8, :8])

    def test_contour_image_export(self, fixture_paths):
        root, train_path, _ = fixture_paths
        out = root / "grid.json"
        img = root / "grid.ppm"
        res = run(
            ["contour", "--model", str(root / "model.ckpt"), "--data", str(train_path),
             "--out", str(out), "--grid", "20", "--image", str(img)]
        )
        assert res.exit_code == 0, res.output
        assert img.read_bytes().startswith(b"P6\n20 20\n255\n")


class TestBenchCommand:
    def test_bench_writes_rows(self, fixture_paths):
        root, train_path, test_path = fixture_paths
        out = root / "bench.json"
        res = run(
            ["bench", "--data", str(train_path), "--test", str(test_path),
             "--methods", "pca_rbf_silverman,pca_rbf_loocv", "--seeds", "2",
             "--out", str(out)]
        )
        assert res.exit_code == 0, res.output
        rows = json.loads(out.read_text())
        assert len(rows) == 4
        methods = {r["method"] for r in rows}
        assert methods == {"pca_rbf_silverman", "pca_rbf_loocv"}


class TestErrors:
    def test_unknown_flag_usage_error(self):
        res = CliRunner().invoke(main, ["train", "--nonsense"])
        assert res.exit_code == 2

    def test_missing_file_data_error(self, tmp_path):
        res = CliRunner().invoke(
            main,
            ["project", "--model", str(tmp_path / "no.ckpt"), "--data",
             str(tmp_path / "no.bin"), "--out", str(tmp_path / "o.csv")],
        )
        assert res.exit_code == 2  # click validates exists=True paths

    def test_bad_dataset_exit_code(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"\x01\x02garbage")
        res = CliRunner().invoke(
            main,
            ["train", "--data", str(bad), "--out", str(tmp_path / "m.ckpt")],
        )
        assert res.exit_code == 3
        assert "error[" in res.output or res.exit_code == 3

    def test_dimension_mismatch_exit_code(self, fixture_paths, tmp_path):
        root, train_path, _ = fixture_paths
        other, _ = synthetic_task(n_train=30, n_test=10, d=5, seed=0)
        other_path = tmp_path / "other.bin"
        save_dataset(other, other_path)
        res = CliRunner().invoke(
            main,
            ["project", "--model", str(root / "model.ckpt"), "--data",
             str(other_path), "--out", str(tmp_path / "p.csv")],
        )
        assert res.exit_code == 3

    def test_defaults_match_documented_values(self):
        train_cmd = main.commands["train"]
        defaults = {p.name: p.default for p in train_cmd.params}
        assert defaults["epochs"] == 20
        assert defaults["batch"] == 1000
        assert defaults["lr"] == 0.002
        assert defaults["lambda_"] == 0.125
        assert defaults["w1"] == 1.0
        assert defaults["w2"] == 0.3
        assert defaults["mu"] == 2.0
        assert defaults["k"] == 1.0
