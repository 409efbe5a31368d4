import hashlib
import io
import json
import random
import subprocess
import sys

import numpy as np
import pytest

from histolime.cli import main
from histolime.imaging import Raster, read_image, write_image
from histolime.lime.segmentation import segment
from histolime.synthetic import make_corpus, two_region_image


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main([str(a) for a in argv], out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def toy_model(tmp_path):
    def make(side=32, **toy):
        path = tmp_path / f"toy{side}.json"
        path.write_text(json.dumps({"name": "toy", "input_side": side,
                                    "backend": {"toy": {"channel": "R", "tau": 0.5, "s": 10, **toy}}}))
        return path
    return make


@pytest.fixture
def flat_corpus(tmp_path):
    def make(n_normal, n_oscc, root_name="data"):
        root = tmp_path / root_name
        for label, n in (("Normal", n_normal), ("OSCC", n_oscc)):
            (root / label).mkdir(parents=True, exist_ok=True)
            for i in range(n):
                write_image(Raster(np.full((4, 4, 3), i % 256, dtype=np.uint8)), root / label / f"{i}.png")
        return root
    return make


class TestSplit:
    def test_hundred_images_default_ratios(self, tmp_path, flat_corpus):
        # 60 + 40: per-class cuts give 42/9/9 and 28/6/6
        root = flat_corpus(60, 40)
        code, out, _ = run("split", "--dataset", root, "--out", tmp_path / "o", "--json")
        assert code == 0
        counts = json.loads(out)["counts"]
        assert [sum(counts[p].values()) for p in ("train", "test", "validation")] == [70, 15, 15]

    def test_same_seed_same_hash(self, tmp_path, flat_corpus):
        root = flat_corpus(7, 9)
        assert run("split", "--dataset", root, "--out", tmp_path / "a", "--seed", 3)[0] == 0
        assert run("split", "--dataset", root, "--out", tmp_path / "b", "--seed", 3)[0] == 0
        assert _sha(tmp_path / "a" / "manifest.json") == _sha(tmp_path / "b" / "manifest.json")

    def test_missing_oscc(self, tmp_path, flat_corpus):
        root = flat_corpus(3, 0)
        (root / "OSCC").rmdir()
        code, out, err = run("split", "--dataset", root, "--out", tmp_path / "o")
        assert code == 2
        assert "OSCC" in err and str(root) in err
        assert out == ""

    def test_refuses_overwrite_without_force(self, tmp_path, flat_corpus):
        root = flat_corpus(3, 3)
        out_dir = tmp_path / "o"
        assert run("split", "--dataset", root, "--out", out_dir)[0] == 0
        code, _, err = run("split", "--dataset", root, "--out", out_dir, "--seed", 1)
        assert code == 2 and "--force" in err
        assert run("split", "--dataset", root, "--out", out_dir, "--seed", 1, "--force")[0] == 0

    def test_bad_ratios_exit_2(self, tmp_path, flat_corpus):
        root = flat_corpus(3, 3)
        assert run("split", "--dataset", root, "--out", tmp_path, "--ratios", "0.5,0.4")[0] == 2

    def test_unknown_command(self):
        assert run("train")[0] == 2


class TestEvaluate:
    def test_engineered_four_images(self, tmp_path, toy_model):
        root = tmp_path / "four"
        for name, label, red in (("a", "OSCC", 200), ("b", "Normal", 50), ("c", "Normal", 200), ("d", "OSCC", 50)):
            (root / label).mkdir(parents=True, exist_ok=True)
            write_image(Raster(np.full((32, 32, 3), (red, 30, 30), dtype=np.uint8)), root / label / f"{name}.png")
        assert run("split", "--dataset", root, "--out", tmp_path / "s", "--ratios", "0,1,0")[0] == 0
        code, out, _ = run("evaluate", "--dataset", root, "--manifest", tmp_path / "s" / "manifest.json",
                           "--model", toy_model(), "--partition", "test", "--out", tmp_path / "e")
        assert code == 0
        assert "accuracy   0.5000" in out
        assert "f1         0.5000" in out
        doc = json.loads((tmp_path / "e" / "report.json").read_text())
        assert doc["matrix"] == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}

    def test_all_oscc(self, tmp_path, toy_model):
        root = tmp_path / "all"
        (root / "Normal").mkdir(parents=True)
        (root / "OSCC").mkdir()
        for i in range(3):
            write_image(Raster(np.full((32, 32, 3), (220, 0, 0), dtype=np.uint8)), root / "OSCC" / f"{i}.png")
        run("split", "--dataset", root, "--out", tmp_path / "s", "--ratios", "0,1,0")
        code, out, err = run("evaluate", "--dataset", root, "--manifest", tmp_path / "s" / "manifest.json",
                             "--model", toy_model(), "--out", tmp_path / "e", "--json")
        assert code == 0
        rep = json.loads(out)["report"]
        assert rep["precision"] == 1.0 and rep["matrix"]["fn"] == 0
        assert "Normal class directory is empty" in err

    def test_replay_reference_counts(self, tmp_path):
        pairs = [(1, 1)] * 410 + [(0, 0)] * 356 + [(1, 0)] * 4 + [(0, 1)] * 9
        random.Random(0).shuffle(pairs)
        csv_path = tmp_path / "preds.csv"
        csv_path.write_text("id,label,prediction\n" + "".join(f"img{i},{y},{p}\n" for i, (p, y) in enumerate(pairs)))
        code, out, _ = run("evaluate", "--predictions", csv_path, "--name", "model-a", "--out", tmp_path / "r",
                           "--json")
        assert code == 0
        rep = json.loads(out)["report"]
        assert rep["matrix"] == {"tp": 410, "tn": 356, "fp": 4, "fn": 9}
        for key, ref in (("accuracy", 0.9833), ("precision", 0.9903), ("recall", 0.9782), ("f1", 0.9844)):
            assert abs(rep[key] - ref) <= 0.0005

    def test_replay_probabilities_and_na(self, tmp_path):
        csv_path = tmp_path / "p.csv"
        csv_path.write_text("id,label,p_oscc\na,0,0.1\nb,0,0.5\nc,1,0.2\n")
        code, out, _ = run("evaluate", "--predictions", csv_path, "--out", tmp_path / "r")
        assert code == 0
        assert "precision  n/a" in out and "tp 0  tn 2  fp 0  fn 1" in out

    def test_backend_failure_exit_3(self, tmp_path, flat_corpus):
        root = flat_corpus(2, 2)
        run("split", "--dataset", root, "--out", tmp_path / "s", "--ratios", "0,1,0")
        model = tmp_path / "ext.json"
        model.write_text(json.dumps({"name": "x", "input_side": 4,
                                     "backend": {"external": [sys.executable, "-c", "pass"]}}))
        code, _, err = run("evaluate", "--dataset", root, "--manifest", tmp_path / "s" / "manifest.json",
                           "--model", model, "--out", tmp_path / "e")
        assert code == 3 and "error:" in err

    def test_missing_inputs(self, tmp_path):
        assert run("evaluate", "--out", tmp_path)[0] == 2


class TestExplain:
    def _red_image(self, tmp_path):
        img, _ = two_region_image(np.random.default_rng(4))
        path = tmp_path / "red.png"
        write_image(img, path)
        return path, img

    def test_top_segment_is_red(self, tmp_path, toy_model):
        path, img = self._red_image(tmp_path)
        code, out, _ = run("explain", path, "--model", toy_model(64), "--segments", 6, "--baseline", "rgb:0,0,0",
                           "--target", "1", "--out", tmp_path / "x", "--json")
        assert code == 0
        doc = json.loads(out)
        labels = segment(img, 6).labels
        red = [img.pixels[..., 0][labels == j].mean() for j in range(labels.max() + 1)]
        assert doc["top_segments"][0]["segment"] == int(np.argmax(red))
        assert doc["top_segments"][0]["weight"] > 0
        assert (tmp_path / "x" / "red.explanation.json").exists()
        assert read_image(tmp_path / "x" / "red.overlay.png").width == 64

    def test_minimal(self, tmp_path, toy_model):
        path, _ = self._red_image(tmp_path)
        code, out, _ = run("explain", path, "--model", toy_model(64), "--n-samples", 2, "--segments", 1,
                           "--out", tmp_path / "x")
        assert code == 0
        doc = json.loads((tmp_path / "x" / "red.explanation.json").read_text())
        assert doc["k"] == 1 and len(doc["segment_weights"]) == 1
        assert "segment    0" in out

    def test_rerun_same_hash(self, tmp_path, toy_model):
        path, _ = self._red_image(tmp_path)
        for d in ("a", "b"):
            assert run("explain", path, "--model", toy_model(64), "--n-samples", 300, "--seed", 9,
                       "--mode", "signed", "--segments-png", "--out", tmp_path / d)[0] == 0
        for name in ("red.explanation.json", "red.overlay.png", "red.segments.png"):
            assert _sha(tmp_path / "a" / name) == _sha(tmp_path / "b" / name)

    def test_dataset_id_and_manifest(self, tmp_path, toy_model):
        root = tmp_path / "corpus"
        make_corpus(root, per_class=3)
        run("split", "--dataset", root, "--out", tmp_path / "s")
        code, _, _ = run("explain", "train/OSCC/oscc_000.png", "--dataset", root, "--manifest",
                         tmp_path / "s" / "manifest.json", "--model", toy_model(), "--n-samples", 50,
                         "--out", tmp_path / "x")
        assert code == 0
        assert (tmp_path / "x" / "train__OSCC__oscc_000.overlay.png").exists()
        code, _, err = run("explain", "nope.png", "--dataset", root, "--manifest", tmp_path / "s" / "manifest.json",
                           "--model", toy_model(), "--out", tmp_path / "x")
        assert code == 2 and "nope.png" in err

    def test_bad_baseline(self, tmp_path, toy_model):
        path, _ = self._red_image(tmp_path)
        assert run("explain", path, "--model", toy_model(64), "--baseline", "rgb:1,2")[0] == 2


class TestReportAndCurves:
    def test_report_table(self, tmp_path):
        for name, m in (("a", {"tp": 410, "tn": 356, "fp": 4, "fn": 9}), ("b", {"tp": 0, "tn": 3, "fp": 0, "fn": 1})):
            (tmp_path / f"{name}.json").write_text(json.dumps({"model": name, "partition": "test", "threshold": 0.5,
                                                               "matrix": m}))
        code, out, _ = run("report", tmp_path / "a.json", tmp_path / "b.json", "--out", tmp_path / "t")
        assert code == 0
        lines = (tmp_path / "t" / "table.csv").read_text().splitlines()
        assert lines[1].startswith("a,test,0.5,410,356,4,9,0.9903")
        assert lines[2] == "b,test,0.5,0,3,0,1,,0.0000,,0.7500"
        assert "n/a" in out

    def test_report_bad_file(self, tmp_path):
        (tmp_path / "bad.json").write_text("{")
        assert run("report", tmp_path / "bad.json", "--out", tmp_path)[0] == 2

    def test_curves(self, tmp_path):
        log = tmp_path / "log.csv"
        log.write_text("epoch,train_acc,val_acc,train_loss,val_loss\n1,0.6,0.5,0.9,0.8\n2,0.7,0.6,0.7,0.5\n"
                       "3,0.8,0.6,0.5,0.6\n")
        code, out, _ = run("curves", log, "--out", tmp_path / "c", "--json")
        assert code == 0 and json.loads(out)["best_epoch"] == 2
        assert (tmp_path / "c" / "accuracy_curve.png").exists() and (tmp_path / "c" / "loss_curve.png").exists()

    def test_empty_log(self, tmp_path):
        log = tmp_path / "empty.csv"
        log.write_text("")
        code, _, err = run("curves", log, "--out", tmp_path / "c")
        assert code == 2 and "empty" in err

    def test_malformed_log_names_line(self, tmp_path):
        log = tmp_path / "bad.csv"
        log.write_text("1,0.5,0.5,1,1\n2,0.5,0.5,oops,1\n")
        code, _, err = run("curves", log, "--out", tmp_path / "c")
        assert code == 2 and "line 2" in err


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "histolime", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("histolime ")
