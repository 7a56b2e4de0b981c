import csv
import hashlib
import io
import json

import numpy as np
import pytest

from micropump_rbf.cli import main
from micropump_rbf.config import RunConfig, config_from_dict, config_to_dict, load_config
from micropump_rbf.errors import ConfigError
from micropump_rbf.pump import DEFAULT_CORRECTIONS
from micropump_rbf.rbf import forward, load_model

SMALL = {
    "grid": {"n_points": 80, "split": [60, 10, 10]},
    "restarts": 3,
    "train": {"weights_bias": {"epochs": 40}, "centers": {"epochs": 40}},
}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cfg = root / "config.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["run", "--config", str(cfg), "--out", str(root / "out")]) == 0
    return cfg, root / "out"


class TestConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.k == 5 and cfg.restarts == 10 and cfg.fixed_angle == 30.0
        assert cfg.grid.n_points == 500 and cfg.corrections == DEFAULT_CORRECTIONS
        assert cfg.train["weights_bias"].lr == 0.01 and cfg.train["centers"].epochs == 500

    def test_round_trip_through_dict(self):
        cfg = config_from_dict(SMALL)
        again = config_from_dict(config_to_dict(cfg))
        assert config_to_dict(again) == config_to_dict(cfg)

    @pytest.mark.parametrize("doc", [
        {"bogus": 1},
        {"plant": {"kappa": 0.5, "colour": 1}},
        {"train": {"adamw": {}}},
        {"train": {"centers": {"momentum": 0.9}}},
        {"seeds": {"plant": 1, "other": 2}},
    ])
    def test_unknown_keys_rejected(self, doc):
        with pytest.raises(ConfigError, match="unknown|keys"):
            config_from_dict(doc)

    @pytest.mark.parametrize("doc", [
        {"k": 0},
        {"k": 600},
        {"cluster_space": "whitened"},
        {"grid": {"split": [10, 10, 10]}},
        {"plant": {"kappa": -1}},
        {"corrections": [[0, 5, 13]]},
        {"train": {"centers": {"lr": 0}}},
        {"fixed_angle": 90},
    ])
    def test_invalid_values_rejected(self, doc):
        with pytest.raises(ConfigError):
            config_from_dict(doc)

    def test_seed_override(self):
        cfg = RunConfig().with_seed(7)
        assert (cfg.seeds.plant, cfg.seeds.data, cfg.seeds.train) == (7, 7, 7)
        assert cfg.plant_model().seed == 7 and cfg.train_config("centers").seed == 7

    def test_invalid_json_reports_line(self, tmp_path):
        (tmp_path / "c.json").write_text('{\n "k": 5,\n oops\n}')
        with pytest.raises(ConfigError, match=":3"):
            load_config(tmp_path / "c.json")


class TestGenerate:
    def test_default_config(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "dataset.csv")))
        assert len(rows) == 500
        assert [sum(r["split"] == s for r in rows) for s in ("train", "val", "test")] == [400, 50, 50]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["seeds"] == {"plant": 0, "data": 0, "train": 0}
        assert manifest["config"]["plant"]["kappa"] == RunConfig().plant.kappa
        assert manifest["sha256"] == digest(tmp_path / "dataset.csv")

    def test_same_seed_same_digest(self, tmp_path, small_config):
        for d in ("a", "b"):
            assert main(["generate", "--config", str(small_config), "--out", str(tmp_path / d)]) == 0
        assert digest(tmp_path / "a/dataset.csv") == digest(tmp_path / "b/dataset.csv")
        assert digest(tmp_path / "a/manifest.json") == digest(tmp_path / "b/manifest.json")

    def test_seed_flag(self, tmp_path, small_config):
        assert main(["generate", "--config", str(small_config), "--seed", "4", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "manifest.json").read_text())["seeds"] == {"plant": 4, "data": 4, "train": 4}

    def test_wider_flow_range(self, tmp_path):
        doc = {"grid": {"flow": [0.1, 10.0], "n_points": 60, "split": [40, 10, 10]}}
        (tmp_path / "c.json").write_text(json.dumps(doc))
        assert main(["generate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == 0
        flows = [float(r["set_flow_mL_min"]) for r in csv.DictReader(open(tmp_path / "dataset.csv"))]
        assert 5.0 < max(flows) <= 10.0

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"grid": {"bogus": 1}}))
        assert main(["generate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_unwritable_out_exits_nonzero(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["generate", "--out", str(blocker / "sub")]) == 1
        assert "error" in capsys.readouterr().err


class TestTrain:
    def test_artifacts(self, small_run):
        _, out = small_run
        for name in ("model_weights.json", "model_centers.json", "clusters.json", "centers.txt",
                     "train_report_weights_bias.json", "train_report_centers.json",
                     "losses_weights_bias.csv", "losses_centers.csv"):
            assert (out / name).exists(), name

    def test_models_share_unsupervised_phase(self, small_run):
        _, out = small_run
        w = json.loads((out / "model_weights.json").read_text())
        c = json.loads((out / "model_centers.json").read_text())
        assert set(w) == set(c)
        for key in ("format_version", "input_dim", "k", "scaler"):
            assert w[key] == c[key]
        assert w["metadata"]["mode"] == "weights_bias" and c["metadata"]["mode"] == "centers"
        assert w["centers"] != c["centers"]
        clusters = json.loads((out / "clusters.json").read_text())
        raw = np.array(clusters["raw_centers"])[:, :4]
        np.testing.assert_allclose(load_model(out / "model_weights.json").raw_centers(), raw, rtol=1e-12)

    def test_center_table_format(self, small_run):
        _, out = small_run
        blocks = (out / "centers.txt").read_text().split("\n\n")
        assert len(blocks) == 2
        for block in blocks:
            rows = block.strip().splitlines()[3:]
            assert len(rows) == 5
            for row in rows:
                values = row.split()[1:]
                assert len(values) == 5
                assert all(len(v.split(".")[1]) == 4 for v in values)

    def test_weights_table_angles_are_cluster_angles(self, small_run):
        _, out = small_run
        clusters = json.loads((out / "clusters.json").read_text())
        model = load_model(out / "model_weights.json")
        assert model.metadata["center_angles"] == [row[4] for row in clusters["raw_centers"]]

    def test_report_and_losses(self, small_run):
        _, out = small_run
        rep = json.loads((out / "train_report_centers.json").read_text())
        assert rep["status"] == "ok" and rep["mode"] == "centers"
        assert len(rep["train_loss"]) == rep["epochs_run"] + 1
        rows = list(csv.reader(open(out / "losses_centers.csv")))
        assert rows[0] == ["epoch", "train_loss", "val_loss"] and len(rows) == rep["epochs_run"] + 2

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        cfg, out = small_run
        assert main(["train", "--config", str(cfg), "--dataset", str(out / "dataset.csv"), "--out", str(tmp_path)]) == 0
        for name in ("model_weights.json", "model_centers.json", "clusters.json", "centers.txt"):
            assert digest(tmp_path / name) == digest(out / name), name

    def test_single_mode_and_k_flag(self, small_run, tmp_path):
        cfg, out = small_run
        args = ["train", "--config", str(cfg), "--dataset", str(out / "dataset.csv"), "--out", str(tmp_path), "--mode", "weights", "--k", "3"]
        assert main(args) == 0
        assert (tmp_path / "model_weights.json").exists() and not (tmp_path / "model_centers.json").exists()
        assert load_model(tmp_path / "model_weights.json").k == 3

    def test_unparseable_dataset(self, tmp_path, small_config, capsys):
        (tmp_path / "d.csv").write_text("nope\n")
        assert main(["train", "--config", str(small_config), "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path)]) == 1

    def test_non_converged_clustering_fails(self, small_run, tmp_path):
        cfg, out = small_run
        doc = dict(SMALL, max_iter=1)
        (tmp_path / "c.json").write_text(json.dumps(doc))
        code = main(["train", "--config", str(tmp_path / "c.json"), "--dataset", str(out / "dataset.csv"), "--out", str(tmp_path)])
        assert code == 1
        assert json.loads((tmp_path / "clusters.json").read_text())["converged"] is False


class TestEvaluate:
    def test_tables(self, small_run):
        _, out = small_run
        rows = list(csv.reader(open(out / "drops.csv")))
        assert rows[0] == ["cluster", "n", "none", "fixed", "weights", "centers"]
        assert len(rows) == 6
        assert sum(int(r[1]) for r in rows[1:]) == 10
        text = (out / "evaluation.txt").read_text()
        assert "Fixed 30 deg" in text
        assert list(csv.reader(open(out / "angles.csv")))[0] == ["cluster", "weights", "centers"]

    def test_fixed_angle_flag(self, small_run, tmp_path):
        cfg, out = small_run
        args = ["evaluate", "--config", str(cfg), "--out", str(tmp_path), "--dataset", str(out / "dataset.csv"),
                "--clusters", str(out / "clusters.json"), "--models", str(out / "model_centers.json"), "--fixed-angle", "25"]
        assert main(args) == 0
        assert "Fixed 25 deg" in (tmp_path / "evaluation.txt").read_text()
        assert list(csv.reader(open(tmp_path / "drops.csv")))[0] == ["cluster", "n", "none", "fixed", "centers"]

    def test_model_order_is_weights_then_centers(self, small_run, tmp_path):
        cfg, out = small_run
        args = ["evaluate", "--config", str(cfg), "--out", str(tmp_path), "--dataset", str(out / "dataset.csv"),
                "--clusters", str(out / "clusters.json"), "--models", str(out / "model_centers.json"), str(out / "model_weights.json")]
        assert main(args) == 0
        assert (tmp_path / "drops.csv").read_bytes() == (out / "drops.csv").read_bytes()

    def test_empty_cluster_still_exits_zero(self, small_run, tmp_path):
        cfg, out = small_run
        clusters = json.loads((out / "clusters.json").read_text())
        clusters["centers"].append([1e6] * 5)
        (tmp_path / "clusters.json").write_text(json.dumps(clusters))
        args = ["evaluate", "--config", str(cfg), "--out", str(tmp_path), "--dataset", str(out / "dataset.csv"),
                "--clusters", str(tmp_path / "clusters.json"), "--models", str(out / "model_weights.json")]
        assert main(args) == 0
        assert "n/a" in (tmp_path / "evaluation.txt").read_text()

    def test_scaler_mismatch_fails(self, small_run, tmp_path, capsys):
        cfg, out = small_run
        assert main(["generate", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path)]) == 0
        args = ["evaluate", "--config", str(cfg), "--out", str(tmp_path), "--dataset", str(tmp_path / "dataset.csv"),
                "--clusters", str(out / "clusters.json"), "--models", str(out / "model_weights.json")]
        assert main(args) == 1
        assert "scaler" in capsys.readouterr().err


class TestPredict:
    def test_features_and_period(self, small_run, capsys):
        _, out = small_run
        model = load_model(out / "model_centers.json")
        x = model.raw_centers()[0]
        assert main(["predict", "--model", str(out / "model_centers.json"), "--features", *(repr(float(v)) for v in x), "--period", "10"]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["angle_deg", "t_op_s"]
        angle, t_op = map(float, rows[1])
        assert angle == pytest.approx(forward(model, x), rel=1e-14)
        assert 5.0 <= angle <= 45.0
        assert t_op == pytest.approx(10 * angle / 360, rel=1e-15)

    def test_batch_preserves_order(self, small_run, tmp_path, capsys):
        _, out = small_run
        assert main(["predict", "--model", str(out / "model_weights.json"), "--csv", str(out / "dataset.csv")]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["angle_deg"] and len(rows) == 81
        model = load_model(out / "model_weights.json")
        data = list(csv.DictReader(open(out / "dataset.csv")))
        for r, d in zip(rows[1:4], data[:3]):
            x = [float(d[c]) for c in ("mu_cP", "back_pressure_MPa", "omega_rev_min", "valve_flow_mL_min")]
            assert float(r[0]) == pytest.approx(forward(model, x), rel=1e-14)

    def test_malformed_rows_reported_by_line(self, small_run, tmp_path, capsys):
        _, out = small_run
        (tmp_path / "in.csv").write_text(
            "mu_cP,back_pressure_MPa,omega_rev_min,valve_flow_mL_min\n1.0,20,100,1.5\n1.0,x,100,1.5\n0.5,10,50\n"
        )
        assert main(["predict", "--model", str(out / "model_weights.json"), "--csv", str(tmp_path / "in.csv")]) == 1
        err = capsys.readouterr().err
        assert "in.csv:3" in err and "in.csv:4" in err

    def test_bad_model_file(self, tmp_path, capsys):
        (tmp_path / "m.json").write_text("{}")
        assert main(["predict", "--model", str(tmp_path / "m.json"), "--features", "1", "2", "3", "4"]) == 1
        assert "format_version" in capsys.readouterr().err


class TestCalibrate:
    def test_noiseless_deltas_zero(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"calibration": {"noise_sd": 0.0}}))
        assert main(["calibrate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "calibration.json").read_text())
        assert len(doc["bands"]) == 8
        assert all(b["dF"] == 0 and b["dZ"] == 0 for b in doc["bands"])

    def test_default_noise_within_one(self, tmp_path):
        assert main(["calibrate", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "calibration.json").read_text())
        assert [b["band_MPa"] for b in doc["bands"]] == [[r[0], r[1]] for r in DEFAULT_CORRECTIONS.to_rows()]
        assert all(b["dF"] == 0 and abs(b["dZ"]) <= 1 for b in doc["bands"])
        assert "dZ" in (tmp_path / "calibration.txt").read_text()


def test_report_collects_tables(small_run, capsys):
    _, out = small_run
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "Centers after supervised learning" in text and "pressure drop per cluster" in text


def test_report_on_empty_dir_fails(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 1


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["train", "--mode", "everything"])
    assert info.value.code == 2
