"""End-to-end command-line workflows on tiny synthetic data."""

import json
import shutil
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from sctransnet.cli import main
from sctransnet.config import (RunConfig, apply_overrides, load_run_config,
                               run_config_from_dict, run_config_to_dict,
                               save_run_config)
from sctransnet.errors import ConfigurationError
from sctransnet.metrics import read_metrics_file

TINY_MODEL = {"channels": [4, 8, 12, 16], "bottleneck_channels": 24,
              "num_sctb": 2, "dtype": "float32"}


def make_config(tmp_path, root, **train_overrides):
    train = {"epochs": 2, "batch": 2, "crop": 32, "seed": 3,
             "checkpoint_every": 1, "lr0": 1e-3}
    train.update(train_overrides)
    cfg = {"model": TINY_MODEL, "train": train,
           "data": {"root": str(root), "train_split": "train_toy.txt",
                    "test_split": "test_toy.txt"},
           "out": str(tmp_path / "run")}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    assert main(["synth", "--out", str(root), "--seed", "4", "--count", "6",
                 "--size", "32"]) == 0
    # rename splits to a known name
    idx = root / "img_idx"
    (idx / "train_synth.txt").rename(idx / "train_toy.txt")
    (idx / "test_synth.txt").rename(idx / "test_toy.txt")
    return root


class TestSynthCommand:
    def test_same_seed_identical_trees(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["synth", "--out", str(d), "--seed", "7",
                         "--count", "3", "--size", "32"]) == 0
        for rel in sorted(p.relative_to(a) for p in a.rglob("*")
                          if p.is_file()):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()


class TestTrainCommand:
    def test_toy_training_writes_checkpoints_and_logs(self, tmp_path, dataset):
        cfg_path = make_config(tmp_path, dataset)
        assert main(["train", "--config", str(cfg_path)]) == 0
        run = tmp_path / "run"
        assert (run / "final.ckpt").exists()
        assert (run / "best.ckpt").exists()
        records = [json.loads(line) for line in
                   (run / "train_log.jsonl").read_text().splitlines()]
        assert records
        assert {"epoch", "step", "lr", "loss"} <= set(records[0])

    def test_same_seed_reproduces_log_bitwise(self, tmp_path, dataset):
        logs = []
        for sub in ("r1", "r2"):
            cfg_path = make_config(tmp_path / sub if False else tmp_path,
                                   dataset)
            out = tmp_path / sub
            assert main(["train", "--config", str(cfg_path),
                         "--out", str(out)]) == 0
            logs.append((out / "train_log.jsonl").read_text())
        assert logs[0] == logs[1]

    def test_missing_dataset_exits_nonzero_without_outputs(self, tmp_path):
        cfg_path = make_config(tmp_path, tmp_path / "nowhere")
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path)]) == 2
        assert not (out / "final.ckpt").exists()

    def test_invalid_config_field_message(self, tmp_path, dataset, capsys):
        cfg_path = make_config(tmp_path, dataset)
        raw = json.loads(cfg_path.read_text())
        raw["train"]["batch"] = 0
        cfg_path.write_text(json.dumps(raw))
        assert main(["train", "--config", str(cfg_path)]) == 2


class TestEvalCommand:
    def test_ground_truth_predictions_score_perfectly(self, tmp_path, dataset):
        cfg_path = make_config(tmp_path, dataset)
        out = tmp_path / "evalout"
        assert main(["eval", "--config", str(cfg_path),
                     "--pred-dir", str(dataset / "masks"),
                     "--out", str(out)]) == 0
        results = read_metrics_file(out / "metrics.dat")
        for key in ("IoU", "nIoU", "F", "Pd"):
            assert results[key] == 1.0
        assert results["Fa"] == 0.0
        assert results["AUC_fa0.5e-6"] == 1.0
        assert (out / "roc.dat").exists()
        assert (out / "report.txt").read_text().startswith("metric")

    def test_report_file_parses_back(self, tmp_path, dataset):
        cfg_path = make_config(tmp_path, dataset)
        out = tmp_path / "evalout2"
        main(["eval", "--config", str(cfg_path),
              "--pred-dir", str(dataset / "masks"), "--out", str(out)])
        results = read_metrics_file(out / "metrics.dat")
        assert set(results) >= {"IoU", "nIoU", "F", "Pd", "Fa"}

    def test_eval_checkpoint_and_sharding(self, tmp_path, dataset):
        cfg_path = make_config(tmp_path, dataset)
        assert main(["train", "--config", str(cfg_path)]) == 0
        ckpt = tmp_path / "run" / "final.ckpt"
        outs = []
        for shards, sub in ((1, "single"), (3, "sharded")):
            out = tmp_path / sub
            assert main(["eval", "--config", str(cfg_path),
                         "--checkpoint", str(ckpt), "--out", str(out),
                         "--shards", str(shards)]) == 0
            outs.append((out / "metrics.dat").read_text())
        assert outs[0] == outs[1]

    def test_checkpoint_config_mismatch_explicit_error(self, tmp_path,
                                                       dataset):
        cfg_path = make_config(tmp_path, dataset)
        assert main(["train", "--config", str(cfg_path)]) == 0
        ckpt = tmp_path / "run" / "final.ckpt"
        assert main(["eval", "--config", str(cfg_path),
                     "--set", "model.gslc=false",
                     "--checkpoint", str(ckpt),
                     "--out", str(tmp_path / "bad")]) == 2


class TestInferCommand:
    def test_outputs_match_extents_and_are_deterministic(self, tmp_path,
                                                         dataset):
        cfg_path = make_config(tmp_path, dataset)
        assert main(["train", "--config", str(cfg_path)]) == 0
        ckpt = tmp_path / "run" / "final.ckpt"
        # off-grid extents exercise pad + crop-back
        img = (np.random.default_rng(0).random((37, 53)) * 255).astype(np.uint8)
        src = tmp_path / "scene.png"
        Image.fromarray(img, mode="L").save(src)
        out1, out2 = tmp_path / "inf1", tmp_path / "inf2"
        for out in (out1, out2):
            assert main(["infer", "--checkpoint", str(ckpt),
                         "--out", str(out), str(src)]) == 0
        with Image.open(out1 / "scene_saliency.png") as im:
            sal = np.asarray(im)
        assert sal.shape == (37, 53)
        assert sal.dtype == np.uint8
        with Image.open(out1 / "scene_mask.png") as im:
            mask = np.asarray(im)
        assert set(np.unique(mask)).issubset({0, 255})
        assert (out1 / "scene_saliency.png").read_bytes() == \
               (out2 / "scene_saliency.png").read_bytes()

    def test_unreadable_image_reports_and_continues(self, tmp_path, dataset):
        cfg_path = make_config(tmp_path, dataset)
        assert main(["train", "--config", str(cfg_path)]) == 0
        ckpt = tmp_path / "run" / "final.ckpt"
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"no png here")
        good = tmp_path / "fine.png"
        Image.fromarray(np.zeros((32, 32), np.uint8), mode="L").save(good)
        out = tmp_path / "inf"
        assert main(["infer", "--checkpoint", str(ckpt), "--out", str(out),
                     str(bad), str(good)]) == 1
        assert (out / "fine_saliency.png").exists()


class TestAnalyzeCommand:
    def test_default_budget_report(self, capsys):
        assert main(["analyze"]) == 0
        out = capsys.readouterr().out
        assert "11.1688" in out
        assert "18.3665" in out

    def test_ablation_reports_fewer_params(self, capsys):
        main(["analyze"])
        base = capsys.readouterr().out
        main(["analyze", "--set", "model.spatial_embedding=false"])
        ablated = capsys.readouterr().out

        def total(text):
            return int([l for l in text.splitlines()
                        if l.startswith("total")][0].split()[1])

        assert total(ablated) < total(base)


class TestConfigPlumbing:
    def test_round_trip_lossless(self, tmp_path):
        cfg = run_config_from_dict(
            {"model": TINY_MODEL, "train": {"epochs": 5, "lr0": 0.00025},
             "out": "x"})
        path = tmp_path / "c.json"
        save_run_config(cfg, path)
        back = load_run_config(path)
        assert run_config_to_dict(back) == run_config_to_dict(cfg)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknow|unknown"):
            run_config_from_dict({"model": {"chanels": [4, 8, 12, 16]}})

    def test_overrides_win(self):
        cfg = apply_overrides(RunConfig(), ["train.epochs=7",
                                            "model.gslc=false"])
        assert cfg.train.epochs == 7
        assert cfg.model.gslc is False

    def test_bad_override_key(self):
        with pytest.raises(ConfigurationError):
            apply_overrides(RunConfig(), ["trainn.epochs=7"])
