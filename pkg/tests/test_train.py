import numpy as np
import pytest
import torch

from s3mnet.config import FullConfig
from s3mnet.dataio import decode_disparity_16bit, load_manifest
from s3mnet.errors import ConfigError, DataError
from s3mnet.metrics import MetricsReport
from s3mnet.synthgen import DatasetConfig, SceneConfig, generate_dataset
from s3mnet.training import (
    SplitDataset,
    compute_losses,
    evaluate,
    evaluate_predictions,
    infer,
    load_checkpoint,
    model_config_from_train,
    set_determinism,
    train,
    _batch_from_samples,
)
from s3mnet.model import S3MNet


def tiny_train_config(seed=0, iterations=10, **kwargs):
    config = FullConfig()
    config.train.crop_height = 32
    config.train.crop_width = 64
    config.train.max_disparity = 16
    config.train.gru_iters = 2
    config.train.iterations = iterations
    config.train.seed = seed
    config.train.checkpoint_every = 0
    for key, value in kwargs.items():
        setattr(config.train, key, value)
    return config


class TestTrainLoop:
    def test_identical_seeds_identical_losses(self, tiny_dataset, tmp_path):
        logs = []
        for name in ("a", "b"):
            result = train(tiny_train_config(seed=3), tiny_dataset, tmp_path / name)
            logs.append(result.log_path.read_text())
        assert logs[0] == logs[1]
        assert len(logs[0].strip().splitlines()) == 10

    def test_different_seeds_differ(self, tiny_dataset, tmp_path):
        a = train(tiny_train_config(seed=1, iterations=3), tiny_dataset, tmp_path / "a")
        b = train(tiny_train_config(seed=2, iterations=3), tiny_dataset, tmp_path / "b")
        assert a.log_path.read_text() != b.log_path.read_text()

    def test_log_decomposition(self, tiny_dataset, tmp_path):
        result = train(tiny_train_config(iterations=5), tiny_dataset, tmp_path)
        for line in result.log_path.read_text().strip().splitlines():
            step, l_ss, l_sm, total = [float(x) for x in line.split(",")]
            assert total == pytest.approx(l_ss + l_sm, abs=1e-6)

    def test_resume_reproduces_trajectory(self, tiny_dataset, tmp_path):
        full = train(
            tiny_train_config(iterations=8, checkpoint_every=4),
            tiny_dataset, tmp_path / "full",
        )
        half_dir = tmp_path / "full"
        resumed = train(
            tiny_train_config(iterations=8, checkpoint_every=0),
            tiny_dataset, tmp_path / "resumed",
            resume_from=half_dir / "checkpoint_000004.pt",
        )
        full_lines = full.log_path.read_text().strip().splitlines()
        resumed_lines = resumed.log_path.read_text().strip().splitlines()
        assert resumed_lines == full_lines[4:]

    def test_empty_dataset_raises(self, tmp_path):
        generate_dataset(
            DatasetConfig(
                scene=SceneConfig(width=64, height=32, layer_count=1,
                                  disparity_range=(4, 8), background_disparity=2,
                                  class_palette_size=3, seed=0),
                n_samples=1, val_fraction=1.0,
            ),
            tmp_path,
        )
        with pytest.raises(DataError):
            train(tiny_train_config(iterations=1), tmp_path, tmp_path / "out")

    def test_crop_divisibility_enforced(self, tiny_dataset, tmp_path):
        config = tiny_train_config()
        config.train.crop_height = 30
        with pytest.raises(ConfigError):
            train(config, tiny_dataset, tmp_path)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_single_step_decreases_fixed_batch_loss(self, tiny_dataset, seed):
        config = tiny_train_config(seed=seed)
        dataset = SplitDataset(tiny_dataset, "train")
        set_determinism(seed, True)
        model = S3MNet(model_config_from_train(config.train, dataset.manifest.class_count))
        model.train()
        opt = torch.optim.AdamW(model.parameters(), lr=1e-5, eps=1e-8, weight_decay=1e-5)
        rng = np.random.default_rng(seed)
        batch = _batch_from_samples(dataset, config.train, rng)
        left, right, disp, valid, labels = batch

        def loss_on_batch():
            out = model(left, right)
            return compute_losses(out, disp, valid, labels, config.train.loss,
                                  dataset.manifest.class_count)[2]

        before = loss_on_batch()
        opt.zero_grad()
        before.backward()
        opt.step()
        after = loss_on_batch()
        assert after.item() < before.item()


class TestEvaluate:
    def test_perfect_oracle_stub(self, tiny_dataset):
        report = evaluate_predictions(
            lambda s: (s.disparity_gt, s.labels_gt), tiny_dataset, "train"
        )
        assert report.epe == 0.0 and report.pep_1 == 0.0 and report.pep_3 == 0.0
        assert report.m_iou == pytest.approx(1.0)
        assert report.acc == pytest.approx(1.0)

    def test_checkpoint_round_trip_evaluation(self, tiny_dataset, tmp_path):
        result = train(tiny_train_config(iterations=3), tiny_dataset, tmp_path)
        a = evaluate(result.checkpoint_path, tiny_dataset, "train")
        b = evaluate(result.checkpoint_path, tiny_dataset, "train")
        assert a == b
        # re-saving the payload and evaluating again stays bit-identical
        payload = load_checkpoint(result.checkpoint_path)
        torch.save(payload, tmp_path / "copy.pt")
        c = evaluate(tmp_path / "copy.pt", tiny_dataset, "train")
        assert a == c

    def test_eval_on_val_split(self, tiny_dataset, tmp_path):
        result = train(tiny_train_config(iterations=2), tiny_dataset, tmp_path)
        report = evaluate(result.checkpoint_path, tiny_dataset, "val")
        assert isinstance(report, MetricsReport)

    def test_missing_split(self, tiny_dataset, tmp_path):
        result = train(tiny_train_config(iterations=1), tiny_dataset, tmp_path)
        with pytest.raises(DataError):
            evaluate(result.checkpoint_path, tiny_dataset, "test")

    def test_non_divisible_resolution_padded(self, tmp_path):
        scene = SceneConfig(width=76, height=36, layer_count=1,
                            disparity_range=(4, 8), background_disparity=2,
                            class_palette_size=3, seed=5)
        generate_dataset(DatasetConfig(scene=scene, n_samples=2), tmp_path / "data")
        config = tiny_train_config(iterations=2)
        result = train(config, tmp_path / "data", tmp_path / "out")
        report = evaluate(result.checkpoint_path, tmp_path / "data", "train")
        assert np.isfinite(report.epe)


class TestInfer:
    def test_outputs_round_trip(self, tiny_dataset, tmp_path):
        result = train(tiny_train_config(iterations=2), tiny_dataset, tmp_path / "run")
        manifest = load_manifest(tiny_dataset)
        sid = manifest.splits["train"][0]
        left = tiny_dataset / sid / "left.png"
        right = tiny_dataset / sid / "right.png"
        disp_path, labels_path = infer(result.checkpoint_path, left, right, tmp_path / "o1")
        from PIL import Image
        raw = np.asarray(Image.open(disp_path)).astype(np.uint16)
        disparity, valid = decode_disparity_16bit(raw)
        assert disparity.shape == (32, 64)
        assert disparity.min() >= 0
        labels = np.asarray(Image.open(labels_path))
        assert labels.shape == (32, 64)
        assert labels.max() < manifest.class_count
        # determinism: a second run produces identical bytes
        infer(result.checkpoint_path, left, right, tmp_path / "o2")
        assert (tmp_path / "o1" / "disp.png").read_bytes() == (tmp_path / "o2" / "disp.png").read_bytes()
        assert (tmp_path / "o1" / "labels.png").read_bytes() == (tmp_path / "o2" / "labels.png").read_bytes()

    def test_size_mismatch(self, tiny_dataset, tmp_path):
        from s3mnet.errors import ConsistencyError
        result = train(tiny_train_config(iterations=1), tiny_dataset, tmp_path / "run")
        manifest = load_manifest(tiny_dataset)
        a, b = manifest.splits["train"][:2]
        from PIL import Image
        img = Image.open(tiny_dataset / a / "left.png").resize((50, 30))
        img.save(tmp_path / "small.png")
        with pytest.raises(ConsistencyError):
            infer(result.checkpoint_path, tmp_path / "small.png",
                  tiny_dataset / b / "right.png", tmp_path / "o")
