"""Tests for the training loop, best-validation selection and resuming"""
import numpy as np
import pandas as pd
import pytest

from common.errors import InvalidArgumentError, TrainingDivergedError
from engine import Tensor
from models import LatentSpec, LossSpec, UNetConfig, build_model, load_model
from training import OptimizerConfig, TrainConfig, TrainingData, train

TINY = UNetConfig(depth=1, base_channels=2)


def toy_data(seed, n=6, r=3):
    rng = np.random.default_rng(seed)
    images = rng.normal(size=(n, 1, 4, 4))
    # foreground where the image is bright, with rater-specific offsets
    offsets = rng.normal(scale=0.3, size=(1, r, 1, 1))
    annotations = (images + offsets > 0).astype(float)
    return TrainingData(images, annotations)


def fresh_model(kind="probunet-ce"):
    return build_model(kind, TINY, LatentSpec(dim=2), LossSpec(m_samples=1, beta=0.1), rng=np.random.default_rng(0))


def test_zero_epochs_returns_initial_params(tmp_path):
    model = fresh_model()
    initial = model.params.to_arrays()
    result = train(model, toy_data(0), toy_data(1), TrainConfig(epochs=0), out_dir=tmp_path)
    for name, value in initial.items():
        np.testing.assert_array_equal(result.model.params[name].data, value)
    assert result.best_epoch is None
    assert (tmp_path / "best.plsk").exists()
    assert len(pd.read_csv(tmp_path / "history.csv")) == 0


def test_training_reduces_loss():
    model = fresh_model()
    cfg = TrainConfig(epochs=10, batch_size=2, seed=3)
    result = train(model, toy_data(0), toy_data(1), cfg, OptimizerConfig(lr=1e-2))
    frame = result.history.to_frame()
    assert list(frame.columns) == ["epoch", "train_loss", "val_loss", "seconds"]
    assert frame["train_loss"].iloc[-1] < frame["train_loss"].iloc[0]


def test_best_validation_parameters_are_kept(tmp_path):
    model = fresh_model()
    result = train(model, toy_data(0), toy_data(1), TrainConfig(epochs=4, batch_size=3), OptimizerConfig(lr=5e-2),
                   out_dir=tmp_path)
    frame = pd.read_csv(tmp_path / "history.csv")
    assert result.best_epoch == int(frame.loc[frame["val_loss"].idxmin(), "epoch"])
    assert result.best_val_loss == pytest.approx(frame["val_loss"].min())
    best, meta = load_model(tmp_path / "best.plsk")
    assert meta["epoch"] == result.best_epoch
    for name in best.params:
        np.testing.assert_array_equal(best.params[name].data, result.model.params[name].data)


def test_resume_replays_next_epoch_exactly(tmp_path):
    straight = train(fresh_model(), toy_data(0), toy_data(1), TrainConfig(epochs=2, batch_size=2, seed=5),
                     out_dir=tmp_path / "a")

    train(fresh_model(), toy_data(0), toy_data(1), TrainConfig(epochs=1, batch_size=2, seed=5),
          out_dir=tmp_path / "b")
    resumed = train(fresh_model(), toy_data(0), toy_data(1), TrainConfig(epochs=2, batch_size=2, seed=5),
                    out_dir=tmp_path / "b", resume=True)

    assert [r["val_loss"] for r in resumed.history.records] == [r["val_loss"] for r in straight.history.records]
    assert [r["train_loss"] for r in resumed.history.records] == [r["train_loss"] for r in straight.history.records]


def test_reruns_are_bit_identical():
    runs = [
        train(fresh_model("mcdo"), toy_data(0), toy_data(1), TrainConfig(epochs=2, batch_size=3, seed=9))
        for _ in range(2)
    ]
    assert runs[0].history.records[-1]["val_loss"] == runs[1].history.records[-1]["val_loss"]


def test_non_finite_loss_aborts_with_diagnostics(monkeypatch):
    model = fresh_model()
    monkeypatch.setattr(model, "loss", lambda *args: Tensor(float("nan")))
    with pytest.raises(TrainingDivergedError) as info:
        train(model, toy_data(0), toy_data(1), TrainConfig(epochs=3))
    assert info.value.epoch == 1
    assert info.value.batch == 0
    assert info.value.loss_kind == "CE"


def test_resume_needs_directory():
    with pytest.raises(InvalidArgumentError):
        train(fresh_model(), toy_data(0), toy_data(1), TrainConfig(epochs=1), resume=True)


def test_default_batch_sizes():
    assert TrainConfig().resolved_batch_size(2) == 8
    assert TrainConfig().resolved_batch_size(3) == 4
    assert TrainConfig(batch_size=5).resolved_batch_size(3) == 5


def test_mismatched_dataset_is_rejected():
    with pytest.raises(InvalidArgumentError):
        TrainingData(np.zeros((2, 1, 4, 4)), np.zeros((3, 2, 4, 4)))
