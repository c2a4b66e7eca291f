import json

import numpy as np
import pytest
import torch

from mathrec.data import load_manifest
from mathrec.errors import (
    ConfigError,
    CorruptCheckpoint,
    DataExhausted,
    NonFiniteLoss,
    StepOutOfRange,
    VocabularyMismatch,
)
from mathrec.latex import BOS, EOS, PAD
from mathrec.train import (
    FormulaDataset,
    TrainConfig,
    epoch_batches,
    load_checkpoint,
    load_train_config,
    lr_schedule,
    save_checkpoint,
    train_loop,
)
from mathrec.train import loop as loop_module

from conftest import TINY_MODEL


def config(tiny_data, out, **overrides) -> TrainConfig:
    base = dict(train_manifest=str(tiny_data), output_dir=str(out), total_iterations=6,
                batch_size=4, checkpoint_interval=3, model=dict(TINY_MODEL), init_lr=1e-3,
                warmup_lr=1e-4)
    base.update(overrides)
    return TrainConfig(**base)


def read_log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


# -- schedule -----------------------------------------------------------------

def test_schedule_examples():
    cfg = TrainConfig("m", "o", total_iterations=1000, warmup_iterations=100)
    assert lr_schedule(0, cfg) == pytest.approx(1e-5, abs=1e-12)
    assert lr_schedule(100, cfg) == pytest.approx(1e-4, abs=1e-12)
    assert lr_schedule(1000, cfg) == pytest.approx(1e-8, abs=1e-12)
    assert lr_schedule(50, cfg) == pytest.approx(5.5e-5)
    assert lr_schedule(550, cfg) == pytest.approx(1e-8 + 0.5 * (1e-4 - 1e-8))
    for step in (-1, 1001):
        with pytest.raises(StepOutOfRange):
            lr_schedule(step, cfg)


def test_warmup_default_and_zero_warmup():
    assert TrainConfig("m", "o", total_iterations=2000).warmup_iterations == 40
    cfg = TrainConfig("m", "o", total_iterations=10, warmup_iterations=0)
    assert lr_schedule(0, cfg) == 1e-4
    zero = TrainConfig("m", "o", total_iterations=0)
    assert zero.warmup_iterations == 0 and lr_schedule(0, zero) == 1e-4


@pytest.mark.parametrize("bad", [
    {"total_iterations": 10, "warmup_iterations": 10},
    {"min_lr": 1e-3},
    {"warmup_lr": 1e-3},
    {"batch_size": 0},
    {"loss_weights": {"lm": 1.0, "len": 0.5}},
    {"augment": {"kinds": {"hail": {}}}},
])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        TrainConfig("m", "o", **bad)


def test_load_config_overrides_and_errors(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("train_manifest: data/m.jsonl\noutput_dir: run\nmodel:\n  feature_dim: 64\n")
    cfg = load_train_config(path, ["model.feature_dim=32", "batch_size=2", "augment.seed=4"])
    assert cfg.model["feature_dim"] == 32 and cfg.batch_size == 2 and cfg.augment == {"seed": 4}
    assert cfg.train_manifest == str(tmp_path / "data" / "m.jsonl")
    path.write_text("train_manifest: m\noutput_dir: o\nbatch_size: lots\n")
    with pytest.raises(ConfigError, match="batch_size"):
        load_train_config(path)
    path.write_text("train_manifest: m\noutput_dir: o\nlearning_rate: 1\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        load_train_config(path)
    path.write_text("output_dir: o\n")
    with pytest.raises(ConfigError, match="train_manifest"):
        load_train_config(path)
    with pytest.raises(ConfigError):
        load_train_config(path, ["no_equals_sign"])


# -- batching -----------------------------------------------------------------

def test_epoch_batches():
    lengths = [5, 1, 9, 3, 7, 2, 8, 4, 6, 10]
    a = epoch_batches(lengths, 3, seed=1, epoch=0)
    assert a == epoch_batches(lengths, 3, seed=1, epoch=0)
    assert a != epoch_batches(lengths, 3, seed=1, epoch=1)
    flat = [i for b in a for i in b]
    assert len(a) == 3 and all(len(b) == 3 for b in a) and len(set(flat)) == 9
    for b in a:
        assert [lengths[i] for i in b] == sorted(lengths[i] for i in b)
    with pytest.raises(DataExhausted):
        epoch_batches(lengths, 11, seed=0, epoch=0)


def test_collate_builds_shifted_targets(tiny_data):
    manifest = load_manifest(tiny_data)
    vocab = manifest.vocabulary()
    ds = FormulaDataset(manifest, vocab, TINY_MODEL["canvas"], 48)
    batch = ds.collate([0, 1, 2])
    n = max(len(ds.token_ids[i]) for i in (0, 1, 2)) + 1
    assert batch.images.shape == (3, 3, 32, 128)
    assert batch.input_ids.shape == batch.targets.shape == (3, n)
    for row, i in enumerate((0, 1, 2)):
        ids = ds.token_ids[i]
        assert batch.input_ids[row, 0] == BOS
        assert batch.input_ids[row, 1: len(ids) + 1].tolist() == ids
        assert batch.targets[row, : len(ids)].tolist() == ids
        assert batch.targets[row, len(ids)] == EOS
        assert (batch.targets[row, len(ids) + 1:] == PAD).all()
        assert batch.counts[row].sum() == len(ids)
    assert ds.augmented_samples == 0


# -- loop ---------------------------------------------------------------------

def test_zero_iterations_writes_initial_checkpoint(tiny_data, tmp_path):
    result = train_loop(config(tiny_data, tmp_path, total_iterations=0))
    assert result.steps == 0
    assert result.metrics_log.read_text() == ""
    state = load_checkpoint(result.final_checkpoint)
    assert state.step == 0


def test_loss_composition_and_determinism(tiny_data, tmp_path):
    a = read_log(train_loop(config(tiny_data, tmp_path / "a")).metrics_log)
    b = read_log(train_loop(config(tiny_data, tmp_path / "b")).metrics_log)
    assert [r["step"] for r in a] == list(range(1, 7))
    for ra, rb in zip(a, b):
        assert ra["lm_loss"] == rb["lm_loss"] and ra["total_loss"] == rb["total_loss"]
        assert abs(ra["total_loss"] - (1.0 * ra["lm_loss"] + 0.5 * ra["len_loss"])) <= 1e-7
        assert set(ra) == {"step", "lr", "lm_loss", "len_loss", "total_loss", "wall_time"}
    assert (tmp_path / "a" / "checkpoints" / "step_0000003").is_dir()
    for name in ("model.pt", "config.json", "vocab.txt"):
        assert ((tmp_path / "a" / "checkpoints" / "final" / name).read_bytes()
                == (tmp_path / "b" / "checkpoints" / "final" / name).read_bytes())


def test_resume_matches_straight_run(tiny_data, tmp_path):
    # dropout on and augmentation on, so RNG restoration matters
    extra = dict(total_iterations=8, checkpoint_interval=4,
                 model={**TINY_MODEL, "dropout": 0.2},
                 augment={"kinds": {"fog": {"probability": 0.5, "severity": [1, 3]}}})
    straight = read_log(train_loop(config(tiny_data, tmp_path / "s", **extra)).metrics_log)
    ckpt = tmp_path / "s" / "checkpoints" / "step_0000004"
    resumed_dir = tmp_path / "resumed"
    result = train_loop(config(tiny_data, resumed_dir, **extra), resume=ckpt)
    resumed = read_log(result.metrics_log)
    assert [r["step"] for r in resumed] == [5, 6, 7, 8]
    for r, s in zip(resumed, straight[4:]):
        assert r["lm_loss"] == s["lm_loss"] and r["len_loss"] == s["len_loss"] and r["lr"] == s["lr"]
    assert ((resumed_dir / "checkpoints" / "final" / "model.pt").read_bytes()
            == (tmp_path / "s" / "checkpoints" / "final" / "model.pt").read_bytes())


def test_checkpoint_roundtrip_and_guards(tiny_data, tmp_path):
    result = train_loop(config(tiny_data, tmp_path / "run", total_iterations=2))
    state = load_checkpoint(result.final_checkpoint)
    assert state.step == 2 and state.optimizer_state["state"]
    copy = save_checkpoint(tmp_path / "copy", state.model, state.vocab, None, state.step)
    again = load_checkpoint(copy)
    for (ka, va), (kb, vb) in zip(state.model.state_dict().items(), again.model.state_dict().items()):
        assert ka == kb and torch.equal(va, vb)
    # vocabulary size no longer matches the model
    (copy / "vocab.txt").write_text("x\n")
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(copy)
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(tmp_path / "missing")
    (copy / "vocab.txt").unlink()
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(copy)


def test_resume_with_other_vocabulary(tiny_data, tmp_path):
    result = train_loop(config(tiny_data, tmp_path / "run", total_iterations=1))
    ckpt = result.final_checkpoint
    tokens = (ckpt / "vocab.txt").read_text().splitlines()
    (ckpt / "vocab.txt").write_text("\n".join(reversed(tokens)) + "\n")
    with pytest.raises(VocabularyMismatch):
        train_loop(config(tiny_data, tmp_path / "run2", total_iterations=2), resume=ckpt)
    with pytest.raises(VocabularyMismatch):
        train_loop(config(tiny_data, tmp_path / "run3", model={**TINY_MODEL, "vocab_size": 7}))


def test_small_dataset_is_an_error(tiny_data, tmp_path):
    with pytest.raises(DataExhausted):
        train_loop(config(tiny_data, tmp_path, batch_size=1000))


def test_validation_is_never_augmented(tiny_data, tmp_path):
    cfg = config(tiny_data, tmp_path, total_iterations=4, val_manifest=str(tiny_data),
                 val_interval=2, augment={"kinds": {"blur": {"probability": 1.0, "severity": [1, 1]}}})
    result = train_loop(cfg)
    assert result.val_augmented_samples == 0
    val = read_log(tmp_path / "val_metrics.jsonl")
    assert [r["step"] for r in val] == [2, 4]


def test_augmentation_reaches_training(tiny_data, tmp_path, monkeypatch):
    seen = []
    original = FormulaDataset.collate

    def spy(self, indices, augment=None, rng_key=(), workers=0):
        batch = original(self, indices, augment, rng_key, workers)
        seen.append(self.augmented_samples)
        return batch

    monkeypatch.setattr(FormulaDataset, "collate", spy)
    cfg = config(tiny_data, tmp_path, total_iterations=2,
                 augment={"kinds": {"blur": {"probability": 1.0, "severity": [1, 1]}}})
    train_loop(cfg)
    assert seen == [4, 8]


def test_non_finite_loss_keeps_last_checkpoint(tiny_data, tmp_path, monkeypatch):
    calls = {"n": 0}
    original = loop_module.language_modeling_loss

    def flaky(logits, targets, pad_id=0):
        calls["n"] += 1
        value = original(logits, targets, pad_id)
        return value * float("nan") if calls["n"] == 5 else value

    monkeypatch.setattr(loop_module, "language_modeling_loss", flaky)
    with pytest.raises(NonFiniteLoss):
        train_loop(config(tiny_data, tmp_path, total_iterations=6, checkpoint_interval=2))
    assert load_checkpoint(tmp_path / "checkpoints" / "step_0000004").step == 4
    assert not (tmp_path / "checkpoints" / "final").exists()
    assert len(read_log(tmp_path / "metrics.jsonl")) == 4


def test_scalar_length_target_and_lam_off(tiny_data, tmp_path):
    scalar = config(tiny_data, tmp_path / "s", total_iterations=2,
                    model={**TINY_MODEL, "length_target": "scalar"})
    log = read_log(train_loop(scalar).metrics_log)
    assert all(np.isfinite(r["len_loss"]) for r in log)
    off = config(tiny_data, tmp_path / "off", total_iterations=2,
                 model={**TINY_MODEL, "lam_enabled": False})
    log = read_log(train_loop(off).metrics_log)
    assert all(r["len_loss"] is None and r["total_loss"] == r["lm_loss"] for r in log)


def test_multi_worker_training_runs(tiny_data, tmp_path):
    cfg = config(tiny_data, tmp_path, total_iterations=2, workers=2,
                 augment={"kinds": {"fog": {"probability": 1.0, "severity": [1, 2]}}})
    assert train_loop(cfg).steps == 2
