from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch

from mathrec.data.manifest import load_manifest
from mathrec.errors import VocabularyMismatch
from mathrec.model.config import ModelConfig
from mathrec.model.losses import LossWeights, language_modeling_loss, length_loss, total_loss
from mathrec.model.network import FormulaRecognizer
from mathrec.train.checkpoint import load_checkpoint, save_checkpoint
from mathrec.train.config import TrainConfig
from mathrec.train.data import Batch, FormulaDataset, epoch_batches, sequential_batches
from mathrec.train.schedule import lr_schedule

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
VAL_FILE = "val_metrics.jsonl"
CHECKPOINT_DIR = "checkpoints"
FINAL = "final"


@dataclass
class TrainResult:
    final_checkpoint: Path
    metrics_log: Path
    steps: int
    val_augmented_samples: int


def step_losses(model: FormulaRecognizer, batch: Batch, weights: LossWeights):
    """Return ``(lm, length_or_None, total)``; the total is formed in float64."""
    logits, counts = model(batch.images, batch.input_ids)
    lm = language_modeling_loss(logits, batch.targets)
    length = None
    if counts is not None:
        target = batch.counts
        if model.config.length_target == "scalar":
            counts, target = counts.sum(-1, keepdim=True), target.sum(-1, keepdim=True)
        length = length_loss(counts, target)
    total = total_loss(lm.double(), None if length is None else length.double(), weights)
    return lm, length, total


def build_optimizer(model: FormulaRecognizer, cfg: TrainConfig) -> torch.optim.AdamW:
    decay = [p for p in model.parameters() if p.ndim >= 2]
    no_decay = [p for p in model.parameters() if p.ndim < 2]
    groups = [{"params": decay, "weight_decay": cfg.weight_decay},
              {"params": no_decay, "weight_decay": 0.0}]
    return torch.optim.AdamW(groups, lr=cfg.warmup_lr)


def _model_config(cfg: TrainConfig, vocab_size: int) -> ModelConfig:
    data = dict(cfg.model)
    declared = data.pop("vocab_size", None)
    if declared is not None and declared != vocab_size:
        raise VocabularyMismatch(
            f"model.vocab_size={declared} but the manifest vocabulary has {vocab_size} entries")
    return ModelConfig.from_dict({**data, "vocab_size": vocab_size})


@torch.no_grad()
def validation_loss(model: FormulaRecognizer, dataset: FormulaDataset, batch_size: int) -> float:
    was_training = model.training
    model.eval()
    total, weight = 0.0, 0
    for indices in sequential_batches(len(dataset), batch_size):
        batch = dataset.collate(indices)  # never augmented
        lm, _, _ = step_losses(model, batch, LossWeights())
        n = int((batch.targets != 0).sum())
        total += float(lm) * n
        weight += n
    model.train(was_training)
    return total / weight if weight else 0.0


def train_loop(cfg: TrainConfig, resume: Optional[Union[str, Path]] = None) -> TrainResult:
    """Train from scratch, or continue from the checkpoint at ``resume``.

    Writes ``metrics.jsonl`` (one line per optimizer step), checkpoints every
    ``checkpoint_interval`` steps under ``checkpoints/step_NNNNNNN`` and a final
    one under ``checkpoints/final``.  Bit-stable for ``workers <= 1``.
    """
    out = Path(cfg.output_dir)
    ckpt_root = out / CHECKPOINT_DIR
    ckpt_root.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(cfg.train_manifest)
    vocab = manifest.vocabulary()

    if resume is not None:
        state = load_checkpoint(resume)
        model, start = state.model, state.step
        if state.vocab != vocab:
            raise VocabularyMismatch(f"checkpoint {resume} was trained with a different vocabulary")
        optimizer = build_optimizer(model, cfg)
        if state.optimizer_state is not None:
            optimizer.load_state_dict(state.optimizer_state)
        if state.rng_state is not None:
            torch.set_rng_state(state.rng_state)
    else:
        torch.manual_seed(cfg.seed)
        model = FormulaRecognizer(_model_config(cfg, vocab.size))
        optimizer = build_optimizer(model, cfg)
        start = 0

    dataset = FormulaDataset(manifest, vocab, model.config.canvas, model.config.max_sequence_length)
    val_dataset = None
    if cfg.val_manifest and cfg.val_interval > 0:
        val_manifest = load_manifest(cfg.val_manifest)
        if val_manifest.vocabulary() != vocab:
            raise VocabularyMismatch("validation manifest uses a different vocabulary")
        val_dataset = FormulaDataset(val_manifest, vocab, model.config.canvas,
                                     model.config.max_sequence_length)

    total_steps = cfg.total_iterations
    augment = cfg.augment_config
    weights = cfg.weights
    metrics_path = out / METRICS_FILE
    if resume is None:
        metrics_path.write_text("")
        (out / VAL_FILE).unlink(missing_ok=True)
    if total_steps and start < total_steps:
        epoch_batches(dataset.lengths, cfg.batch_size, cfg.seed, 0)  # fail early on tiny data
    steps_per_epoch = max(1, len(dataset) // cfg.batch_size)
    plan_epoch, plan = -1, []
    params = list(model.parameters())
    began = time.time()
    model.train()
    with metrics_path.open("a", encoding="utf-8") as log:
        for step in range(start, total_steps):
            epoch, position = divmod(step, steps_per_epoch)
            if epoch != plan_epoch:
                plan_epoch, plan = epoch, epoch_batches(dataset.lengths, cfg.batch_size,
                                                        cfg.seed, epoch)
            batch = dataset.collate(plan[position], augment, (cfg.seed, step), cfg.workers)
            lr = lr_schedule(step, cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            lm, length, total = step_losses(model, batch, weights)
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip)
            optimizer.step()
            done = step + 1
            log.write(json.dumps({
                "step": done, "lr": lr, "lm_loss": lm.item(),
                "len_loss": None if length is None else length.item(),
                "total_loss": total.item(), "wall_time": round(time.time() - began, 3),
            }) + "\n")
            log.flush()
            if val_dataset is not None and done % cfg.val_interval == 0:
                value = validation_loss(model, val_dataset, cfg.batch_size)
                with (out / VAL_FILE).open("a", encoding="utf-8") as vlog:
                    vlog.write(json.dumps({"step": done, "val_lm_loss": value}) + "\n")
            if done % cfg.checkpoint_interval == 0 and done < total_steps:
                save_checkpoint(ckpt_root / f"step_{done:07d}", model, vocab, optimizer, done,
                                cfg.to_dict())
            if done % 50 == 0:
                logger.info("step %d lr %.3g lm %.4f", done, lr, lm.item())
    final = save_checkpoint(ckpt_root / FINAL, model, vocab, optimizer, max(start, total_steps),
                            cfg.to_dict())
    return TrainResult(final, metrics_path, max(start, total_steps),
                       val_dataset.augmented_samples if val_dataset is not None else 0)
