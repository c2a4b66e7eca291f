"""Checkpoint directories.

Layout::

    config.json       model hyperparameters
    vocab.txt         vocabulary the model was trained with
    model.pt          parameters only
    train_state.pt    optimizer state, step, torch RNG state, training config

A checkpoint is written to a temporary sibling directory and renamed into
place, so an interrupted save never leaves a half-written checkpoint.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import torch

from mathrec.errors import ConfigError, CorruptCheckpoint
from mathrec.latex.vocab import Vocabulary
from mathrec.model.config import ModelConfig
from mathrec.model.network import FormulaRecognizer

CONFIG_FILE = "config.json"
VOCAB_FILE = "vocab.txt"
MODEL_FILE = "model.pt"
STATE_FILE = "train_state.pt"


@dataclass
class TrainingState:
    model: FormulaRecognizer
    vocab: Vocabulary
    step: int
    optimizer_state: Optional[dict]
    rng_state: Optional[torch.Tensor]
    train_config: Optional[dict]


def save_checkpoint(path: Union[str, Path], model: FormulaRecognizer, vocab: Vocabulary,
                    optimizer: Optional[torch.optim.Optimizer], step: int,
                    train_config: Optional[dict] = None) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    model.config.save(tmp / CONFIG_FILE)
    vocab.save(tmp / VOCAB_FILE)
    torch.save(model.state_dict(), tmp / MODEL_FILE)
    torch.save({
        "step": int(step),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "rng_state": torch.get_rng_state(),
        "train_config": train_config,
    }, tmp / STATE_FILE)
    if path.exists():
        shutil.rmtree(path)
    tmp.rename(path)
    return path


def load_checkpoint(path: Union[str, Path]) -> TrainingState:
    path = Path(path)
    if not path.is_dir():
        raise CorruptCheckpoint(f"checkpoint {path} does not exist or is not a directory")
    for name in (CONFIG_FILE, VOCAB_FILE, MODEL_FILE):
        if not (path / name).is_file():
            raise CorruptCheckpoint(f"checkpoint {path} is missing {name}")
    try:
        config = ModelConfig.load(path / CONFIG_FILE)
    except (ConfigError, ValueError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"checkpoint {path}: bad {CONFIG_FILE}: {exc}") from exc
    vocab = Vocabulary.load(path / VOCAB_FILE)
    if vocab.size != config.vocab_size:
        raise CorruptCheckpoint(
            f"checkpoint {path}: vocabulary has {vocab.size} entries, model expects {config.vocab_size}")
    model = FormulaRecognizer(config)
    try:
        params = torch.load(path / MODEL_FILE, map_location="cpu", weights_only=True)
        model.load_state_dict(params)
    except (RuntimeError, OSError, EOFError, KeyError) as exc:
        raise CorruptCheckpoint(f"checkpoint {path}: cannot load parameters: {exc}") from exc
    state = {"step": 0, "optimizer": None, "rng_state": None, "train_config": None}
    if (path / STATE_FILE).is_file():
        try:
            state = torch.load(path / STATE_FILE, map_location="cpu", weights_only=True)
        except (RuntimeError, OSError, EOFError) as exc:
            raise CorruptCheckpoint(f"checkpoint {path}: cannot load training state: {exc}") from exc
    return TrainingState(model, vocab, int(state["step"]), state["optimizer"],
                         state["rng_state"], state["train_config"])
