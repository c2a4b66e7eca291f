"""Batching: image loading, augmentation, padding and target construction."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from PIL import Image

from mathrec.augment import AugmentConfig, augment_pipeline
from mathrec.data.manifest import Manifest
from mathrec.errors import DataExhausted, MissingImage, SequenceTooLong
from mathrec.latex.vocab import BOS, EOS, PAD, Vocabulary, symbol_counts, tokenize
from mathrec.model.network import preprocess

SORT_WINDOW = 16  # batches per length-sorted chunk


def load_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise MissingImage(f"cannot read image {path}: {exc}") from exc


@dataclass
class Batch:
    images: torch.Tensor        # (B, 3, H, W)
    input_ids: torch.Tensor     # (B, N): <s> + tokens, padded
    targets: torch.Tensor       # (B, N): tokens + </s>, padded
    counts: torch.Tensor        # (B, C) ground-truth symbol counts
    indices: list[int]


class FormulaDataset:
    """Manifest records with decoded images held in memory.

    Augmentation happens per sample with a generator seeded from
    ``(augment seed, train seed, step, index)``, so a sample's augmented
    pixels do not depend on worker scheduling.
    """

    def __init__(self, manifest: Manifest, vocab: Vocabulary, canvas: Sequence[int],
                 max_sequence_length: int):
        self.manifest = manifest
        self.vocab = vocab
        self.canvas = tuple(canvas)
        self.records = list(manifest.records)
        self.token_ids = [tokenize(r.latex, vocab) for r in self.records]
        for rec, ids in zip(self.records, self.token_ids):
            if len(ids) + 1 > max_sequence_length:
                raise SequenceTooLong(
                    f"{rec.image_path}: {len(ids)} tokens exceed max_sequence_length")
        self.images = [load_image(manifest.image_file(r)) for r in self.records]
        self._clean: dict[int, torch.Tensor] = {}
        self.augmented_samples = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def lengths(self) -> list[int]:
        return [len(ids) for ids in self.token_ids]

    def pixels(self, index: int, augment: Optional[AugmentConfig] = None,
               rng_key: Sequence[int] = ()) -> torch.Tensor:
        if augment is None or not augment.kinds:
            if index not in self._clean:
                self._clean[index] = preprocess(self.images[index], self.canvas)
            return self._clean[index]
        rng = np.random.default_rng([augment.seed, *rng_key, index])
        self.augmented_samples += 1
        return preprocess(augment_pipeline(self.images[index], augment, rng), self.canvas)

    def collate(self, indices: Sequence[int], augment: Optional[AugmentConfig] = None,
                rng_key: Sequence[int] = (), workers: int = 0) -> Batch:
        if workers > 1 and augment is not None and augment.kinds:
            with ThreadPoolExecutor(workers) as pool:
                images = list(pool.map(lambda i: self.pixels(i, augment, rng_key), indices))
        else:
            images = [self.pixels(i, augment, rng_key) for i in indices]
        n = max(len(self.token_ids[i]) for i in indices) + 1
        inputs = torch.full((len(indices), n), PAD, dtype=torch.long)
        targets = torch.full((len(indices), n), PAD, dtype=torch.long)
        counts = np.zeros((len(indices), self.vocab.size), np.float32)
        for row, i in enumerate(indices):
            ids = self.token_ids[i]
            inputs[row, : len(ids) + 1] = torch.tensor([BOS] + ids)
            targets[row, : len(ids) + 1] = torch.tensor(ids + [EOS])
            counts[row] = symbol_counts(ids, self.vocab)
        return Batch(torch.stack(images), inputs, targets, torch.from_numpy(counts), list(indices))


def epoch_batches(lengths: Sequence[int], batch_size: int, seed: int, epoch: int) -> list[list[int]]:
    """Shuffled batches of similar-length samples; a short remainder is dropped."""
    n = len(lengths)
    if n < batch_size:
        raise DataExhausted(f"dataset of {n} samples is smaller than one batch of {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(n)
    usable = n - n % batch_size
    batches = []
    chunk = batch_size * SORT_WINDOW
    for start in range(0, usable, chunk):
        part = sorted(order[start: min(start + chunk, usable)].tolist(), key=lambda i: lengths[i])
        batches.extend(part[j: j + batch_size] for j in range(0, len(part), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def sequential_batches(n: int, batch_size: int) -> list[list[int]]:
    return [list(range(i, min(i + batch_size, n))) for i in range(0, n, batch_size)]
