"""Inference decoding: batched greedy search and length-normalized beam search.

A hypothesis is scored by the mean log-probability of its emitted tokens,
counting the closing ``</s>`` when one was produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from mathrec.latex.vocab import BOS, EOS
from mathrec.model.network import FormulaRecognizer


@dataclass
class Hypothesis:
    tokens: list[int]
    score: float
    truncated: bool


def _check_max_len(model: FormulaRecognizer, max_len: int) -> int:
    return max(0, min(int(max_len), model.config.max_sequence_length - 1))


@torch.no_grad()
def greedy_decode(model: FormulaRecognizer, images: torch.Tensor, max_len: int) -> list[Hypothesis]:
    """Greedy decoding for a batch of preprocessed images ``(B, 3, H, W)``."""
    max_len = _check_max_len(model, max_len)
    z = model.encode(images)
    _, embedding = model.length_embedding(z)
    b = images.shape[0]
    ids = torch.full((b, 1), BOS, dtype=torch.long)
    logp_sum = torch.zeros(b, dtype=torch.float64)
    lengths = torch.zeros(b, dtype=torch.long)
    done = torch.zeros(b, dtype=torch.bool)
    for _ in range(max_len):
        logits = model.decoder_forward(z, ids, embedding)[:, -1]
        logp = torch.log_softmax(logits.double(), dim=-1)
        best = logp.argmax(-1)
        live = ~done
        logp_sum += torch.where(live, logp.gather(1, best[:, None]).squeeze(1), 0.0)
        lengths += live.long()
        best = torch.where(live, best, torch.full_like(best, EOS))
        done |= best == EOS
        ids = torch.cat([ids, best[:, None]], dim=1)
        if bool(done.all()):
            break
    out = []
    for row in range(b):
        seq = ids[row, 1:].tolist()
        finished = EOS in seq
        tokens = seq[: seq.index(EOS)] if finished else seq
        n = int(lengths[row])
        out.append(Hypothesis(tokens, float(logp_sum[row] / n) if n else 0.0, not finished))
    return out


@torch.no_grad()
def sequence_score(model: FormulaRecognizer, image: torch.Tensor, tokens: list[int],
                   finished: bool) -> float:
    """Score a given token sequence under the model (same convention as the decoders)."""
    target = list(tokens) + ([EOS] if finished else [])
    if not target:
        return 0.0
    z = model.encode(image[None])
    _, embedding = model.length_embedding(z)
    ids = torch.tensor([[BOS] + target[:-1]])
    logp = torch.log_softmax(model.decoder_forward(z, ids, embedding)[0].double(), -1)
    return float(logp.gather(1, torch.tensor(target)[:, None]).mean())


@torch.no_grad()
def beam_search(model: FormulaRecognizer, image: torch.Tensor, max_len: int,
                beam: int) -> Hypothesis:
    """Beam search over one preprocessed image ``(3, H, W)``.

    The greedy path is always a candidate, so the returned score is never
    below the greedy one.
    """
    max_len = _check_max_len(model, max_len)
    z = model.encode(image[None])
    _, embedding = model.length_embedding(z)
    beams = [([BOS], 0.0)]
    finished: list[Hypothesis] = []
    for step in range(max_len):
        seqs = torch.tensor([s for s, _ in beams])
        k = len(beams)
        logits = model.decoder_forward(z.expand(k, -1, -1), seqs,
                                       embedding.expand(k, -1))[:, -1]
        logp = torch.log_softmax(logits.double(), dim=-1)
        totals = torch.tensor([s for _, s in beams], dtype=torch.float64)[:, None] + logp
        flat = totals.flatten()
        top = torch.topk(flat, min(2 * beam, flat.numel()))
        candidates = []
        vocab = logp.shape[1]
        for value, index in zip(top.values.tolist(), top.indices.tolist()):
            src, token = divmod(index, vocab)
            seq = beams[src][0] + [token]
            if token == EOS:
                finished.append(Hypothesis(seq[1:-1], value / (step + 1), False))
            else:
                candidates.append((seq, value))
            if len(candidates) == beam:
                break
        beams = candidates
        if not beams:
            break
    for seq, total in beams:
        if len(seq) - 1 == max_len:
            finished.append(Hypothesis(seq[1:], total / max_len if max_len else 0.0, True))
    greedy = greedy_decode(model, image[None], max_len)[0]
    finished.append(greedy)
    return max(finished, key=lambda h: h.score)


def generate(model: FormulaRecognizer, image: torch.Tensor, max_len: int = 256,
             beam: int = 1) -> Hypothesis:
    """Decode one preprocessed image; ``beam == 1`` is greedy."""
    was_training = model.training
    model.eval()
    try:
        if beam <= 1:
            return greedy_decode(model, image[None], max_len)[0]
        return beam_search(model, image, max_len, beam)
    finally:
        model.train(was_training)
