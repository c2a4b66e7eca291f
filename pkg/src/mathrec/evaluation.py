"""Recognition metrics and per-subset reports.

* ``bleu`` / ``corpus_bleu``: BLEU-4 over token sequences, uniform weights,
  brevity penalty, and add-one smoothing of orders with no matching n-gram.
* ``edit_distance``: character Levenshtein distance divided by the longer length.
* ``exprate``: share of pairs within ``k`` token edits.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import torch

from mathrec.data.manifest import SUBSETS, Manifest
from mathrec.errors import LengthMismatch, VocabularyMismatch
from mathrec.latex import BOS, EOS, PAD, Vocabulary, detokenize, split_tokens, try_normalize
from mathrec.model.decoding import generate, greedy_decode
from mathrec.train.checkpoint import MODEL_FILE, load_checkpoint
from mathrec.train.data import FormulaDataset, sequential_batches

logger = logging.getLogger(__name__)

MAX_ORDER = 4
EXPRATE_KS = (0, 1, 2)
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
PREDICTIONS = "predictions.jsonl"


class EmptyReference(UserWarning):
    """BLEU against an empty reference; the score is defined as 0."""


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(prediction: Sequence[str], reference: Sequence[str]) -> list[int]:
    """``[pred_len, ref_len, match_1, total_1, ..., match_4, total_4]``."""
    stats = [len(prediction), len(reference)]
    for n in range(1, MAX_ORDER + 1):
        hyp, ref = _ngrams(prediction, n), _ngrams(reference, n)
        stats.append(sum(min(c, ref[g]) for g, c in hyp.items()))
        stats.append(max(len(prediction) - n + 1, 0))
    return stats


def _bleu_from_stats(stats: Sequence[int]) -> float:
    pred_len, ref_len = stats[0], stats[1]
    if ref_len == 0:
        warnings.warn("BLEU against an empty reference is defined as 0", EmptyReference)
        return 0.0
    if pred_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(MAX_ORDER):
        matches, total = stats[2 + 2 * n], stats[3 + 2 * n]
        log_p += math.log(matches / total if matches else 1.0 / (total + 1))
    brevity = 0.0 if pred_len >= ref_len else 1.0 - ref_len / pred_len
    return math.exp(brevity + log_p / MAX_ORDER)


def _tokens(seq) -> list[str]:
    return split_tokens(seq) if isinstance(seq, str) else list(seq)


def bleu(prediction, reference) -> float:
    """Sentence BLEU-4 of one token sequence (a string is split into tokens)."""
    return _bleu_from_stats(_bleu_stats(_tokens(prediction), _tokens(reference)))


def corpus_bleu(predictions: Sequence, references: Sequence) -> float:
    """BLEU-4 from n-gram statistics pooled over the corpus."""
    if len(predictions) != len(references):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(references)} references")
    totals = [0] * (2 + 2 * MAX_ORDER)
    for p, r in zip(predictions, references):
        totals = [a + b for a, b in zip(totals, _bleu_stats(_tokens(p), _tokens(r)))]
    return _bleu_from_stats(totals)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost insert/delete/substitute distance between two sequences."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        current = [i]
        for j, y in enumerate(b, 1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (x != y)))
        previous = current
    return previous[-1]


def edit_distance(prediction: str, reference: str) -> float:
    longest = max(len(prediction), len(reference))
    return levenshtein(prediction, reference) / longest if longest else 0.0


def exprate(predictions: Sequence, references: Sequence, k: int = 0) -> float:
    """Fraction of pairs at token-level distance ``<= k``; 0 for an empty list."""
    if len(predictions) != len(references):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(references)} references")
    if k not in EXPRATE_KS:
        raise ValueError(f"k must be one of {EXPRATE_KS}")
    if not predictions:
        return 0.0
    hits = sum(levenshtein(_tokens(p), _tokens(r)) <= k for p, r in zip(predictions, references))
    return hits / len(predictions)


def prediction_text(tokens: Sequence[int], vocab: Vocabulary) -> str:
    """Detokenize a hypothesis, dropping stray pad/bos/eos ids an undertrained model may emit."""
    return detokenize([t for t in tokens if t not in (PAD, BOS, EOS)], vocab)


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 1
    max_len: int = 256
    batch_size: int = 16


def _summary(rows: list[dict]) -> dict:
    if not rows:
        return {"bleu": None, "edit_distance": None, "exprate": None,
                "exprate_le1": None, "exprate_le2": None, "n": 0}
    n = len(rows)
    preds = [split_tokens(r["prediction"]) for r in rows]
    refs = [split_tokens(r["reference"]) for r in rows]
    rates = [sum(r["token_distance"] <= k for r in rows) / n for k in EXPRATE_KS]
    return {
        "bleu": corpus_bleu(preds, refs),
        "edit_distance": sum(r["edit_distance"] for r in rows) / n,
        "exprate": rates[0], "exprate_le1": rates[1], "exprate_le2": rates[2], "n": n,
    }


def score_predictions(manifest: Manifest, predictions: Sequence[str]) -> tuple[dict, list[dict]]:
    """Metrics per subset and overall for raw predicted strings, in manifest order."""
    if len(predictions) != len(manifest.records):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(manifest.records)} records")
    rows, subsets = [], []
    for record, raw in zip(manifest.records, predictions):
        reference = try_normalize(record.latex) or record.latex
        prediction = try_normalize(raw)
        prediction = raw if prediction is None else prediction
        rows.append({
            "image_path": record.image_path,
            "reference": reference,
            "prediction": prediction,
            "edit_distance": edit_distance(prediction, reference),
            "token_distance": levenshtein(split_tokens(prediction), split_tokens(reference)),
        })
        subsets.append(record.subset)
    report = {name: _summary([r for r, s in zip(rows, subsets) if s == name]) for name in SUBSETS}
    return {"subsets": report, "overall": _summary(rows)}, rows


def _checkpoint_id(path: Path) -> dict:
    digest = hashlib.sha256((path / MODEL_FILE).read_bytes()).hexdigest()
    return {"name": path.name, "sha256": digest}


def evaluate(manifest: Manifest, checkpoint: Union[str, Path],
             decode: DecodeConfig = DecodeConfig()) -> tuple[dict, list[dict]]:
    """Decode every record (no augmentation) and score it.

    Returns ``(report, per-sample rows)``; see :func:`write_report`.
    """
    checkpoint = Path(checkpoint)
    state = load_checkpoint(checkpoint)
    model, vocab = state.model, state.vocab
    if manifest.vocabulary() != vocab:
        raise VocabularyMismatch(f"manifest vocabulary differs from checkpoint {checkpoint}")
    model.eval()
    dataset = FormulaDataset(manifest, vocab, model.config.canvas, model.config.max_sequence_length)
    outputs: list[str] = []
    with torch.no_grad():
        for indices in sequential_batches(len(dataset), decode.batch_size):
            images = torch.stack([dataset.pixels(i) for i in indices])
            if decode.beam <= 1:
                hyps = greedy_decode(model, images, decode.max_len)
            else:
                hyps = [generate(model, image, decode.max_len, decode.beam) for image in images]
            outputs.extend(prediction_text(h.tokens, vocab) for h in hyps)
    report, rows = score_predictions(manifest, outputs)
    report = {"checkpoint": _checkpoint_id(checkpoint),
              "decode": {"beam": decode.beam, "max_len": decode.max_len}, **report}
    return report, rows


def _cell(value: Optional[float]) -> str:
    return f"{value:>9.4f}" if value is not None else f"{'-':>9}"


def format_table(report: dict) -> str:
    ident = report["checkpoint"]
    header = "".join(f"{h:>9}" for h in ("BLEU↑", "EditDis↓", "ExpRate", "<=1", "<=2"))
    lines = [f"checkpoint {ident['name']} sha256 {ident['sha256'][:16]}",
             f"{'subset':<8}{'n':>6}{header}"]
    for name, row in [*report["subsets"].items(), ("overall", report["overall"])]:
        cells = "".join(_cell(row[k]) for k in
                        ("bleu", "edit_distance", "exprate", "exprate_le1", "exprate_le2"))
        lines.append(f"{name:<8}{row['n']:>6}{cells}")
    return "\n".join(lines) + "\n"


def write_report(report: dict, rows: list[dict], out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / REPORT_JSON).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / REPORT_TXT).write_text(format_table(report))
    with (out / PREDICTIONS).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return out
