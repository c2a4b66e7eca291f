"""Corpus -> rendered, deduplicated, length-balanced dataset."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from mathrec.data.manifest import (
    DEFAULT_BUCKETS,
    SUBSETS,
    FormulaSample,
    Manifest,
    bucket_index,
    validate_buckets,
)
from mathrec.data.render import STUB, check_renderer, render_formula
from mathrec.data.sampling import dedup, length_balanced_sample
from mathrec.data.stub_render import DEFAULT_FONT
from mathrec.errors import CompileFailure, ConfigError, DataError
from mathrec.latex import UNK, Vocabulary, build_vocabulary, split_tokens, tokenize, try_normalize

logger = logging.getLogger(__name__)

VOCAB_FILE = "vocab.txt"
MANIFEST_FILE = "manifest.jsonl"
IMAGE_DIR = "images"


@dataclass
class BuildConfig:
    fonts: Sequence[str] = (DEFAULT_FONT,)
    dpis: Sequence[int] = (80, 120, 160)
    buckets: Sequence[int] = DEFAULT_BUCKETS
    per_bucket: Optional[int] = None
    seed: int = 0
    renderer: str = STUB
    min_frequency: int = 1
    default_subset: str = "SPE"
    max_sequence_length: int = 1024
    workers: int = 1
    vocabulary: Optional[str] = None

    def __post_init__(self):
        if not self.fonts or not self.dpis:
            raise ConfigError("at least one font and one dpi are required")
        if any(int(d) <= 0 for d in self.dpis):
            raise ConfigError(f"dpis must be positive, got {list(self.dpis)}")
        try:
            self.buckets = validate_buckets(self.buckets)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.per_bucket is not None and self.per_bucket < 1:
            raise ConfigError("per_bucket must be >= 1")
        if self.default_subset not in SUBSETS:
            raise ConfigError(f"default_subset must be one of {SUBSETS}")


def read_corpus(path: Union[str, Path], default_subset: str = "SPE") -> list[tuple[str, str]]:
    """Read ``latex`` or ``SUBSET<TAB>latex`` lines; blank lines are skipped."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        subset, sep, rest = line.partition("\t")
        if sep and subset in SUBSETS:
            out.append((subset, rest))
        else:
            out.append((default_subset, line))
    return out


def image_name(latex: str, font: str, dpi: int) -> str:
    digest = hashlib.sha1(f"{latex}\x00{font}\x00{dpi}".encode("utf-8")).hexdigest()[:16]
    return f"{IMAGE_DIR}/{digest}.png"


def _render_choice(index: int, config: BuildConfig) -> tuple[str, int]:
    rng = np.random.default_rng([config.seed, index])
    font = config.fonts[int(rng.integers(len(config.fonts)))]
    dpi = int(config.dpis[int(rng.integers(len(config.dpis)))])
    return font, dpi


def build_manifest(corpus_file: Union[str, Path], output_dir: Union[str, Path],
                   config: Optional[BuildConfig] = None) -> Manifest:
    """normalize -> dedup -> render -> balance -> write.

    Each unique formula is rendered once, with a (font, dpi) pair drawn from
    the seed split for its index, so records stay unique by latex while the
    dataset still spans all configured fonts and resolutions.
    """
    config = config or BuildConfig()
    check_renderer(config.renderer)
    out = Path(output_dir)
    (out / IMAGE_DIR).mkdir(parents=True, exist_ok=True)

    candidates = []
    for subset, raw in read_corpus(corpus_file, config.default_subset):
        latex = try_normalize(raw)
        if latex:
            candidates.append(FormulaSample("", latex, subset, len(split_tokens(latex))))
    candidates = dedup(candidates)
    if not candidates:
        raise DataError(f"corpus {corpus_file} has no usable formulas")

    vocab = Vocabulary.load(config.vocabulary) if config.vocabulary else None
    usable = []
    for c in candidates:
        if vocab is not None and UNK in tokenize(c.latex, vocab):
            logger.warning("dropping formula with out-of-vocabulary tokens: %r", c.latex)
        elif c.token_length > config.max_sequence_length:
            logger.warning("dropping formula longer than %d tokens", config.max_sequence_length)
        elif bucket_index(c.token_length, config.buckets) is None:
            logger.warning("dropping formula outside length buckets: %r", c.latex)
        else:
            usable.append(c)

    def job(item):
        index, sample = item
        font, dpi = _render_choice(index, config)
        rel = image_name(sample.latex, font, dpi)
        try:
            render_formula(sample.latex, out / rel, font=font, dpi=dpi, renderer=config.renderer)
        except CompileFailure as exc:
            logger.warning("discarding uncompilable formula %r: %s", sample.latex, exc)
            return None
        return FormulaSample(rel, sample.latex, sample.subset, sample.token_length)

    items = list(enumerate(usable))
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            rendered = list(pool.map(job, items))
    else:
        rendered = [job(it) for it in items]
    rendered = [r for r in rendered if r is not None]

    if config.per_bucket is not None:
        selected = length_balanced_sample(rendered, config.buckets, config.per_bucket, config.seed)
    else:
        selected = rendered
    if not selected:
        raise DataError(f"no formula from {corpus_file} survived rendering and filtering")
    if vocab is None:
        # built from the final selection so discarded formulas leave no tokens behind
        vocab = build_vocabulary([r.latex for r in selected], config.min_frequency)
        dropped = [r for r in selected if UNK in tokenize(r.latex, vocab)]
        if dropped:
            logger.warning("dropping %d formulas with tokens below min_frequency", len(dropped))
            selected = [r for r in selected if r not in dropped]
    vocab.save(out / VOCAB_FILE)
    keep = {r.image_path for r in selected}
    for r in rendered:
        if r.image_path not in keep:
            (out / r.image_path).unlink(missing_ok=True)

    manifest = Manifest(selected, VOCAB_FILE, config.buckets, root=out)
    manifest.check_invariants()
    manifest.save(out / MANIFEST_FILE)
    logger.info("wrote %d records to %s", len(selected), out / MANIFEST_FILE)
    return manifest
