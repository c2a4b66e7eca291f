"""Token vocabulary and id-level helpers."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from mathrec.errors import EmptyCorpus, InvalidTokenId
from mathrec.latex.normalize import split_tokens

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token <-> id map; ids 0..3 are the special tokens."""

    tokens: tuple[str, ...]
    id_of: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        object.__setattr__(self, "id_of", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    pad = PAD
    bos = BOS
    eos = EOS
    unk = UNK

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        return cls(SPECIAL_TOKENS + tuple(tokens))

    def save(self, path: Union[str, Path]) -> None:
        """One non-special token per line; line ``k`` (0-based) is id ``k + 4``."""
        body = "".join(t + "\n" for t in self.tokens[len(SPECIAL_TOKENS) :])
        Path(path).write_text(body, encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_tokens(text.splitlines())


def build_vocabulary(corpus: Sequence[str], min_frequency: int = 1) -> Vocabulary:
    """Build a vocabulary ordered by descending frequency, then lexicographically."""
    counts = Counter()
    for text in corpus:
        counts.update(split_tokens(text))
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    kept = [t for t, c in counts.items() if c >= min_frequency]
    if not kept:
        raise EmptyCorpus("no tokens survive min_frequency=%d" % min_frequency)
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary.from_tokens(kept)


def tokenize(latex: str, vocab: Vocabulary) -> list[int]:
    """Map normalized LaTeX to ids. Unknown tokens become ``UNK``; no bos/eos."""
    get = vocab.id_of.get
    return [get(t, UNK) for t in split_tokens(latex)]


def detokenize(ids: Sequence[int], vocab: Vocabulary) -> str:
    size = vocab.size
    out = []
    for i in ids:
        i = int(i)
        if not 0 <= i < size:
            raise InvalidTokenId(f"token id {i} outside vocabulary of size {size}")
        out.append(vocab.tokens[i])
    return " ".join(out)


def symbol_counts(ids: Sequence[int], vocab: Vocabulary) -> np.ndarray:
    """Per-symbol multiplicities (length ``vocab.size``); specials count zero."""
    counts = np.bincount(np.asarray(ids, dtype=np.int64), minlength=vocab.size)
    counts = counts.astype(np.float32)
    counts[: len(SPECIAL_TOKENS)] = 0.0
    return counts
