"""Random formula corpora for fixtures and smoke runs.

Formulas are emitted in deliberately loose spellings (``x^2``, ``\\frac ab``,
``\\le``) so that the normalizer has work to do.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from mathrec.latex import normalize, split_tokens

LETTERS = list("abcdxyznkmt")
DIGITS = list("0123456789")
GREEK = [r"\alpha", r"\beta", r"\gamma", r"\theta", r"\lambda", r"\pi", r"\sigma", r"\omega"]
RELATIONS = ["=", r"\le", r"\ge", r"\ne", "<", ">", r"\approx"]
BINARY = ["+", "-", r"\times", r"\cdot", r"\pm"]


class FormulaGenerator:
    def __init__(self, seed: int = 0, max_depth: int = 3):
        self.rng = np.random.default_rng(seed)
        self.max_depth = max_depth

    def _pick(self, options: Sequence[str]) -> str:
        return options[int(self.rng.integers(len(options)))]

    def atom(self) -> str:
        r = self.rng.random()
        if r < 0.5:
            return self._pick(LETTERS)
        if r < 0.8:
            return "".join(self._pick(DIGITS) for _ in range(int(self.rng.integers(1, 3))))
        return self._pick(GREEK)

    def term(self, depth: int) -> str:
        r = self.rng.random()
        if depth >= self.max_depth or r < 0.45:
            base = self.atom()
            s = self.rng.random()
            if s < 0.15:
                return f"{base}^{self._pick(DIGITS)}"
            if s < 0.25:
                return f"{base}_{self._pick(LETTERS)}"
            if s < 0.32:
                return f"{base}^{{{self.expr(depth + 1, 2)}}}"
            return base
        if r < 0.62:
            num, den = self.expr(depth + 1, 2), self.expr(depth + 1, 2)
            if len(num) == 1 and len(den) == 1 and self.rng.random() < 0.5:
                return rf"\frac {num} {den}"
            return rf"\frac{{{num}}}{{{den}}}"
        if r < 0.72:
            return rf"\sqrt{{{self.expr(depth + 1, 2)}}}"
        if r < 0.84:
            return rf"\left( {self.expr(depth + 1, 3)} \right)"
        if r < 0.92:
            v = self._pick(LETTERS[:4])
            return rf"\sum_{{{v}=1}}^{{n}} {self.term(depth + 1)}"
        return rf"{{{self.atom()} \over {self.atom()}}}"

    def expr(self, depth: int = 0, max_terms: int = 4) -> str:
        n = int(self.rng.integers(1, max_terms + 1))
        parts = [self.term(depth)]
        for _ in range(n - 1):
            parts.append(self._pick(BINARY))
            parts.append(self.term(depth))
        return " ".join(parts)

    def formula(self) -> str:
        lhs = self.expr(0, 3)
        if self.rng.random() < 0.6:
            return f"{lhs} {self._pick(RELATIONS)} {self.expr(0, 3)}"
        return lhs


def generate_corpus(n: int, seed: int = 0, max_depth: int = 3) -> list[str]:
    """``n`` raw formulas whose normalized forms are pairwise distinct."""
    gen = FormulaGenerator(seed, max_depth)
    seen, out = set(), []
    while len(out) < n:
        raw = gen.formula()
        key = normalize(raw)
        if key not in seen:
            seen.add(key)
            out.append(raw)
    return out


def generate_stratified(per_bucket: int, buckets: Sequence[int], seed: int = 0,
                        max_attempts: int = 200_000,
                        exclude: Optional[set] = None) -> list[str]:
    """Distinct raw formulas with ``per_bucket`` normalized-token lengths per bucket."""
    exclude = set() if exclude is None else exclude
    gens = [FormulaGenerator(seed, depth) for depth in (1, 2, 3, 4)]
    filled: list[list[str]] = [[] for _ in range(len(buckets) - 1)]
    seen = set(exclude)
    for attempt in range(max_attempts):
        if all(len(f) >= per_bucket for f in filled):
            break
        gen = gens[attempt % len(gens)]
        raw = gen.formula()
        if gen.rng.random() < 0.5:
            raw = f"{raw} , {gen.formula()}"
        key = normalize(raw)
        if key in seen:
            continue
        length = len(split_tokens(key))
        for b in range(len(buckets) - 1):
            if buckets[b] <= length < buckets[b + 1] and len(filled[b]) < per_bucket:
                filled[b].append(raw)
                seen.add(key)
                break
    return [raw for bucket in filled for raw in bucket]
