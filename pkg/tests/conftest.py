from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mathrec.data import BuildConfig, build_manifest
from mathrec.data.synthetic import generate_corpus
from mathrec.latex import normalize, split_tokens

TINY_MODEL = {
    "feature_dim": 32,
    "canvas": [32, 128],
    "encoder_depths": [1, 1],
    "encoder_heads": [1, 2],
    "decoder_layers": 1,
    "decoder_heads": 2,
    "lam_heads": 2,
    "ffn_ratio": 2,
    "max_sequence_length": 48,
    "window_size": 4,
}


def short_formulas(n: int, seed: int = 0, max_tokens: int = 20) -> list[str]:
    pool = generate_corpus(6 * n, seed=seed, max_depth=2)
    out = [f for f in pool if 1 <= len(split_tokens(normalize(f))) <= max_tokens]
    assert len(out) >= n
    return out[:n]


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory) -> Path:
    """24 short formulas rendered once per session; returns the manifest path."""
    root = tmp_path_factory.mktemp("tiny")
    corpus = root / "corpus.txt"
    corpus.write_text("\n".join(short_formulas(24, seed=3)) + "\n")
    build_manifest(corpus, root / "data", BuildConfig(dpis=(60,), buckets=(0, 64)))
    return root / "data" / "manifest.jsonl"


@pytest.fixture
def page() -> np.ndarray:
    """A white RGB image with a few dark strokes."""
    img = np.full((40, 120, 3), 255, np.uint8)
    img[18:22, 10:110] = 0
    img[5:35, 58:62] = 30
    return img


ACCEPTANCE: dict[int, str] = {}


def record_verdict(number: int, title: str, ok: bool, detail: str) -> None:
    """Print and remember one PASS/FAIL line for an acceptance criterion."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
