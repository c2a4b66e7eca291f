import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mathrec.data.synthetic import generate_corpus
from mathrec.errors import EmptyCorpus, InvalidTokenId, UnbalancedBraces
from mathrec.latex import (
    BOS,
    EOS,
    PAD,
    UNK,
    Vocabulary,
    build_vocabulary,
    detokenize,
    load_rules,
    normalize,
    split_tokens,
    symbol_counts,
    tokenize,
    try_normalize,
)
from mathrec.latex.normalize import RewriteRule, parse_rules


@pytest.mark.parametrize("raw, expected", [
    (r"\frac a b", r"\frac { a } { b }"),
    (r"\frac{a}{b}", r"\frac { a } { b }"),
    ("x^{2}", "x ^ { 2 }"),
    ("x^2", "x ^ { 2 }"),
    (r"a \le b", r"a \leq b"),
    (r"a\ne b", r"a \neq b"),
    (r"{a \over b}", r"{ \frac { a } { b } }"),
    (r"{n \choose k}", r"{ \binom { n } { k } }"),
    (r"\sqrt[3]x + y_i^\frac12", r"\sqrt [ 3 ] { x } + y _ { i } ^ { \frac { 1 } { 2 } }"),
    ("a % comment\n+ b", "a + b"),
    (r"a\ b", "a ~ b"),
    (r"\lbrace x \rbrace", r"\{ x \}"),
    (r"\lvert x \rvert", "| x |"),
    ("   ", ""),
    ("", ""),
])
def test_normalize_examples(raw, expected):
    assert normalize(raw) == expected


def test_escaped_backslash_blocks_synonym():
    # "\\le" is a row break followed by the letters l, e; not \le
    assert normalize(r"a \\le b") == r"a \\ l e b"


def test_synonym_does_not_touch_longer_commands():
    assert normalize(r"\left( x \right)") == r"\left ( x \right )"
    assert normalize(r"\neg x") == r"\neg x"


def test_unbalanced_braces():
    with pytest.raises(UnbalancedBraces):
        normalize("{ a")
    with pytest.raises(UnbalancedBraces):
        normalize("a }")
    assert try_normalize("{ a") is None


def test_escaped_braces_are_not_groups():
    assert normalize(r"\{ a") == r"\{ a"


def test_rule_replacement_is_literal():
    rule = RewriteRule(re.compile("x"), r"\g<0>\1")
    assert rule.apply("x") == r"\g<0>\1"


def test_parse_rules_skips_comments():
    rules = parse_rules(["# header", "", "a\tb"])
    assert len(rules) == 1 and rules[0].apply("a") == "b"


def test_load_rules_default_matches_packaged():
    assert len(load_rules()) > 10


def test_split_tokens():
    assert split_tokens(r"\alpha_1+\{") == [r"\alpha", "_", "1", "+", r"\{"]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10_000))
def test_normalize_idempotent_on_generated(seed):
    for raw in generate_corpus(3, seed=seed, max_depth=3):
        once = normalize(raw)
        assert normalize(once) == once


ALPHABET = ["a", "1", "+", "^", "_", "{", "}", r"\frac", r"\sqrt", r"\over", r"\le", " ", "[", "]"]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(ALPHABET), max_size=12))
def test_normalize_total_and_idempotent(parts):
    raw = " ".join(parts)
    out = try_normalize(raw)
    if out is not None:
        assert normalize(out) == out


def test_vocabulary_build_and_roundtrip(tmp_path):
    corpus = [normalize(f) for f in generate_corpus(50, seed=1)]
    vocab = build_vocabulary(corpus)
    assert vocab.tokens[:4] == ("<pad>", "<s>", "</s>", "<unk>")
    for latex in corpus:
        ids = tokenize(latex, vocab)
        assert UNK not in ids
        assert detokenize(ids, vocab) == latex
    vocab.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt") == vocab


def test_vocabulary_ordering_is_frequency_then_token():
    vocab = build_vocabulary(["b a a", "c b a"])
    assert vocab.tokens[4:] == ("a", "b", "c")


def test_min_frequency_and_unk():
    vocab = build_vocabulary(["a a b"], min_frequency=2)
    assert tokenize("a b", vocab) == [vocab.id_of["a"], UNK]
    with pytest.raises(EmptyCorpus):
        build_vocabulary(["a"], min_frequency=5)
    with pytest.raises(EmptyCorpus):
        build_vocabulary([])


def test_detokenize_is_a_plain_join_and_rejects_bad_ids():
    vocab = Vocabulary.from_tokens(["x", "y"])
    assert detokenize([4, 5], vocab) == "x y"
    assert detokenize([], vocab) == ""
    assert detokenize([BOS, 4, EOS], vocab) == "<s> x </s>"
    with pytest.raises(InvalidTokenId):
        detokenize([99], vocab)
    with pytest.raises(InvalidTokenId):
        detokenize([-1], vocab)


def test_tokenize_examples():
    vocab = build_vocabulary([r"\frac { a } { b }", "a + b"])
    frac = tokenize(r"\frac { a } { b }", vocab)
    assert [vocab.tokens[i] for i in frac] == [r"\frac", "{", "a", "}", "{", "b", "}"]
    assert tokenize("", vocab) == []
    assert [vocab.tokens[i] for i in tokenize("a + b", vocab)] == ["a", "+", "b"]
    counts = symbol_counts(frac, vocab)
    assert counts.sum() == 7 and counts[vocab.id_of["{"]] == 2 and counts[vocab.id_of[r"\frac"]] == 1


def test_vocabulary_size_examples():
    assert build_vocabulary(["a a b"]).size == 6
    assert build_vocabulary(["a a b"], min_frequency=2).size == 5
    with pytest.raises(EmptyCorpus):
        build_vocabulary([""])


def test_symbol_counts_ignores_specials():
    vocab = Vocabulary.from_tokens(["x", "y"])
    counts = symbol_counts([4, 4, 5, UNK, PAD], vocab)
    assert counts.tolist() == [0, 0, 0, 0, 2, 1]
