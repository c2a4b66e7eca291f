from mathrec.latex.normalize import load_rules, normalize, split_tokens, try_normalize
from mathrec.latex.vocab import (
    BOS,
    EOS,
    PAD,
    SPECIAL_TOKENS,
    UNK,
    Vocabulary,
    build_vocabulary,
    detokenize,
    symbol_counts,
    tokenize,
)

__all__ = [
    "BOS", "EOS", "PAD", "UNK", "SPECIAL_TOKENS", "Vocabulary", "build_vocabulary",
    "detokenize", "load_rules", "normalize", "split_tokens", "symbol_counts",
    "tokenize", "try_normalize",
]
