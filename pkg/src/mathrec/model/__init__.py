from mathrec.model.config import ModelConfig
from mathrec.model.decoding import Hypothesis, beam_search, generate, greedy_decode
from mathrec.model.losses import (
    LossWeights,
    language_modeling_loss,
    length_loss,
    smooth_l1,
    total_loss,
)
from mathrec.model.network import FormulaRecognizer, LengthAwareModule, preprocess

__all__ = [
    "FormulaRecognizer", "Hypothesis", "LengthAwareModule", "LossWeights", "ModelConfig",
    "beam_search", "generate", "greedy_decode", "language_modeling_loss", "length_loss",
    "preprocess", "smooth_l1", "total_loss",
]
