"""Generalized linear models trained by minibatched SGD."""

from .model import (
    LINKS,
    Dataset,
    GlmModel,
    TrainConfig,
    discrepancy,
    link_inverse,
    link_inverse_exact,
    log_likelihood,
    metrics,
    predict,
    score,
)
from .sgd import minibatch_indices, sgd_step, train, train_private, train_public
from .synth import SynthProblem, synth_binary, synth_linear, synth_poisson

__all__ = [
    "LINKS", "Dataset", "GlmModel", "TrainConfig", "SynthProblem",
    "discrepancy", "link_inverse", "link_inverse_exact", "log_likelihood", "metrics", "predict", "score",
    "minibatch_indices", "sgd_step", "train", "train_private", "train_public",
    "synth_binary", "synth_linear", "synth_poisson",
]
