"""Higher-order pruned CRF over aligned label sequences."""

from .infer import (
    decode,
    decode_corpus,
    decode_labels,
    ensemble_combine,
    forward_backward,
    label_marginals,
    prune,
)
from .kernels import available_backends, get_backend
from .lattice import PrunedLattice
from .model import BOS, ModelStack, TrainConfig, WeightTable
from .train import grad_check, sgd_train

__all__ = [
    "BOS",
    "ModelStack",
    "PrunedLattice",
    "TrainConfig",
    "WeightTable",
    "available_backends",
    "decode",
    "decode_corpus",
    "decode_labels",
    "ensemble_combine",
    "forward_backward",
    "get_backend",
    "grad_check",
    "label_marginals",
    "prune",
    "sgd_train",
]
