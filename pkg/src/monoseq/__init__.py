"""monoseq: trainable monotone string-to-string transduction.

Pipeline: load/synthesize pair corpora, learn a monotone character alignment
by EM, train either a higher-order pruned CRF or a joint n-gram baseline on
the aligned sequences, decode, and evaluate word accuracy by input length.
"""

from ._version import VERSION as __version__
from .aligner import AlignedPair, AlignmentModel, align_corpus, em_train, viterbi_align
from .corpus import (
    Corpus,
    RuleSpec,
    SplitSpec,
    StringPair,
    load_pairs,
    load_path,
    save_pairs,
    save_path,
    split,
    synth_generate,
)
from .evaluate import EvalReport, make_report, report_emit, wac, wac_by_length
from .features import FeatureConfig, InternTable, extract
from .jointngram import GraphoneLM, beam_decode, build_graphones, lm_train
from .pcrf import (
    BOS,
    ModelStack,
    PrunedLattice,
    TrainConfig,
    WeightTable,
    decode,
    ensemble_combine,
    forward_backward,
    grad_check,
    prune,
    sgd_train,
)

__all__ = [
    "__version__",
    "AlignedPair",
    "AlignmentModel",
    "BOS",
    "Corpus",
    "EvalReport",
    "FeatureConfig",
    "GraphoneLM",
    "InternTable",
    "ModelStack",
    "PrunedLattice",
    "RuleSpec",
    "SplitSpec",
    "StringPair",
    "TrainConfig",
    "WeightTable",
    "align_corpus",
    "beam_decode",
    "build_graphones",
    "decode",
    "em_train",
    "ensemble_combine",
    "extract",
    "forward_backward",
    "grad_check",
    "lm_train",
    "load_pairs",
    "load_path",
    "make_report",
    "prune",
    "report_emit",
    "save_pairs",
    "save_path",
    "sgd_train",
    "split",
    "synth_generate",
    "viterbi_align",
    "wac",
    "wac_by_length",
]
