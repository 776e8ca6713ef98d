"""Embedded feature selection for neural learning-to-rank.

A small reverse-mode autodiff core (:mod:`ltrfs.tensor`), LETOR data
handling (:mod:`ltrfs.data`), a listwise neural ranker (:mod:`ltrfs.ltr`),
seven selectors (:mod:`ltrfs.selectors`) and an experiment harness.
"""

from .config import ConfigError, ExperimentConfig, load_config
from .data import Dataset, ParseError, QueryGroup, SyntheticSpec, generate_synthetic, parse_svmlight
from .ltr import DNN, fit, listwise_softmax_ce, ndcg_at_k
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DNN", "Dataset", "ExperimentConfig", "ParseError", "QueryGroup",
    "SyntheticSpec", "Tensor", "fit", "generate_synthetic", "listwise_softmax_ce",
    "load_config", "ndcg_at_k", "no_grad", "parse_svmlight",
]
