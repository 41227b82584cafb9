from .config import ModelConfig
from .graph import LayerGraph, cosine_matrix, knn_graph
from .ops import (
    classify_head,
    forward,
    gelu,
    head_logits,
    linear,
    max_relative_aggregate,
    max_relative_conv,
    softmax,
    stem,
    vig_block,
)
from .rng import Xoshiro256, splitmix64
from .weights import BlockWeights, ModelWeights, init_weights, load_weights, save_weights

__all__ = [
    "ModelConfig",
    "LayerGraph",
    "cosine_matrix",
    "knn_graph",
    "classify_head",
    "forward",
    "gelu",
    "head_logits",
    "linear",
    "max_relative_aggregate",
    "max_relative_conv",
    "softmax",
    "stem",
    "vig_block",
    "Xoshiro256",
    "splitmix64",
    "BlockWeights",
    "ModelWeights",
    "init_weights",
    "load_weights",
    "save_weights",
]
