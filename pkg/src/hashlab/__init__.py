"""hashlab: learn binary image codes with a small conv net and a slicing
hash head under a triplet ranking loss, then search and score them in
Hamming space.

The compiled kernel extension is optional; set HASHLAB_NO_EXT=1 to force the
pure numpy fallback (``hashlab._kernels.BACKEND`` names the active one).
"""

from ._kernels import BACKEND
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    HashlabError,
    InfeasibleError,
    LengthMismatch,
    NumericError,
    ShapeError,
    UndefinedError,
)
from .head import HashHeadSpec, head_backward, head_forward, partition_slices, quantize
from .index import BitCode, CodeDatabase, hamming, pack, pack_many, radius_search, rank_all, unpack, unpack_many
from .metrics import (
    MetricReport,
    RelevanceRule,
    average_precision,
    evaluate,
    mean_average_precision,
    precision_at_topk,
    precision_recall_curve,
    precision_within_radius,
)
from .model import ModelSpec, encode, init_model_params, model_backward, model_forward
from .nn import LayerSpec, NetworkSpec, ParamStore, infer_shapes, init_params, piecewise_threshold, sigmoid_beta
from .train import TrainConfig, TrainState, epsilon_at, sgd_momentum_step, train, train_step
from .triplet import (
    LossValue,
    Triplet,
    hamming_triplet_loss,
    relaxed_triplet_loss,
    sample_triplets,
    triplet_subgradients,
    triplets_from_pairs,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BitCode",
    "CodeDatabase",
    "ConfigError",
    "DomainError",
    "FormatError",
    "HashHeadSpec",
    "HashlabError",
    "InfeasibleError",
    "LayerSpec",
    "LengthMismatch",
    "LossValue",
    "MetricReport",
    "ModelSpec",
    "NetworkSpec",
    "NumericError",
    "ParamStore",
    "RelevanceRule",
    "ShapeError",
    "Triplet",
    "TrainConfig",
    "TrainState",
    "UndefinedError",
    "average_precision",
    "encode",
    "epsilon_at",
    "evaluate",
    "hamming",
    "hamming_triplet_loss",
    "head_backward",
    "head_forward",
    "infer_shapes",
    "init_model_params",
    "init_params",
    "mean_average_precision",
    "model_backward",
    "model_forward",
    "pack",
    "pack_many",
    "partition_slices",
    "piecewise_threshold",
    "precision_at_topk",
    "precision_recall_curve",
    "precision_within_radius",
    "quantize",
    "radius_search",
    "rank_all",
    "relaxed_triplet_loss",
    "sample_triplets",
    "sgd_momentum_step",
    "sigmoid_beta",
    "train",
    "train_step",
    "triplet_subgradients",
    "triplets_from_pairs",
    "unpack",
    "unpack_many",
]
