"""Feature-optimal-alignment adversarial attack engine.

Aligns the global and clustered local features of an adversarial image with a
target image across an ensemble of differentiable encoders: cosine global loss,
entropic-transport local loss over k-means centers, dynamic ensemble weighting,
and a signed-gradient loop under an L-inf budget.
"""

from .attack import (
    AttackConfig,
    AttackResult,
    CropParams,
    random_crop,
    run_attack,
    run_progressive,
)
from .clustering import ClusterResult, kmeans, kmeans_vjp
from .encoders import (
    KIND_ATTENTION,
    KIND_PATCH_LINEAR,
    EncoderSpec,
    FeatureSet,
    encode,
    encode_vjp,
    init_encoder,
)
from .ensemble import EnsembleState, init_state, update_weights, weighted_total
from .losses import LossBreakdown, TargetFeatures, coarse_loss_grad, foa_loss, prepare_target
from .mathutil import bilinear_resize, bilinear_resize_vjp, cosine, make_rng, softmax
from .transport import TransportPlan, cost_matrix, exact_ot_bruteforce, sinkhorn, sinkhorn_loss_grad

__all__ = [
    "AttackConfig", "AttackResult", "CropParams", "random_crop", "run_attack",
    "run_progressive", "ClusterResult", "kmeans", "kmeans_vjp", "KIND_ATTENTION",
    "KIND_PATCH_LINEAR", "EncoderSpec", "FeatureSet", "encode", "encode_vjp",
    "init_encoder", "EnsembleState", "init_state", "update_weights", "weighted_total",
    "LossBreakdown", "TargetFeatures", "coarse_loss_grad", "foa_loss", "prepare_target",
    "bilinear_resize", "bilinear_resize_vjp", "cosine", "make_rng", "softmax",
    "TransportPlan", "cost_matrix", "exact_ot_bruteforce", "sinkhorn", "sinkhorn_loss_grad",
]

__version__ = "0.1.0"
