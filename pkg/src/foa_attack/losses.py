"""Per-encoder alignment loss: coarse cosine term plus the clustered transport term.

total = coarse + eta * fine. The patch-side gradient chains the frozen-plan
transport gradient through the straight-through k-means gradient; the global-side
gradient is the cosine-loss gradient.
"""

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterResult, kmeans, kmeans_vjp
from .errors import ZeroNormError
from .mathutil import NORM_EPS
from .transport import sinkhorn_loss_grad


@dataclass(frozen=True)
class LossBreakdown:
    coarse: float
    fine: float
    total: float
    eta: float


@dataclass(frozen=True)
class TargetFeatures:
    """Cached target-side state: global feature plus cluster centers of the patch features."""

    global_vec: np.ndarray
    clusters: ClusterResult


def prepare_target(feats, n, rng):
    """Cluster a target FeatureSet once; reused across attack iterations."""
    return TargetFeatures(global_vec=feats.global_vec,
                          clusters=kmeans(feats.patches, n, rng))


def coarse_loss_grad(x, y):
    """1 - cos(x, y) and its gradient in x."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    nx = np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if nx < NORM_EPS or ny < NORM_EPS:
        raise ZeroNormError(f"coarse loss undefined for near-zero norms ({nx:.3e}, {ny:.3e})")
    cos = float(np.dot(x, y) / (nx * ny))
    d_x = -(y / (nx * ny) - cos * x / (nx * nx))
    return 1.0 - cos, d_x


def foa_loss(adv_feats, target, eta, lam, rng, include_coarse=True):
    """Alignment loss of one encoder's adversarial features against cached target features.

    Returns (LossBreakdown, d_global, d_patches). `include_coarse=False` ablates the
    global term (coarse contributes 0 and d_global is zero).
    """
    n = target.clusters.centers.shape[0]
    if include_coarse:
        coarse, d_global = coarse_loss_grad(adv_feats.global_vec, target.global_vec)
    else:
        coarse = 0.0
        d_global = np.zeros_like(np.asarray(adv_feats.global_vec, dtype=np.float64))

    adv_clusters = kmeans(adv_feats.patches, n, rng)
    fine, d_centers = sinkhorn_loss_grad(adv_clusters.centers, target.clusters.centers, lam=lam)
    d_patches = eta * kmeans_vjp(adv_feats.patches, adv_clusters, d_centers)

    breakdown = LossBreakdown(coarse=coarse, fine=fine, total=coarse + eta * fine, eta=eta)
    return breakdown, d_global, d_patches
