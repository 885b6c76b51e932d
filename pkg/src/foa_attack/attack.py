"""The sign-gradient attack loop with crop augmentation and dynamic ensemble weighting.

Per step: sample one crop, apply it to both the adversarial iterate and the target,
push both through every encoder, assemble per-encoder alignment losses and input
gradients, reweight the ensemble by learning speed, take a signed descent step on
the perturbation, and project back into the L-inf ball and pixel range.

`run_progressive` escalates the cluster count when the final loss stays above the
failure threshold, continuing from the perturbation found so far.
"""

from dataclasses import dataclass, field

import numpy as np

from .encoders import encode, encode_vjp
from .ensemble import init_state, update_weights, weighted_total
from .errors import DegenerateCropError, NonFiniteLossError, ShapeMismatchError, ValidationError
from .losses import TargetFeatures, foa_loss, prepare_target
from .mathutil import bilinear_resize, bilinear_resize_vjp, make_rng

# stream tags for deriving independent rng streams from one seed
_CROP_STREAM = 0x1
_TARGET_STREAM = 0x2
_KMEANS_STREAM = 0x3


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 16 / 255
    step_size: float = 1 / 255
    iterations: int = 300
    eta: float = 0.2
    lam: float = 0.1
    temperature: float = 1.0
    w_init: float = 1.0
    cluster_schedule: tuple = (3, 5)
    crop_scale_min: float = 0.5
    crop_scale_max: float = 1.0
    seed: int = 0
    fail_threshold: float = 0.1

    def __post_init__(self):
        if not (0 < self.step_size <= self.epsilon <= 1):
            raise ValidationError(
                f"need 0 < step_size <= epsilon <= 1, got step={self.step_size} eps={self.epsilon}")
        if self.iterations < 0:
            raise ValidationError(f"iterations must be >= 0, got {self.iterations}")
        schedule = tuple(int(c) for c in self.cluster_schedule)
        if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ValidationError(f"cluster schedule must be strictly increasing, got {schedule}")
        if any(c < 1 for c in schedule):
            raise ValidationError(f"cluster counts must be >= 1, got {schedule}")
        object.__setattr__(self, "cluster_schedule", schedule)
        if not (0 < self.crop_scale_min <= self.crop_scale_max <= 1):
            raise ValidationError(
                f"need 0 < crop_min <= crop_max <= 1, got {self.crop_scale_min}/{self.crop_scale_max}")
        if self.eta < 0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}")
        if not self.lam > 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.fail_threshold < 0:
            raise ValidationError(f"fail threshold must be >= 0, got {self.fail_threshold}")


@dataclass(frozen=True)
class CropParams:
    top: int
    left: int
    crop_h: int
    crop_w: int


@dataclass(frozen=True)
class StepRecord:
    step: int
    coarse: np.ndarray  # per-encoder
    fine: np.ndarray
    totals: np.ndarray
    speeds: np.ndarray
    weights: np.ndarray
    weighted_total: float
    delta_linf: float


@dataclass(frozen=True)
class AttackResult:
    adv_image: np.ndarray
    delta: np.ndarray
    final_losses: np.ndarray
    loss_trace: list = field(repr=False)
    clusters_used: int = 0
    succeeded_on_surrogates: bool = False


def sample_crop_params(rng, h, w, scale_min, scale_max):
    """Draw scale then offsets; the draw order is fixed for reproducibility."""
    if not (0 < scale_min <= scale_max <= 1):
        raise ValidationError(f"crop scales must satisfy 0 < min <= max <= 1, "
                              f"got {scale_min}/{scale_max}")
    scale = scale_min + (scale_max - scale_min) * rng.random()
    crop_h = int(np.floor(scale * h))
    crop_w = int(np.floor(scale * w))
    if crop_h < 2 or crop_w < 2:
        raise DegenerateCropError(f"crop {crop_h}x{crop_w} too small (scale {scale:.4f})")
    top = int(rng.integers(0, h - crop_h + 1))
    left = int(rng.integers(0, w - crop_w + 1))
    return CropParams(top=top, left=left, crop_h=crop_h, crop_w=crop_w)


def apply_crop(img, params):
    """Crop at params and bilinear-resize back to the original size."""
    h, w = img.shape[0], img.shape[1]
    window = img[params.top:params.top + params.crop_h,
                 params.left:params.left + params.crop_w]
    return bilinear_resize(window, h, w)


def crop_vjp(params, h, w, d_out):
    """Adjoint of apply_crop for an image of size (h, w)."""
    if d_out.shape[:2] != (h, w):
        raise ShapeMismatchError(f"cotangent shape {d_out.shape} != image {(h, w)}")
    d_window = bilinear_resize_vjp(params.crop_h, params.crop_w, d_out)
    d_img = np.zeros((h, w, d_out.shape[2]))
    d_img[params.top:params.top + params.crop_h,
          params.left:params.left + params.crop_w] = d_window
    return d_img


def random_crop(img, rng, scale_min, scale_max):
    """Random crop-and-resize augmentation; returns the image and replayable params."""
    img = np.asarray(img, dtype=np.float64)
    params = sample_crop_params(rng, img.shape[0], img.shape[1], scale_min, scale_max)
    return apply_crop(img, params), params


def _prepare_targets(tar, encoders, clusters, seed):
    """Per-encoder target patch clusters, cached from the uncropped target image."""
    cached = []
    for j, spec in enumerate(encoders):
        feats = encode(spec, bilinear_resize(tar, spec.input_h, spec.input_w))
        rng = make_rng(seed, _TARGET_STREAM, j, clusters)
        cached.append(prepare_target(feats, clusters, rng))
    return cached


def run_attack(nat, tar, encoders, cfg, clusters=None, init_delta=None, on_step=None,
               include_coarse=True, dynamic_weighting=True):
    """Run the full attack loop; deterministic given cfg.seed.

    `clusters` defaults to the first entry of cfg.cluster_schedule. `init_delta`
    lets a progressive stage continue from an earlier perturbation. `on_step` is an
    instrumentation hook called as on_step(step, delta, adv_image) after every
    iteration. The include_coarse / dynamic_weighting switches exist for ablations.
    """
    nat = np.asarray(nat, dtype=np.float64)
    tar = np.asarray(tar, dtype=np.float64)
    if nat.shape != tar.shape or nat.ndim != 3 or nat.shape[2] != 3:
        raise ShapeMismatchError(f"natural/target shapes differ: {nat.shape} vs {tar.shape}")
    if not encoders:
        raise ValidationError("need at least one encoder")
    if clusters is None:
        clusters = cfg.cluster_schedule[0]
    t = len(encoders)
    h, w = nat.shape[0], nat.shape[1]

    target_cache = _prepare_targets(tar, encoders, clusters, cfg.seed)
    state = init_state(t, w_init=cfg.w_init, temperature=cfg.temperature)
    crop_rng = make_rng(cfg.seed, _CROP_STREAM, clusters)

    delta = np.zeros_like(nat) if init_delta is None else np.asarray(init_delta, dtype=np.float64).copy()
    adv = np.clip(nat + delta, 0.0, 1.0)
    trace = []
    totals = np.zeros(t)

    for step in range(cfg.iterations):
        params = sample_crop_params(crop_rng, h, w, cfg.crop_scale_min, cfg.crop_scale_max)
        adv_crop = apply_crop(adv, params)
        tar_crop = apply_crop(tar, params)

        coarse = np.zeros(t)
        fine = np.zeros(t)
        totals = np.zeros(t)
        grads = []
        for j, spec in enumerate(encoders):
            adv_in = bilinear_resize(adv_crop, spec.input_h, spec.input_w)
            tar_in = bilinear_resize(tar_crop, spec.input_h, spec.input_w)
            tar_global = encode(spec, tar_in).global_vec
            adv_feats = encode(spec, adv_in)
            target = TargetFeatures(global_vec=tar_global,
                                    clusters=target_cache[j].clusters)
            km_rng = make_rng(cfg.seed ^ step ^ j, _KMEANS_STREAM)
            breakdown, d_global, d_patches = foa_loss(
                adv_feats, target, eta=cfg.eta, lam=cfg.lam, rng=km_rng,
                include_coarse=include_coarse)
            coarse[j] = breakdown.coarse
            fine[j] = breakdown.fine
            totals[j] = breakdown.total
            d_enc_input = encode_vjp(spec, adv_in, d_global, d_patches)
            d_crop = bilinear_resize_vjp(h, w, d_enc_input)
            grads.append(crop_vjp(params, h, w, d_crop))

        if not np.all(np.isfinite(totals)):
            raise NonFiniteLossError(f"non-finite loss at step {step}: {totals}")

        if dynamic_weighting:
            state = update_weights(state, totals)
            speeds, weights = state.speeds, state.weights
        else:
            speeds = np.ones(t)
            weights = np.full(t, cfg.w_init)

        total, grad = weighted_total(totals, grads, weights)
        delta = np.clip(delta + cfg.step_size * np.sign(-grad), -cfg.epsilon, cfg.epsilon)
        adv = np.clip(nat + delta, 0.0, 1.0)

        trace.append(StepRecord(step=step, coarse=coarse, fine=fine, totals=totals,
                                speeds=speeds.copy(), weights=weights.copy(),
                                weighted_total=total,
                                delta_linf=float(np.abs(delta).max())))
        if on_step is not None:
            on_step(step, delta, adv)

    return AttackResult(adv_image=adv, delta=delta, final_losses=totals,
                        loss_trace=trace, clusters_used=clusters,
                        succeeded_on_surrogates=bool(totals.mean() <= cfg.fail_threshold))


def run_progressive(nat, tar, encoders, cfg, on_step=None,
                    include_coarse=True, dynamic_weighting=True):
    """Escalate through cfg.cluster_schedule until the mean final loss clears the threshold."""
    delta = None
    result = None
    for clusters in cfg.cluster_schedule:
        result = run_attack(nat, tar, encoders, cfg, clusters=clusters, init_delta=delta,
                            on_step=on_step, include_coarse=include_coarse,
                            dynamic_weighting=dynamic_weighting)
        delta = result.delta
        if result.final_losses.size and result.final_losses.mean() <= cfg.fail_threshold:
            break
    return result
