"""Differentiable toy image encoders: a global feature vector plus per-patch features.

Two kinds stand in for an ensemble of pretrained vision encoders:

* ``patch-linear`` — each patch is embedded affinely, the global feature is an
  affine head over the mean patch embedding.
* ``attention-block`` — patch embeddings plus a learned cls token go through one
  single-head softmax self-attention layer (with residual, no layer norm); the
  global feature is the post-attention cls row.

Backprop is hand-derived per kind (`encode_vjp`); the finite-difference oracles in
the test suite guard the derivations.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimsError, ShapeMismatchError
from .mathutil import make_rng

KIND_PATCH_LINEAR = "patch-linear"
KIND_ATTENTION = "attention-block"
KINDS = (KIND_PATCH_LINEAR, KIND_ATTENTION)


@dataclass(frozen=True)
class FeatureSet:
    """Encoder output: one pooled global vector (d,) and an (m, d) patch-feature matrix."""

    global_vec: np.ndarray
    patches: np.ndarray


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    kind: str
    patch_size: int
    embed_dim: int
    input_h: int
    input_w: int
    weights: np.ndarray  # flat float64, layout per `param_shapes`

    @property
    def grid(self):
        return self.input_h // self.patch_size, self.input_w // self.patch_size

    @property
    def patch_count(self):
        gh, gw = self.grid
        return gh * gw


def param_shapes(kind, patch_size, embed_dim):
    """Ordered (name, shape) layout of the flat weight array for a kind."""
    pv = patch_size * patch_size * 3
    d = embed_dim
    if kind == KIND_PATCH_LINEAR:
        return [("w_embed", (d, pv)), ("b_embed", (d,)), ("w_head", (d, d)), ("b_head", (d,))]
    if kind == KIND_ATTENTION:
        return [
            ("w_embed", (d, pv)),
            ("b_embed", (d,)),
            ("cls", (d,)),
            ("w_q", (d, d)),
            ("w_k", (d, d)),
            ("w_v", (d, d)),
        ]
    raise InvalidDimsError(f"unknown encoder kind {kind!r}")


def weight_count(kind, patch_size, embed_dim):
    return sum(int(np.prod(s)) for _, s in param_shapes(kind, patch_size, embed_dim))


def params(spec):
    """Views of the flat weight array, keyed by parameter name."""
    out = {}
    off = 0
    for name, shape in param_shapes(spec.kind, spec.patch_size, spec.embed_dim):
        size = int(np.prod(shape))
        out[name] = spec.weights[off : off + size].reshape(shape)
        off += size
    return out


def init_encoder(kind, patch_size, embed_dim, input_h, input_w, seed, name=None):
    """Deterministically initialize an encoder; weight matrices ~ N(0, 1/fan_in), biases zero."""
    if kind not in KINDS:
        raise InvalidDimsError(f"unknown encoder kind {kind!r}")
    if patch_size < 1 or embed_dim < 2 or input_h < patch_size or input_w < patch_size:
        raise InvalidDimsError(f"bad encoder dims: patch={patch_size} d={embed_dim} "
                               f"input={input_h}x{input_w}")
    if input_h % patch_size or input_w % patch_size:
        raise InvalidDimsError(f"input {input_h}x{input_w} not divisible by patch {patch_size}")
    rng = make_rng(seed, 0xE0C0DE)
    pv = patch_size * patch_size * 3
    chunks = []
    for pname, shape in param_shapes(kind, patch_size, embed_dim):
        if pname.startswith("b_"):
            chunks.append(np.zeros(int(np.prod(shape))))
            continue
        fan_in = pv if pname == "w_embed" else embed_dim
        chunks.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=int(np.prod(shape))))
    weights = np.concatenate(chunks)
    if name is None:
        name = f"{kind}-p{patch_size}-d{embed_dim}-s{seed}"
    return EncoderSpec(name, kind, patch_size, embed_dim, input_h, input_w, weights)


def _check_input(spec, img):
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (spec.input_h, spec.input_w, 3):
        raise ShapeMismatchError(
            f"encoder {spec.name} expects {(spec.input_h, spec.input_w, 3)}, got {img.shape}")
    return img


def _to_patches(spec, img):
    # (m, p*p*3) rows in row-major grid order; within a patch (y, x, channel) order
    p = spec.patch_size
    gh, gw = spec.grid
    return img.reshape(gh, p, gw, p, 3).transpose(0, 2, 1, 3, 4).reshape(gh * gw, p * p * 3)


def _from_patches(spec, rows):
    p = spec.patch_size
    gh, gw = spec.grid
    return rows.reshape(gh, gw, p, p, 3).transpose(0, 2, 1, 3, 4).reshape(spec.input_h, spec.input_w, 3)


def _attention_forward(w, tokens):
    # residual on patch rows keeps locality; the cls row is the pure attention mix,
    # which keeps the global feature content-driven at any input scale
    d = tokens.shape[1]
    q = tokens @ w["w_q"].T
    k = tokens @ w["w_k"].T
    v = tokens @ w["w_v"].T
    scores = q @ k.T / np.sqrt(d)
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=1, keepdims=True)
    mixed = attn @ v
    out = mixed.copy()
    out[1:] += tokens[1:]
    return out, (q, k, v, attn)


def encode(spec, img):
    """Run the encoder forward; returns a FeatureSet (global (d,), patches (m, d))."""
    img = _check_input(spec, img)
    w = params(spec)
    rows = _to_patches(spec, img) @ w["w_embed"].T + w["b_embed"]
    if spec.kind == KIND_PATCH_LINEAR:
        global_vec = w["w_head"] @ rows.mean(axis=0) + w["b_head"]
        return FeatureSet(global_vec=global_vec, patches=rows)
    tokens = np.vstack([w["cls"][None, :], rows])
    out, _ = _attention_forward(w, tokens)
    return FeatureSet(global_vec=out[0].copy(), patches=out[1:].copy())


def encode_vjp(spec, img, d_global, d_patches):
    """Exact input gradient of <global, d_global> + <patches, d_patches> for this encoder."""
    img = _check_input(spec, img)
    d_global = np.asarray(d_global, dtype=np.float64)
    d_patches = np.asarray(d_patches, dtype=np.float64)
    m, d = spec.patch_count, spec.embed_dim
    if d_global.shape != (d,) or d_patches.shape != (m, d):
        raise ShapeMismatchError(
            f"cotangent shapes {d_global.shape}/{d_patches.shape} do not match ({d},)/({m}, {d})")
    w = params(spec)

    if spec.kind == KIND_PATCH_LINEAR:
        # global = w_head @ mean(rows) + b_head distributes w_head^T d_global over all rows
        d_rows = d_patches + (w["w_head"].T @ d_global)[None, :] / m
    else:
        rows = _to_patches(spec, img) @ w["w_embed"].T + w["b_embed"]
        tokens = np.vstack([w["cls"][None, :], rows])
        _, (q, k, v, attn) = _attention_forward(w, tokens)
        d_mixed = np.vstack([d_global[None, :], d_patches])
        d_tokens = np.vstack([np.zeros((1, d)), d_patches])  # residual on patch rows only
        d_attn = d_mixed @ v.T
        d_v = attn.T @ d_mixed
        # softmax rows: dS = A * (dA - sum(dA * A, row))
        d_scores = attn * (d_attn - (d_attn * attn).sum(axis=1, keepdims=True))
        d_q = d_scores @ k / np.sqrt(d)
        d_k = d_scores.T @ q / np.sqrt(d)
        d_tokens += d_q @ w["w_q"] + d_k @ w["w_k"] + d_v @ w["w_v"]
        d_rows = d_tokens[1:]

    return _from_patches(spec, d_rows @ w["w_embed"])
