"""Small numerical kernels used everywhere: cosine, softmax, bilinear resampling, RNG streams.

All arithmetic is float64. Images are (H, W, 3) arrays with values in [0, 1].
"""

import numpy as np

from .errors import (
    EmptyImageError,
    NonPositiveTemperatureError,
    ShapeMismatchError,
    ZeroNormError,
)

NORM_EPS = 1e-12

_U64 = 0xFFFFFFFFFFFFFFFF


def _mix64(x):
    # splitmix64 finalizer; spreads stream tags over the Philox key space
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _U64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _U64
    return x ^ (x >> 31)


def make_rng(seed, *stream):
    """Deterministic counter-based generator (Philox) for a (seed, stream...) pair.

    Streams with the same seed but different tags are independent, and the draw
    sequence is identical across platforms and process runs.
    """
    hi = 0
    for tag in stream:
        hi = _mix64(hi ^ (int(tag) & _U64))
    key = (hi << 64) | (int(seed) & _U64)
    return np.random.Generator(np.random.Philox(key=key))


def cosine(u, v):
    """Cosine similarity <u,v> / (|u||v|), clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 1:
        raise ShapeMismatchError(f"cosine needs equal-length vectors, got {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < NORM_EPS or nv < NORM_EPS:
        raise ZeroNormError(f"cosine undefined for near-zero norm ({nu:.3e}, {nv:.3e})")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def softmax(v, temperature=1.0):
    """Temperature softmax with max-subtraction for stability."""
    if not temperature > 0:
        raise NonPositiveTemperatureError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(v, dtype=np.float64) / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input must be finite")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _sample_positions(n_out, n_in):
    # corner-aligned: output index range [0, n_out-1] maps linearly onto [0, n_in-1]
    if n_out == 1:
        return np.zeros(1)
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1))


def _resample_matrix(n_out, n_in):
    """Dense (n_out, n_in) interpolation-weight matrix; rows sum to 1."""
    pos = _sample_positions(n_out, n_in)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    w = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    w[rows, lo] += 1.0 - frac
    w[rows, hi] += frac
    return w


def bilinear_resize(img, out_h, out_w):
    """Corner-aligned bilinear resize of an (H, W, C) image. Linear in the input."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise EmptyImageError(f"expected nonempty (H, W, C) image, got shape {img.shape}")
    if out_h < 1 or out_w < 1:
        raise EmptyImageError(f"output dims must be >= 1, got {out_h}x{out_w}")
    wr = _resample_matrix(out_h, img.shape[0])
    wc = _resample_matrix(out_w, img.shape[1])
    return np.einsum("ay,bx,yxc->abc", wr, wc, img, optimize=True)


def bilinear_resize_vjp(in_h, in_w, out_grad):
    """Adjoint of bilinear_resize: maps an (out_h, out_w, C) cotangent back to (in_h, in_w, C)."""
    out_grad = np.asarray(out_grad, dtype=np.float64)
    if out_grad.ndim != 3:
        raise ShapeMismatchError(f"cotangent must be (H, W, C), got shape {out_grad.shape}")
    if in_h < 1 or in_w < 1:
        raise ShapeMismatchError(f"input dims must be >= 1, got {in_h}x{in_w}")
    wr = _resample_matrix(out_grad.shape[0], in_h)
    wc = _resample_matrix(out_grad.shape[1], in_w)
    return np.einsum("ay,bx,abc->yxc", wr, wc, out_grad, optimize=True)
