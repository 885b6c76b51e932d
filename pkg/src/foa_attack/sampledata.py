"""Seeded synthetic data for the desk-scale attack and transfer suites.

The toy encoders pool patch-level statistics, so the content they can measure is
patch-aligned texture. Target images are stationary mixtures of a few bright
binary tiles (every crop sees the same statistics, and the patch features form
real clusters, one per tile); natural images are dark with a faint tile mixture,
which keeps their feature norms small and leaves the perturbation budget room to
rotate them toward a target.
"""

import numpy as np

from .encoders import init_encoder
from .mathutil import make_rng

TILE_PERIOD = 4


def _tile_mixture(rng, h, w, tiles, period=TILE_PERIOD):
    """Per-block random choice among the given tiles; stationary texture."""
    img = np.zeros((h, w, 3))
    for by in range(h // period):
        for bx in range(w // period):
            t = tiles[int(rng.integers(len(tiles)))]
            img[by * period:(by + 1) * period, bx * period:(bx + 1) * period] = t
    return img


def _binary_tiles(rng, count, p_bright, amp, period=TILE_PERIOD):
    return [amp * (rng.random((period, period, 3)) < p_bright).astype(float)
            for _ in range(count)]


def make_natural_image(seed, h=32, w=32):
    """Dark image with a faint two-tile texture and a little pixel noise."""
    rng = make_rng(seed, 0xA0)
    img = 0.02 + _tile_mixture(rng, h, w, _binary_tiles(rng, 2, 0.5, 0.05))
    img += 0.015 * make_rng(seed, 0xA1).random((h, w, 3))
    return np.clip(img, 0.0, 1.0)


def make_target_image(seed, h=32, w=32):
    """Bright three-tile texture mixture on a dark base."""
    rng = make_rng(seed, 0xB0)
    img = 0.02 + _tile_mixture(rng, h, w, _binary_tiles(rng, 3, 0.3, 0.97))
    return np.clip(img, 0.0, 1.0)


def make_image_pair(seed, h=32, w=32):
    return make_natural_image(seed, h, w), make_target_image(seed, h, w)


def default_surrogates():
    """The two surrogate encoders of the desk-scale transfer suite.

    A fast, low-dimensional linear encoder paired with a slower attention encoder:
    the convergence-rate asymmetry is what the dynamic ensemble weighting balances.
    """
    return [
        init_encoder("patch-linear", 8, 10, 32, 32, seed=101),
        init_encoder("attention-block", 4, 24, 32, 32, seed=202),
    ]


def default_heldout():
    """Encoder excluded from optimization; measures transfer."""
    return init_encoder("patch-linear", 4, 20, 32, 32, seed=303)


def default_ensemble():
    """Three bundled encoders (two kinds, three seeds) for CLI runs and demos."""
    return default_surrogates() + [default_heldout()]
