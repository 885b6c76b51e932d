import numpy as np
import pytest

from foa_attack.encoders import (
    KIND_ATTENTION,
    KIND_PATCH_LINEAR,
    KINDS,
    encode,
    encode_vjp,
    init_encoder,
    params,
)
from foa_attack.errors import InvalidDimsError, ShapeMismatchError
from foa_attack.mathutil import make_rng


def small_encoder(kind, seed=0):
    return init_encoder(kind, patch_size=4, embed_dim=10, input_h=16, input_w=16, seed=seed)


class TestInit:
    def test_deterministic(self):
        a = init_encoder(KIND_PATCH_LINEAR, 8, 16, 32, 32, seed=3)
        b = init_encoder(KIND_PATCH_LINEAR, 8, 16, 32, 32, seed=3)
        assert np.array_equal(a.weights, b.weights)

    @pytest.mark.parametrize("kind", KINDS)
    def test_different_seeds_mostly_differ(self, kind):
        a = init_encoder(kind, 4 if kind == KIND_ATTENTION else 8,
                         24 if kind == KIND_ATTENTION else 16, 32, 32, seed=1)
        b = init_encoder(kind, 4 if kind == KIND_ATTENTION else 8,
                         24 if kind == KIND_ATTENTION else 16, 32, 32, seed=2)
        frac_diff = np.mean(a.weights != b.weights)
        assert frac_diff >= 0.99

    def test_fan_in_scaling(self):
        # ~10k embedding weights with fan_in = 8*8*3 = 192
        spec = init_encoder(KIND_PATCH_LINEAR, 8, 52, 32, 32, seed=4)
        w_embed = params(spec)["w_embed"]
        assert w_embed.size >= 9984
        expected = 1.0 / np.sqrt(192)
        assert abs(w_embed.std() - expected) <= 0.2 * expected

    def test_bad_dims(self):
        with pytest.raises(InvalidDimsError):
            init_encoder(KIND_PATCH_LINEAR, 5, 16, 32, 32, seed=0)  # not divisible
        with pytest.raises(InvalidDimsError):
            init_encoder(KIND_PATCH_LINEAR, 8, 1, 32, 32, seed=0)  # d too small
        with pytest.raises(InvalidDimsError):
            init_encoder("mlp", 8, 16, 32, 32, seed=0)


class TestEncode:
    def test_patch_count(self):
        spec = init_encoder(KIND_PATCH_LINEAR, 8, 16, 32, 24, seed=5)
        feats = encode(spec, np.zeros((32, 24, 3)))
        assert feats.patches.shape == ((32 // 8) * (24 // 8), 16)
        assert feats.global_vec.shape == (16,)

    def test_zero_image_zero_bias(self):
        # affine map at zero: patches are the bias rows, global is head(bias)
        spec = small_encoder(KIND_PATCH_LINEAR)
        w = params(spec)
        feats = encode(spec, np.zeros((16, 16, 3)))
        assert np.allclose(feats.patches, w["b_embed"][None, :], atol=1e-15)
        head_of_bias = w["w_head"] @ w["b_embed"] + w["b_head"]
        assert np.allclose(feats.global_vec, head_of_bias, atol=1e-15)

    def test_patch_locality(self):
        spec = small_encoder(KIND_PATCH_LINEAR, seed=6)
        rng = make_rng(60)
        img_a = rng.random((16, 16, 3))
        img_b = img_a.copy()
        img_b[4:8, 8:12] = rng.random((4, 4, 3))  # patch (1, 2) in a 4x4 grid
        fa, fb = encode(spec, img_a), encode(spec, img_b)
        changed = np.flatnonzero(np.abs(fa.patches - fb.patches).max(axis=1) > 0)
        assert changed.tolist() == [1 * 4 + 2]

    def test_deterministic_encode(self):
        spec = small_encoder(KIND_ATTENTION, seed=7)
        img = make_rng(70).random((16, 16, 3))
        a, b = encode(spec, img), encode(spec, img)
        assert np.array_equal(a.global_vec, b.global_vec)
        assert np.array_equal(a.patches, b.patches)

    def test_attention_against_straight_line_reimplementation(self):
        spec = small_encoder(KIND_ATTENTION, seed=8)
        img = make_rng(80).random((16, 16, 3))
        got = encode(spec, img)

        w = params(spec)
        p, d = spec.patch_size, spec.embed_dim
        gh = gw = 16 // p
        rows = []
        for by in range(gh):
            for bx in range(gw):
                patch = img[by * p:(by + 1) * p, bx * p:(bx + 1) * p, :]
                rows.append(w["w_embed"] @ patch.reshape(-1) + w["b_embed"])
        tokens = np.vstack([w["cls"]] + rows)
        q = tokens @ w["w_q"].T
        k = tokens @ w["w_k"].T
        v = tokens @ w["w_v"].T
        scores = q @ k.T / np.sqrt(d)
        attn = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn /= attn.sum(axis=1, keepdims=True)
        mixed = attn @ v
        expected_global = mixed[0]
        expected_patches = tokens[1:] + mixed[1:]

        assert np.abs(got.global_vec - expected_global).max() <= 1e-12
        assert np.abs(got.patches - expected_patches).max() <= 1e-12

    def test_input_shape_checked(self):
        spec = small_encoder(KIND_PATCH_LINEAR)
        with pytest.raises(ShapeMismatchError):
            encode(spec, np.zeros((8, 16, 3)))


class TestEncodeVjp:
    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_cotangents(self, kind):
        spec = small_encoder(kind, seed=9)
        img = make_rng(90).random((16, 16, 3))
        grad = encode_vjp(spec, img, np.zeros(10), np.zeros((16, 10)))
        assert np.array_equal(grad, np.zeros((16, 16, 3)))

    def test_patch_row_gradient_is_local(self):
        spec = small_encoder(KIND_PATCH_LINEAR, seed=10)
        img = make_rng(100).random((16, 16, 3))
        d_patches = np.zeros((16, 10))
        d_patches[6] = make_rng(101).normal(size=10)  # grid row 1, col 2
        grad = encode_vjp(spec, img, np.zeros(10), d_patches)
        mask = np.zeros((16, 16, 3), dtype=bool)
        mask[4:8, 8:12, :] = True
        assert np.abs(grad[~mask]).max() == 0.0
        assert np.abs(grad[mask]).max() > 0.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_directional_finite_difference(self, kind):
        spec = small_encoder(kind, seed=11)
        rng = make_rng(110)
        img = rng.random((16, 16, 3))
        d_global = rng.normal(size=10)
        d_patches = rng.normal(size=(16, 10))
        grad = encode_vjp(spec, img, d_global, d_patches)

        def loss(x):
            f = encode(spec, x)
            return float(f.global_vec @ d_global + (f.patches * d_patches).sum())

        h = 1e-4
        for _ in range(20):
            v = rng.normal(size=img.shape)
            fd = (loss(img + h * v) - loss(img - h * v)) / (2 * h)
            analytic = float((grad * v).sum())
            assert abs(fd - analytic) <= 1e-5 * max(abs(fd), abs(analytic), 1e-8)

    def test_cotangent_shape_checked(self):
        spec = small_encoder(KIND_PATCH_LINEAR)
        img = np.zeros((16, 16, 3))
        with pytest.raises(ShapeMismatchError):
            encode_vjp(spec, img, np.zeros(9), np.zeros((16, 10)))
        with pytest.raises(ShapeMismatchError):
            encode_vjp(spec, img, np.zeros(10), np.zeros((15, 10)))
