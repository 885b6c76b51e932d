"""Independent verification oracles: finite differences, brute-force OT, exhaustive
k-means, and adjoint identities.

Every suite generates seeded random instances, checks the production code against a
straight-line independent computation, and reports per-check pass/fail results. The
CLI serializes failing instances for replay; the test suite drives the same
functions with the tolerances pinned by the acceptance criteria.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .attack import apply_crop, crop_vjp, sample_crop_params
from .clustering import kmeans, kmeans_vjp, lloyd_objective
from .encoders import KINDS, encode, encode_vjp, init_encoder
from .losses import TargetFeatures, coarse_loss_grad, foa_loss, prepare_target
from .mathutil import bilinear_resize, bilinear_resize_vjp, make_rng
from .transport import exact_ot_bruteforce, sinkhorn, sinkhorn_loss_grad

GRAD_TOL = 1e-5
CHAIN_TOL = 1e-4
COARSE_TOL = 1e-6
KMEANS_VJP_TOL = 1e-6
ADJOINT_TOL = 1e-10
OT_ABS_TOL = 1e-3
MARGINAL_TOL = 1e-9
FD_STEP = 1e-4


@dataclass(frozen=True)
class OracleCheck:
    name: str
    passed: bool
    detail: str
    replay: dict | None = None


def rel_err(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def norm_rel_err(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


COST_SCALE = 0.6


def random_cost_matrix(rng, n):
    """Random cost with entries in [0, 0.6], like moderately aligned feature clusters.

    The cap keeps exp(-C/lambda) inside the plain-domain Sinkhorn range even at
    lambda = 1e-3, and keeps the entropic plan diffuse enough at lambda = 0.1 that
    the marginals converge to 1e-9 in a few hundred sweeps.
    """
    return COST_SCALE * rng.random((n, n))


def separated_points(rng, m, n, d, spread=0.25, distance=12.0):
    """m points in tight balls around n well-separated anchors (global optimum obvious)."""
    anchors = distance * rng.normal(size=(n, d))
    labels = np.concatenate([np.arange(n), rng.integers(0, n, size=m - n)])
    return anchors[labels] + spread * rng.normal(size=(m, d))


def exhaustive_kmeans_objective(points, n):
    """Global k-means optimum by enumerating every nonempty assignment (small m only)."""
    m = points.shape[0]
    best = np.inf
    for assign in itertools.product(range(n), repeat=m):
        counts = np.bincount(assign, minlength=n)
        if (counts == 0).any():
            continue
        obj = 0.0
        assign = np.asarray(assign)
        for j in range(n):
            members = points[assign == j]
            obj += ((members - members.mean(axis=0)) ** 2).sum()
        if obj < best:
            best = obj
    return best


# ----------------------------------------------------------------- grad suite

def _fd_directional(func, x, v, h=FD_STEP):
    return (func(x + h * v) - func(x - h * v)) / (2.0 * h)


def _check_encode_vjp(rng, kind, trial):
    spec = init_encoder(kind, 4, 10, 16, 16, seed=int(rng.integers(1 << 31)))
    img = rng.random((16, 16, 3))
    d_global = rng.normal(size=spec.embed_dim)
    d_patches = rng.normal(size=(spec.patch_count, spec.embed_dim))
    grad = encode_vjp(spec, img, d_global, d_patches)

    def loss(x):
        f = encode(spec, x)
        return float(f.global_vec @ d_global + (f.patches * d_patches).sum())

    worst = 0.0
    for _ in range(20):
        v = rng.normal(size=img.shape)
        fd = _fd_directional(loss, img, v)
        worst = max(worst, rel_err(fd, float((grad * v).sum())))
    return OracleCheck(
        name=f"grad/encode_vjp/{kind}/{trial}",
        passed=worst <= GRAD_TOL,
        detail=f"max directional rel err {worst:.3e} (tol {GRAD_TOL})",
        replay={"image": img, "d_global": d_global, "d_patches": d_patches,
                "kind": kind})


def _check_coarse_grad(rng, trial):
    x = rng.normal(size=16)
    y = rng.normal(size=16)
    _, grad = coarse_loss_grad(x, y)
    fd = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0
        fd[i] = _fd_directional(lambda z: coarse_loss_grad(z, y)[0], x, e)
    err = norm_rel_err(fd, grad)
    return OracleCheck(
        name=f"grad/coarse_loss/{trial}",
        passed=err <= COARSE_TOL,
        detail=f"norm rel err {err:.3e} (tol {COARSE_TOL})",
        replay={"x": x, "y": y})


def _check_sinkhorn_grad(rng, trial, n=3, d=8, lam=0.1):
    x = rng.normal(size=(n, d))
    y = rng.normal(size=(n, d))
    _, grad = sinkhorn_loss_grad(x, y, lam=lam)
    yn = y / np.linalg.norm(y, axis=1, keepdims=True)
    plan = sinkhorn(1.0 - (x / np.linalg.norm(x, axis=1, keepdims=True)) @ yn.T, lam=lam).plan

    def frozen_cost(xm):
        xn = xm / np.linalg.norm(xm, axis=1, keepdims=True)
        return float(((1.0 - xn @ yn.T) * plan).sum())

    fd = np.zeros_like(x)
    for a in range(n):
        for b in range(d):
            e = np.zeros_like(x)
            e[a, b] = 1.0
            fd[a, b] = _fd_directional(frozen_cost, x, e)
    err = norm_rel_err(fd, grad)
    return OracleCheck(
        name=f"grad/sinkhorn_loss/{trial}",
        passed=err <= GRAD_TOL,
        detail=f"frozen-plan norm rel err {err:.3e} (tol {GRAD_TOL})",
        replay={"x": x, "y": y, "lam": lam})


def _check_kmeans_vjp(rng, trial, m=12, n=3, d=4):
    points = rng.normal(size=(m, d))
    result = kmeans(points, n, make_rng(int(rng.integers(1 << 31))))
    d_centers = rng.normal(size=(n, d))
    grad = kmeans_vjp(points, result, d_centers)

    def frozen(pm):
        obj = 0.0
        for j in range(n):
            rows = pm[result.assignment == j]
            obj += float(rows.mean(axis=0) @ d_centers[j])
        return obj

    fd = np.zeros_like(points)
    for i in range(m):
        for k in range(d):
            e = np.zeros_like(points)
            e[i, k] = 1.0
            fd[i, k] = _fd_directional(frozen, points, e)
    err = norm_rel_err(fd, grad)
    return OracleCheck(
        name=f"grad/kmeans_vjp/{trial}",
        passed=err <= KMEANS_VJP_TOL,
        detail=f"frozen-assignment norm rel err {err:.3e} (tol {KMEANS_VJP_TOL})",
        replay={"points": points, "d_centers": d_centers})


def _check_chain(rng, trial, eta=0.2, lam=0.1, n=3):
    """End-to-end pixel gradient: encode -> losses, with clustering/plan structure frozen."""
    kind = KINDS[trial % len(KINDS)]
    spec = init_encoder(kind, 4, 10, 16, 16, seed=int(rng.integers(1 << 31)))
    img = rng.random((16, 16, 3))
    tar = rng.random((16, 16, 3))
    tar_feats = encode(spec, tar)
    target = prepare_target(tar_feats, n, make_rng(int(rng.integers(1 << 31))))
    km_rng_seed = int(rng.integers(1 << 31))

    adv_feats = encode(spec, img)
    breakdown, d_global, d_patches = foa_loss(
        adv_feats, target, eta=eta, lam=lam, rng=make_rng(km_rng_seed))
    grad = encode_vjp(spec, img, d_global, d_patches)

    # freeze the adversarial-side structure at the base point
    base_clusters = kmeans(adv_feats.patches, n, make_rng(km_rng_seed))
    yn = target.clusters.centers / np.linalg.norm(target.clusters.centers, axis=1, keepdims=True)
    xn = base_clusters.centers / np.linalg.norm(base_clusters.centers, axis=1, keepdims=True)
    plan = sinkhorn(1.0 - xn @ yn.T, lam=lam).plan

    def frozen_loss(x):
        feats = encode(spec, x)
        coarse, _ = coarse_loss_grad(feats.global_vec, target.global_vec)
        centers = np.zeros_like(base_clusters.centers)
        sizes = np.bincount(base_clusters.assignment, minlength=n)
        np.add.at(centers, base_clusters.assignment, feats.patches)
        centers /= sizes[:, None]
        cn = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        return coarse + eta * float(((1.0 - cn @ yn.T) * plan).sum())

    worst = 0.0
    pix = rng.integers(0, 16, size=(5, 2))
    for py, px in pix:
        for c in range(3):
            e = np.zeros_like(img)
            e[py, px, c] = 1.0
            fd = _fd_directional(frozen_loss, img, e)
            worst = max(worst, rel_err(fd, float(grad[py, px, c])))
    return OracleCheck(
        name=f"grad/full_chain/{kind}/{trial}",
        passed=worst <= CHAIN_TOL,
        detail=f"max pixel rel err {worst:.3e} (tol {CHAIN_TOL})",
        replay={"image": img, "target": tar, "kind": kind})


def suite_grad(trials, seed):
    rng = make_rng(seed, 0x6AD)
    checks = []
    for trial in range(trials):
        checks.append(_check_encode_vjp(rng, KINDS[trial % len(KINDS)], trial))
        checks.append(_check_coarse_grad(rng, trial))
        checks.append(_check_sinkhorn_grad(rng, trial))
        checks.append(_check_kmeans_vjp(rng, trial))
        checks.append(_check_chain(rng, trial))
    return checks


# ------------------------------------------------------------------- ot suite

def suite_ot(trials, seed):
    rng = make_rng(seed, 0x07)
    checks = []
    for trial in range(trials):
        n = int(rng.integers(2, 6))
        cost = random_cost_matrix(rng, n)
        # cost accuracy in the small-lambda limit; marginals converge sublinearly
        # there once the plan support degenerates, so they are checked at lambda=0.1
        result = sinkhorn(cost, lam=1e-3)
        _, exact = exact_ot_bruteforce(cost)
        gap = result.cost - exact
        converged = sinkhorn(cost, lam=0.1)
        checks.append(OracleCheck(
            name=f"ot/bruteforce/{trial}",
            passed=abs(gap) <= OT_ABS_TOL and converged.marginal_residual < MARGINAL_TOL,
            detail=(f"n={n} |sinkhorn-exact|={abs(gap):.3e} (tol {OT_ABS_TOL}), "
                    f"marginal residual {converged.marginal_residual:.3e} at lam=0.1"),
            replay={"cost": cost}))

        shifted = sinkhorn(cost + 0.37, lam=0.1)
        drift = float(np.abs(shifted.plan - converged.plan).max())
        checks.append(OracleCheck(
            name=f"ot/shift_invariance/{trial}",
            passed=drift <= MARGINAL_TOL,
            detail=f"plan drift under constant cost shift {drift:.3e}",
            replay={"cost": cost}))
    if trials > 0:
        cost = random_cost_matrix(rng, 4)
        _, exact = exact_ot_bruteforce(cost)
        gaps = [sinkhorn(cost, lam=lam).cost - exact for lam in (0.1, 0.01, 0.001)]
        checks.append(OracleCheck(
            name="ot/lambda_monotone_gap",
            passed=gaps[0] > gaps[1] > gaps[2] >= 0.0,
            detail="gaps " + ", ".join(f"{g:.3e}" for g in gaps),
            replay={"cost": cost}))
    return checks


# --------------------------------------------------------------- kmeans suite

def suite_kmeans(trials, seed):
    rng = make_rng(seed, 0x43)
    checks = []
    for trial in range(trials):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(n + 2, 9))
        points = separated_points(rng, m, n, d=3)
        result = kmeans(points, n, make_rng(int(rng.integers(1 << 31))))
        got = lloyd_objective(points, result)
        best = exhaustive_kmeans_objective(points, n)
        checks.append(OracleCheck(
            name=f"kmeans/exhaustive/{trial}",
            passed=got <= best + 1e-9,
            detail=f"m={m} n={n} lloyd={got:.6f} exhaustive={best:.6f}",
            replay={"points": points, "n": n}))
    return checks


# -------------------------------------------------------------- adjoint suite

def suite_adjoint(trials, seed):
    rng = make_rng(seed, 0xAD)
    checks = []
    for trial in range(trials):
        in_h, in_w = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        out_h, out_w = int(rng.integers(1, 12)), int(rng.integers(1, 12))
        x = rng.normal(size=(in_h, in_w, 3))
        g = rng.normal(size=(out_h, out_w, 3))
        lhs = float((bilinear_resize(x, out_h, out_w) * g).sum())
        rhs = float((x * bilinear_resize_vjp(in_h, in_w, g)).sum())
        checks.append(OracleCheck(
            name=f"adjoint/resize/{trial}",
            passed=abs(lhs - rhs) <= ADJOINT_TOL * max(1.0, abs(lhs)),
            detail=f"<Rx,g>={lhs:.6e} <x,R'g>={rhs:.6e}",
            replay={"x": x, "g": g}))

        h = w = 16
        params = sample_crop_params(make_rng(seed, 0xCC, trial), h, w, 0.5, 1.0)
        xc = rng.normal(size=(h, w, 3))
        gc = rng.normal(size=(h, w, 3))
        lhs = float((apply_crop(xc, params) * gc).sum())
        rhs = float((xc * crop_vjp(params, h, w, gc)).sum())
        checks.append(OracleCheck(
            name=f"adjoint/crop/{trial}",
            passed=abs(lhs - rhs) <= ADJOINT_TOL * max(1.0, abs(lhs)),
            detail=f"crop {params.crop_h}x{params.crop_w} <Tx,g>={lhs:.6e} <x,T'g>={rhs:.6e}",
            replay={"x": xc, "g": gc,
                    "params": np.array([params.top, params.left, params.crop_h, params.crop_w])}))
    return checks


SUITES = {
    "grad": suite_grad,
    "ot": suite_ot,
    "kmeans": suite_kmeans,
    "adjoint": suite_adjoint,
}


def run_suite(name, trials, seed):
    if name == "all":
        checks = []
        for suite in SUITES.values():
            checks.extend(suite(trials, seed))
        return checks
    return SUITES[name](trials, seed)
