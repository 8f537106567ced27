import itertools
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.optimize

from pcpq.clustering import (AnisoWeights, aniso_point_loss, aniso_projective_k_clustering,
                             aniso_weights, anisotropic_k_clustering, assign_anisotropic,
                             assign_projective, center_anisotropic, center_projective,
                             init_normalized_sampling, kmeans_pp, kmeanspp_seeds, opt_alpha_aniso,
                             point_weights, projective_k_clustering, residual_components)
from pcpq.core import make_rng


def _partitions(n, k):
    """Every labelling of n points into exactly k nonempty groups (up to relabelling)."""
    for labels in itertools.product(range(k), repeat=n - 1):
        labels = (0,) + labels
        if len(set(labels)) == k:
            yield np.array(labels)


def projective_optimum(X, k):
    total = float(np.sum(X * X))
    best = np.inf
    for labels in _partitions(X.shape[0], k):
        s = sum(np.linalg.svd(X[labels == j], compute_uv=False)[0] ** 2 for j in range(k))
        best = min(best, total - s)
    return best


def kmeans_optimum(X, k):
    best = np.inf
    for labels in _partitions(X.shape[0], k):
        loss = sum(np.sum((X[labels == j] - X[labels == j].mean(0)) ** 2) for j in range(k))
        best = min(best, loss)
    return best


def random_weights(rng, n=None):
    hb = rng.uniform(0.05, 1.0, n)
    return AnisoWeights(h_par=hb + rng.uniform(0.0, 2.0, n), h_bot=hb)


# --- residual split and weights ----------------------------------------------------

def test_residual_same_point():
    r = residual_components([1.0, 0.0], [1.0, 0.0])
    np.testing.assert_array_equal(r.r_par, [0, 0])
    np.testing.assert_array_equal(r.r_bot, [0, 0])


def test_residual_orthogonal_center():
    r = residual_components([1.0, 0.0], [0.0, 1.0])
    np.testing.assert_array_equal(r.r_par, [1, 0])
    np.testing.assert_array_equal(r.r_bot, [0, -1])


def test_residual_identity(rng):
    for _ in range(50):
        x, c = rng.standard_normal(4), rng.standard_normal(4)
        r = residual_components(x, c)
        np.testing.assert_allclose(r.r_par + r.r_bot, x - c, atol=1e-12)
        assert abs(r.r_par @ r.r_bot) <= 1e-6 * np.linalg.norm(x) * np.linalg.norm(c) + 1e-12


def test_residual_zero_point():
    with pytest.raises(ValueError):
        residual_components([0.0, 0.0], [1.0, 0.0])


def test_zero_threshold_zero_weights_with_ratio_limit():
    w = aniso_weights(1.3, 0.0, 4, limit="ratio")
    assert w.h_par == 0.0 and w.h_bot == 0.0


def test_zero_threshold_isotropic_with_cone_limit():
    # every unit query counts when t = 0: the full half-sphere, equal weights
    w = aniso_weights(1.3, 0.0, 4)
    assert w.h_par == pytest.approx(w.h_bot, rel=1e-12) and w.h_bot > 0


def _weights_oracle(norm_x, t, dbar, theta):
    f = lambda p: scipy.integrate.quad(lambda x: math.sin(x) ** p, 0, theta,  # noqa: E731
                                       epsabs=1e-14, epsrel=1e-14)[0]
    return (dbar - 1) * (f(dbar - 2) - f(dbar)), f(dbar)


def test_weights_against_quadrature():
    hp, hb = _weights_oracle(1.0, 0.2, 4, math.acos(0.2))
    w = aniso_weights(1.0, 0.2, 4)
    assert w.h_par == pytest.approx(hp, abs=1e-9)
    assert w.h_bot == pytest.approx(hb, abs=1e-9)


def test_ratio_limit_against_quadrature():
    hp, hb = _weights_oracle(1.0, 0.2, 4, 0.2)
    w = aniso_weights(1.0, 0.2, 4, limit="ratio")
    assert w.h_par == pytest.approx(hp, abs=1e-9)
    assert w.h_bot == pytest.approx(hb, abs=1e-9)


def test_weights_inside_threshold_are_zero():
    # a point no longer than t can never score above t: empty cone
    w = aniso_weights(0.1, 0.2, 4)
    assert w.h_par == 0.0 and w.h_bot == 0.0


def test_weight_errors():
    with pytest.raises(ValueError):
        aniso_weights(0.0, 0.2, 4)
    with pytest.raises(ValueError):
        aniso_weights(1.0, -0.2, 4)
    with pytest.raises(ValueError):
        aniso_weights(1.0, 0.2, 1)


# --- optimal scalar ----------------------------------------------------------------

def test_isotropic_alpha_is_projection(rng):
    x, c = rng.standard_normal(4), rng.standard_normal(4)
    alpha = opt_alpha_aniso(x, c, AnisoWeights(1.0, 1.0))
    assert alpha == pytest.approx((x @ c) / (c @ c), rel=1e-12)


def test_alpha_of_self_is_one(rng):
    x = rng.standard_normal(4)
    assert opt_alpha_aniso(x, x, AnisoWeights(2.0, 0.3)) == pytest.approx(1.0, rel=1e-12)


def test_alpha_degenerate_returns_zero():
    # orthogonal center and no orthogonal weight: the loss does not depend on alpha
    assert opt_alpha_aniso([1.0, 0.0], [0.0, 1.0], AnisoWeights(1.0, 0.0)) == 0.0


def test_alpha_against_golden_section(rng):
    for _ in range(100):
        x, c = rng.standard_normal(4), rng.standard_normal(4)
        w = random_weights(rng)
        w = AnisoWeights(float(w.h_par), float(w.h_bot))
        res = scipy.optimize.minimize_scalar(lambda a: aniso_point_loss(x, a * c, w),
                                             bounds=(-100, 100), method="bounded",
                                             options={"xatol": 1e-12})
        assert opt_alpha_aniso(x, c, w) == pytest.approx(res.x, abs=1e-6)


# --- projective assignment and centers ---------------------------------------------

def test_assign_collinear():
    j, alpha, loss = assign_projective(np.array([[2.0, 2.0]]), np.array([[1.0, 0], [1, 1]]))
    assert j.tolist() == [1] and alpha[0] == pytest.approx(2.0) and loss == pytest.approx(0.0)


def test_assign_sign_invariant():
    j, alpha, loss = assign_projective(np.array([[-1.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert alpha[0] == -1.0 and loss == 0.0


def test_assign_zero_point():
    j, alpha, loss = assign_projective(np.zeros((1, 2)), np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert j.tolist() == [0] and alpha[0] == 0.0 and loss == 0.0


def test_optimal_partition_identity(rng):
    X = rng.standard_normal((10, 3))
    best, best_labels = np.inf, None
    total = float(np.sum(X * X))
    for labels in _partitions(10, 2):
        loss = total - sum(np.linalg.svd(X[labels == j], compute_uv=False)[0] ** 2
                           for j in range(2))
        if loss < best:
            best, best_labels = loss, labels
    centers = np.stack([center_projective(X[best_labels == j]) for j in range(2)])
    _, _, loss = assign_projective(X, centers)
    # the optimal partition's own lines cannot be beaten by re-assigning
    assert loss == pytest.approx(best, rel=1e-9)


def test_center_collinear():
    np.testing.assert_allclose(center_projective([[2.0, 0], [3.0, 0]]), [1, 0], atol=1e-12)


def test_center_antipodal():
    np.testing.assert_allclose(center_projective([[1.0, 1], [-1.0, -1]]),
                               np.array([1, 1]) / math.sqrt(2), atol=1e-9)


def test_center_all_zero():
    np.testing.assert_array_equal(center_projective(np.zeros((3, 2))), [1, 0])


def test_center_beats_mean_direction(rng):
    for _ in range(20):
        X = rng.standard_normal((20, 4)) + rng.standard_normal(4)
        v = center_projective(X)
        m = X.mean(0) / np.linalg.norm(X.mean(0))
        proj_loss = lambda u: float(np.sum(X * X) - np.sum((X @ u) ** 2))  # noqa: E731
        assert proj_loss(v) <= proj_loss(m) + 1e-9


def test_projective_exact_lines(rng):
    a = rng.uniform(0.5, 2, 6)[:, None] * np.array([1.0, 0.0])
    b = rng.uniform(-2, -0.5, 6)[:, None] * np.array([0.0, 1.0])
    model = projective_k_clustering(np.vstack([a, b]), 2, seed=3)
    assert model.loss == pytest.approx(0.0, abs=1e-12)


def test_projective_k_equals_n(rng):
    X = rng.standard_normal((6, 3))
    assert projective_k_clustering(X, 6).loss == pytest.approx(0.0, abs=1e-10)


def test_projective_near_optimum(rng):
    for _ in range(5):
        X = rng.standard_normal((8, 2))
        best = min(projective_k_clustering(X, 2, seed=s).loss for s in range(10))
        assert best <= 1.05 * projective_optimum(X, 2) + 1e-12


def test_projective_sign_flip_invariant(rng):
    X = rng.standard_normal((40, 3))
    flip = np.where(rng.random(40) < 0.5, -1.0, 1.0)[:, None]
    init = init_normalized_sampling(X, 3, seed=1)
    init = np.array([v if v[np.argmax(np.abs(v))] >= 0 else -v for v in init])
    a = projective_k_clustering(X, 3, init=init)
    b = projective_k_clustering(X * flip, 3, init=init)
    assert a.loss == pytest.approx(b.loss, rel=1e-9)


def test_projective_not_worse_than_kmeans_same_centers(rng):
    X = rng.standard_normal((60, 4)) + 2.0
    km = kmeans_pp(X, 4, seed=2)
    dist = np.min(((X[:, None, :] - km.centers[None]) ** 2).sum(-1), axis=1)
    _, _, ploss = assign_projective(X, km.centers)
    assert ploss <= dist.sum() + 1e-9


# --- anisotropic centers ------------------------------------------------------------

def test_aniso_center_single_point(rng):
    x = rng.standard_normal(3)
    w = AnisoWeights(0.7, 0.7)
    np.testing.assert_allclose(center_anisotropic(x[None], [1.0], w), x, atol=1e-8)
    np.testing.assert_allclose(center_anisotropic(x[None], [2.0], w), x / 2, atol=1e-8)


def _cluster_loss(X, alphas, w, c):
    return sum(aniso_point_loss(x, a * c, AnisoWeights(hp, hb))
               for x, a, hp, hb in zip(X, alphas, w.h_par, w.h_bot))


def test_aniso_center_against_numeric_minimizer(rng):
    for _ in range(10):
        X = rng.standard_normal((15, 3))
        alphas = rng.uniform(0.3, 2.0, 15)
        w = random_weights(rng, 15)
        c = center_anisotropic(X, alphas, w)
        res = scipy.optimize.minimize(lambda v: _cluster_loss(X, alphas, w, v), np.zeros(3),
                                      method="BFGS", options={"gtol": 1e-10})
        np.testing.assert_allclose(c, res.x, atol=1e-5)
        grad = scipy.optimize.approx_fprime(c, lambda v: _cluster_loss(X, alphas, w, v), 1e-7)
        assert np.linalg.norm(grad) <= 1e-4 * max(1.0, _cluster_loss(X, alphas, w, c))


# --- anisotropic assignment -------------------------------------------------------

def test_assign_point_on_center(rng):
    C = rng.standard_normal((3, 4))
    j, alpha, loss = assign_anisotropic(C[1:2], C, AnisoWeights(1.5, 0.5), allow_scaling=True)
    assert j.tolist() == [1] and alpha[0] == pytest.approx(1.0) and loss == pytest.approx(0.0, abs=1e-12)


def test_isotropic_assignment_is_projective(rng):
    X, C = rng.standard_normal((50, 4)), rng.standard_normal((5, 4))
    ja, aa, _ = assign_anisotropic(X, C, AnisoWeights(1.0, 1.0), allow_scaling=True)
    jp, ap, _ = assign_projective(X, C)
    np.testing.assert_array_equal(ja, jp)
    np.testing.assert_allclose(aa, ap, rtol=1e-10)


def test_assignment_beats_alpha_grid(rng):
    X, C = rng.standard_normal((10, 4)), rng.standard_normal((3, 4))
    w = random_weights(rng, 10)
    j, alphas, _ = assign_anisotropic(X, C, w, allow_scaling=True)
    grid = np.linspace(-5, 5, 10_000)
    for i in range(10):
        wi = AnisoWeights(w.h_par[i], w.h_bot[i])
        chosen = aniso_point_loss(X[i], alphas[i] * C[j[i]], wi)
        for c in C:
            r_par = X[i][None] - (grid[:, None] * (c @ X[i]) / (X[i] @ X[i])) * X[i][None]
            r_bot = (grid[:, None] * (c @ X[i]) / (X[i] @ X[i])) * X[i][None] - grid[:, None] * c
            grid_loss = wi.h_par * (r_par ** 2).sum(1) + wi.h_bot * (r_bot ** 2).sum(1)
            assert chosen <= grid_loss.min() + 1e-9


def test_scaling_never_hurts(rng):
    X, C = rng.standard_normal((80, 4)), rng.standard_normal((4, 4))
    w = point_weights(X, 0.2 * np.linalg.norm(X, axis=1).mean())
    _, _, on = assign_anisotropic(X, C, w, allow_scaling=True)
    _, _, off = assign_anisotropic(X, C, w, allow_scaling=False)
    assert on <= off + 1e-12


def test_zero_point_in_aniso_assignment():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    j, alpha, loss = assign_anisotropic(X, np.array([[0.0, 1.0], [1.0, 1.0]]),
                                        AnisoWeights(np.array([0.0, 1.0]), np.array([0.0, 0.5])),
                                        allow_scaling=True)
    assert j[0] == 0 and alpha[0] == 0.0


# --- anisotropic solvers ------------------------------------------------------------

def test_all_points_inside_threshold_is_degenerate(rng):
    X = rng.standard_normal((20, 4))
    t = 2 * np.linalg.norm(X, axis=1).max()
    model = anisotropic_k_clustering(X, 3, t=t, seed=1)
    assert model.degenerate and model.loss == 0.0


def test_zero_threshold_is_degenerate(rng):
    X = rng.standard_normal((20, 4))
    model = aniso_projective_k_clustering(X, 3, t=0.0, seed=1, limit="ratio")
    init = kmeanspp_seeds(X, 3, make_rng(1, 0xC0), nonzero=True)
    assert model.degenerate and model.loss == 0.0
    np.testing.assert_array_equal(model.centers, init)


def test_aniso_projective_k_equals_n(rng):
    X = rng.standard_normal((6, 4))
    model = aniso_projective_k_clustering(X, 6, t=0.1)
    assert model.loss == pytest.approx(0.0, abs=1e-10)
    np.testing.assert_allclose(model.alphas * np.linalg.norm(model.centers[model.assignment], axis=1),
                               np.linalg.norm(X, axis=1), rtol=1e-6)


def test_scaling_generalizes_fixed_scalars(rng):
    for seed in range(5):
        X = rng.standard_normal((50, 4))
        t = 0.2 * np.linalg.norm(X, axis=1).mean()
        a = aniso_projective_k_clustering(X, 4, t=t, seed=seed)
        b = anisotropic_k_clustering(X, 4, t=t, seed=seed)
        assert a.loss <= b.loss + 1e-9


def test_aniso_reduces_to_kmeans(rng):
    X = rng.standard_normal((60, 4)) * 3
    ones = AnisoWeights(np.ones(60), np.ones(60))
    a = anisotropic_k_clustering(X, 3, weights=ones, seed=4)
    b = kmeans_pp(X, 3, seed=4)
    assert a.loss == pytest.approx(b.loss, rel=1e-8)


def test_aniso_k_equals_n(rng):
    X = rng.standard_normal((5, 3))
    assert anisotropic_k_clustering(X, 5, t=0.1).loss == pytest.approx(0.0, abs=1e-10)


# --- k-means ------------------------------------------------------------------------

def test_kmeans_constant_zero():
    assert kmeans_pp(np.zeros((10, 3)), 2).loss == 0.0


def test_kmeans_two_blobs(rng):
    a = rng.normal(0, 0.01, (20, 2)) + [5, 5]
    b = rng.normal(0, 0.01, (20, 2)) - [5, 5]
    model = kmeans_pp(np.vstack([a, b]), 2, seed=1)
    got = model.centers[np.argsort(model.centers[:, 0])]
    np.testing.assert_allclose(got, [b.mean(0), a.mean(0)], atol=1e-12)


def test_kmeans_near_optimum(rng):
    for _ in range(5):
        X = rng.standard_normal((12, 2))
        best = min(kmeans_pp(X, 2, seed=s).loss for s in range(10))
        assert best <= 1.05 * kmeans_optimum(X, 2) + 1e-12


# --- initialization -----------------------------------------------------------------

def test_normalized_sampling_on_a_line(rng):
    X = rng.standard_normal(10)[:, None] * np.array([[3.0, 4.0]])
    seeds = init_normalized_sampling(X, 3, seed=2)
    np.testing.assert_allclose(np.abs(seeds), np.tile([0.6, 0.8], (3, 1)), atol=1e-12)
    assert projective_k_clustering(X, 3, init="normalized", seed=2).loss == pytest.approx(0.0, abs=1e-12)


def test_normalized_sampling_skips_antipode():
    v = np.array([1.0, 0.0])
    X = np.array([v, -v, [0.0, 1.0]])
    for seed in range(20):
        seeds = init_normalized_sampling(X, 2, seed=seed)
        assert abs(abs(seeds[0] @ seeds[1]) - 1.0) > 1e-9


def test_normalized_sampling_units_and_errors(rng):
    seeds = init_normalized_sampling(rng.standard_normal((30, 3)) * 5, 4)
    np.testing.assert_allclose(np.linalg.norm(seeds, axis=1), 1.0)
    with pytest.raises(ValueError):
        init_normalized_sampling(np.zeros((5, 2)), 1)


def test_first_normalized_seed_uniform():
    X = np.eye(4)
    firsts = [int(np.argmax(init_normalized_sampling(X, 1, seed=s)[0])) for s in range(400)]
    counts = np.bincount(firsts, minlength=4)
    assert counts.min() > 60


# --- loss traces ----------------------------------------------------------------------

@pytest.mark.parametrize("solver", ["kmeans", "projective", "aniso", "aniso_projective"])
def test_traces_non_increasing(rng, solver):
    for seed in range(5):
        X = rng.standard_normal((40, 4)) * rng.uniform(0.2, 3, (40, 1))
        t = 0.2 * np.linalg.norm(X, axis=1).mean()
        model = {"kmeans": lambda: kmeans_pp(X, 4, seed=seed),
                 "projective": lambda: projective_k_clustering(X, 4, seed=seed),
                 "aniso": lambda: anisotropic_k_clustering(X, 4, t=t, seed=seed),
                 "aniso_projective": lambda: aniso_projective_k_clustering(X, 4, t=t, seed=seed),
                 }[solver]()
        tr = np.array(model.loss_trace)
        assert np.all(tr[1:] <= tr[:-1] + 1e-9 * np.abs(tr[:-1]))
        assert model.assignment.min() >= 0 and model.assignment.max() < 4
