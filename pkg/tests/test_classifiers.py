import math

import numpy as np
import pytest

from hdrobust.classifiers import (
    DdaModel,
    DiscriminantModel,
    SimcaModel,
    SingularCovarianceError,
    dda_fit,
    discriminant_scores,
    lda_fit,
    linda_fit,
    pp_fit,
    pp_predict,
    rsimca_fit,
    rsimca_predict,
)
from hdrobust.dataset import LabeledDataset, SplitPlan, split
from hdrobust.estimators import McdInfeasibleError, RegularizationSpec, location_scale
from hdrobust.synth import default_design, generate


def eq4_oracle(means, sigma, priors, x):
    """Literal re-implementation of the discriminant rule."""
    inv = np.linalg.inv(sigma)
    return np.array(
        [
            -0.5 * (x - mu) @ inv @ (x - mu) + math.log(pi)
            for mu, pi in zip(means, priors)
        ]
    )


def two_gaussians(n_k=60, delta=4.0, p=2, seed=0):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((n_k, p))
    x2 = rng.standard_normal((n_k, p))
    x2[:, 0] += delta
    x = np.vstack([x1, x2])
    y = np.array([1] * n_k + [2] * n_k)
    return LabeledDataset(x, y)


class TestLda:
    def test_nearest_mean_reduction(self):
        # classes with exact means (0,0) and (4,0), isotropic pooled covariance
        x1 = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        ds = LabeledDataset(np.vstack([x1, x1 + [4.0, 0.0]]), np.array([1] * 4 + [2] * 4))
        model = lda_fit(ds)
        assert model.predict(np.array([1.0, 0.0])) == 1
        assert model.predict(np.array([3.0, 0.0])) == 2

    def test_prior_shift_worked_example(self):
        model = DiscriminantModel(
            class_means=np.array([[0.0, 0.0], [4.0, 0.0]]),
            precision=np.eye(2),
            log_priors=np.log([0.9, 0.1]),
            covariance_method="sample",
            regularization=RegularizationSpec(),
        )
        x = np.array([2.2, 0.0])
        scores = discriminant_scores(model, x)
        oracle = eq4_oracle(model.class_means, np.eye(2), [0.9, 0.1], x)
        np.testing.assert_allclose(scores, oracle, atol=1e-12)
        assert abs(scores[0] - (-2.5254)) < 5e-4
        assert abs(scores[1] - (-3.9226)) < 5e-4
        assert model.predict(x) == 1

    def test_hdlss_singularity(self):
        rng = np.random.default_rng(1)
        ds = LabeledDataset(rng.standard_normal((20, 50)), np.tile([1, 2], 10))
        with pytest.raises(SingularCovarianceError, match="regularization"):
            lda_fit(ds)

    def test_regularized_fits_hdlss(self):
        rng = np.random.default_rng(1)
        ds = LabeledDataset(rng.standard_normal((20, 50)), np.tile([1, 2], 10))
        model = lda_fit(ds, RegularizationSpec("ridge", lam=1.0))
        assert model.predict(ds.features).shape == (20,)

    def test_fit_matches_manual_computation(self):
        ds = two_gaussians(seed=5)
        model = lda_fit(ds)
        for k in (1, 2):
            rows = ds.features[ds.class_rows(k)]
            np.testing.assert_allclose(model.class_means[k - 1], rows.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(np.exp(model.log_priors), [0.5, 0.5], atol=1e-12)


class TestDiscriminantScores:
    def test_own_mean_wins_with_equal_priors(self):
        rng = np.random.default_rng(2)
        a = rng.standard_normal((3, 3))
        model = DiscriminantModel(
            class_means=rng.standard_normal((3, 3)) * 4,
            precision=np.linalg.inv(a @ a.T + 3 * np.eye(3)),
            log_priors=np.log([1 / 3] * 3),
            covariance_method="sample",
            regularization=RegularizationSpec(),
        )
        for k in range(3):
            scores = discriminant_scores(model, model.class_means[k])
            assert int(np.argmax(scores)) == k

    def test_prior_scaling_keeps_argmax(self):
        rng = np.random.default_rng(3)
        model = DiscriminantModel(
            class_means=rng.standard_normal((3, 2)),
            precision=np.eye(2),
            log_priors=np.log([0.5, 0.3, 0.2]),
            covariance_method="sample",
            regularization=RegularizationSpec(),
        )
        x = rng.standard_normal((50, 2))
        base = model.predict(x)
        shifted = DiscriminantModel(
            model.class_means,
            model.precision,
            model.log_priors + 7.0 - math.log(np.exp(7.0) * 1.0),  # rescaled, same ratios
            "sample",
            RegularizationSpec(),
        )
        np.testing.assert_array_equal(shifted.predict(x), base)

    def test_matches_eq4_oracle_randomly(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            g, p = int(rng.integers(2, 5)), int(rng.integers(2, 6))
            a = rng.standard_normal((p, p))
            sigma = a @ a.T + p * np.eye(p)
            means = rng.standard_normal((g, p)) * 3
            w = rng.uniform(0.5, 2.0, g)
            priors = w / w.sum()
            model = DiscriminantModel(
                means, np.linalg.inv(sigma), np.log(priors), "sample", RegularizationSpec()
            )
            x = rng.standard_normal(p)
            np.testing.assert_allclose(
                discriminant_scores(model, x),
                eq4_oracle(means, sigma, priors, x),
                rtol=1e-9,
                atol=1e-9,
            )


class TestLinda:
    def test_agrees_with_lda_on_clean_data(self):
        train = two_gaussians(n_k=50, seed=7)
        test = two_gaussians(n_k=100, seed=8)
        lda = lda_fit(train)
        linda = linda_fit(train, seed=3)
        agree = np.mean(lda.predict(test.features) == linda.predict(test.features))
        assert agree >= 0.95

    def test_robust_mean_under_contamination(self):
        # oracle: simulation over 50 seeds, majority criterion
        wins = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            x1 = rng.standard_normal((40, 2))
            x1[:6] += 12.0  # 15% shifted outliers in class 1
            x2 = rng.standard_normal((40, 2)) + [5.0, 0.0]
            ds = LabeledDataset(np.vstack([x1, x2]), np.array([1] * 40 + [2] * 40))
            lda = lda_fit(ds)
            linda = linda_fit(ds, seed=seed)
            d_lda = np.linalg.norm(lda.class_means[0])
            d_linda = np.linalg.norm(linda.class_means[0])
            wins += d_linda < d_lda
        assert wins >= 40

    def test_infeasible_when_p_exceeds_h(self):
        rng = np.random.default_rng(2)
        ds = LabeledDataset(rng.standard_normal((20, 20)), np.tile([1, 2], 10))
        with pytest.raises(McdInfeasibleError, match="cannot be computed when p>h"):
            linda_fit(ds, seed=0)


class TestDda:
    def test_worked_example(self):
        model = DdaModel(
            class_means=np.array([[0.0, 0.0], [2.0, 2.0]]),
            pooled_variances=np.array([1.0, 4.0]),
            log_priors=np.log([0.5, 0.5]),
        )
        x = np.array([1.5, 0.5])
        scores = model.scores(x)
        np.testing.assert_allclose(scores, np.array([-1.15625, -0.40625]) + math.log(0.5), atol=1e-12)
        assert model.predict(x) == 2

    def test_equal_variances_match_nearest_mean(self):
        ds = two_gaussians(seed=11)
        model = dda_fit(ds)
        iso = DdaModel(model.class_means, np.ones(2), model.log_priors)
        closest = np.argmin(
            np.linalg.norm(ds.features[:, None, :] - model.class_means[None], axis=2), axis=1
        ) + 1
        np.testing.assert_array_equal(iso.predict(ds.features), closest)

    def test_hdlss_feasible(self):
        rng = np.random.default_rng(6)
        ds = LabeledDataset(rng.standard_normal((62, 2000)), np.array([1] * 40 + [2] * 22))
        model = dda_fit(ds)
        assert model.predict(ds.features[0]) in (1, 2)

    def test_fit_matches_manual(self):
        ds = two_gaussians(n_k=30, seed=13)
        model = dda_fit(ds)
        pooled = np.zeros(2)
        for k in (1, 2):
            rows = ds.features[ds.class_rows(k)]
            pooled += (rows - rows.mean(axis=0)).__pow__(2).sum(axis=0)
        np.testing.assert_allclose(model.pooled_variances, pooled / (60 - 2), atol=1e-12)


def angle_grid_oracle(xj, xk, kind, n_angles=2001):
    """Fine grid over directions in the plane, maximizing the separation index."""
    thetas = np.linspace(0.0, np.pi, n_angles)
    a_matrix = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    mj, sj = location_scale(xj @ a_matrix.T, kind)
    mk, sk = location_scale(xk @ a_matrix.T, kind)
    idx = np.where(sj + sk > 0, np.abs(mj - mk) / (sj + sk), -np.inf)
    return a_matrix[int(np.argmax(idx))]


class TestProjectionPursuit:
    def separated(self, seed=0, n_k=200, delta=6.0):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal((n_k, 2))
        x2 = rng.standard_normal((n_k, 2))
        x2[:, 0] += delta
        return LabeledDataset(
            np.vstack([x1, x2]), np.array([1] * n_k + [2] * n_k)
        )

    @pytest.mark.parametrize("kind", ["classical", "median_mad", "huber", "s_estimator"])
    def test_direction_aligned_with_separation(self, kind):
        # large n keeps the empirical index optimum tight around the true axis
        ds = self.separated(n_k=2000)
        oracle_dir = angle_grid_oracle(
            ds.features[ds.class_rows(1)], ds.features[ds.class_rows(2)], kind
        )
        assert abs(oracle_dir[0]) > 0.99  # grid oracle confirms the separation axis
        model = pp_fit(ds, kind, seed=1)
        assert abs(model.pairs[0].direction[0]) > 0.99

    def test_identical_classes_low_index(self):
        rng = np.random.default_rng(5)
        block = rng.standard_normal((40, 2))
        ds = LabeledDataset(np.vstack([block, block]), np.array([1] * 40 + [2] * 40))
        model = pp_fit(ds, "classical", seed=2)
        pair = model.pairs[0]
        xj = ds.features[ds.class_rows(1)] @ pair.direction
        xk = ds.features[ds.class_rows(2)] @ pair.direction
        idx = abs(xj.mean() - xk.mean()) / (xj.std(ddof=1) + xk.std(ddof=1))
        assert idx < 0.05

    def test_three_classes_pair_count(self):
        ds = generate(default_design(3, 4, 0.0, 0.0, n_per_class=20, seed=3))
        model = pp_fit(ds, "classical", seed=1)
        assert len(model.pairs) == 3
        assert [(r.first, r.second) for r in model.pairs] == [(1, 2), (1, 3), (2, 3)]

    def test_binary_prediction_is_pair_side(self):
        ds = self.separated(seed=3)
        model = pp_fit(ds, "classical", seed=1)
        pair = model.pairs[0]
        x = np.array([[0.0, 0.0], [6.0, 0.0]])
        proj = x @ pair.direction
        expected = np.where((proj - pair.cutoff) * pair.orientation > 0, pair.first, pair.second)
        np.testing.assert_array_equal(model.predict(x), expected)

    def test_cutoff_tie_goes_to_smaller_label(self):
        ds = self.separated(seed=4)
        model = pp_fit(ds, "classical", seed=1)
        pair = model.pairs[0]
        # construct a point exactly on the cutoff hyperplane
        x = pair.cutoff * pair.direction
        assert model.predict(x) == 1

    def test_multiclass_vote_vs_nearest_mean(self):
        ds = generate(default_design(3, 3, 0.0, 0.0, n_per_class=40, mean_delta=4.0, seed=6))
        model = pp_fit(ds, "classical", seed=2)
        pred = model.predict(ds.features)
        means = np.vstack(
            [ds.features[ds.class_rows(k)].mean(axis=0) for k in (1, 2, 3)]
        )
        nm = np.argmin(
            np.linalg.norm(ds.features[:, None, :] - means[None], axis=2), axis=1
        ) + 1
        acc_pp = np.mean(pred == ds.labels)
        acc_nm = np.mean(nm == ds.labels)
        assert acc_pp >= acc_nm - 0.05

    def test_unit_norm_directions(self):
        ds = generate(default_design(3, 8, 0.25, 0.0, n_per_class=15, seed=9))
        model = pp_fit(ds, "median_mad", seed=4)
        for pair in model.pairs:
            assert abs(np.linalg.norm(pair.direction) - 1.0) < 1e-12

    def test_scaling_invariance_of_predictions(self):
        # power-of-two scaling keeps every float computation exact
        ds = self.separated(seed=8, n_k=50)
        scaled = LabeledDataset(ds.features * 2.0, ds.labels)
        test = np.random.default_rng(10).standard_normal((30, 2)) * 3
        for kind in ("median_mad", "huber", "s_estimator"):
            m1 = pp_fit(ds, kind, seed=5)
            m2 = pp_fit(scaled, kind, seed=5)
            np.testing.assert_array_equal(m1.predict(test), m2.predict(test * 2.0))

    def test_deterministic_refit(self):
        ds = self.separated(seed=12, n_k=40)
        m1 = pp_fit(ds, "huber", seed=9)
        m2 = pp_fit(ds, "huber", seed=9)
        for a, b in zip(m1.pairs, m2.pairs):
            np.testing.assert_array_equal(a.direction, b.direction)
            assert a.cutoff == b.cutoff


class TestRsimca:
    def line_class(self, rng, n, direction, origin, noise=0.0):
        t = rng.uniform(-3, 3, n)
        pts = origin + t[:, None] * direction
        if noise:
            pts = pts + noise * rng.standard_normal(pts.shape)
        return pts

    def test_rank_one_geometry(self):
        rng = np.random.default_rng(0)
        d1 = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        d2 = np.array([0.0, 0.0, 1.0])
        x1 = self.line_class(rng, 20, d1, np.zeros(3))
        x2 = self.line_class(rng, 20, d2, np.array([8.0, 0.0, 0.0]))
        ds = LabeledDataset(np.vstack([x1, x2]), np.array([1] * 20 + [2] * 20))
        model = rsimca_fit(ds)
        sub = model.classes[0]
        assert sub.loadings.shape[1] == 1
        z = x1 - sub.center
        od = np.linalg.norm(z - (z @ sub.loadings) @ sub.loadings.T, axis=1)
        assert od.max() < 1e-9

    def test_full_retention_cap(self):
        rng = np.random.default_rng(1)
        for n_k, p in ((8, 10), (10, 4)):
            x = rng.standard_normal((2 * n_k, p))
            ds = LabeledDataset(x, np.array([1] * n_k + [2] * n_k))
            model = rsimca_fit(ds, variance_retained=1.0, trim=0.0)
            for sub in model.classes:
                assert sub.loadings.shape[1] == min(n_k - 2, p)

    def test_far_outlier_trimmed(self):
        # clean class stretched along a line (variance-dominant), one point
        # pushed off-line: its first-pass orthogonal distance is the maximum
        rng = np.random.default_rng(2)
        d1 = np.array([1.0, 0.0, 0.0])
        x1 = self.line_class(rng, 20, d1, np.zeros(3), noise=0.05)
        x1[:, 0] *= 3.0  # extend the line so it dominates total variance
        x1[5] += [0.0, 6.0, 0.0]
        x2 = rng.standard_normal((20, 3)) + [0.0, 0.0, 15.0]
        ds = LabeledDataset(np.vstack([x1, x2]), np.array([1] * 20 + [2] * 20))
        # oracle: direct first-pass OD computation
        center = np.median(x1, axis=0)
        z = x1 - center
        _, svals, vt = np.linalg.svd(z, full_matrices=False)
        eig = svals**2
        k = int(np.searchsorted(np.cumsum(eig) / eig.sum(), 0.9 - 1e-12) + 1)
        loadings = vt[:k].T
        od = np.linalg.norm(z - (z @ loadings) @ loadings.T, axis=1)
        assert int(np.argmax(od)) == 5
        model = rsimca_fit(ds)
        # with the outlier trimmed, the kept rows sit tight around the line
        assert model.classes[0].od_cutoff < 1.0

    def test_center_classified_home(self):
        rng = np.random.default_rng(3)
        x1 = rng.standard_normal((15, 3))
        x2 = rng.standard_normal((15, 3)) + 12.0
        ds = LabeledDataset(np.vstack([x1, x2]), np.array([1] * 15 + [2] * 15))
        model = rsimca_fit(ds)
        assert model.predict(model.classes[0].center) == 1
        assert model.predict(model.classes[1].center) == 2

    def test_identical_class_models_tie_to_one(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((16, 3))
        ds = LabeledDataset(np.vstack([x, x]), np.array([1] * 16 + [2] * 16))
        model = rsimca_fit(ds)
        pred = model.predict(rng.standard_normal((10, 3)))
        np.testing.assert_array_equal(pred, 1)

    def test_separated_rank_one_accuracy(self):
        rng = np.random.default_rng(5)
        d1 = np.array([1.0, 0.0, 0.0])
        d2 = np.array([0.0, 1.0, 0.0])
        x1 = self.line_class(rng, 30, d1, np.zeros(3), noise=0.05)
        x2 = self.line_class(rng, 30, d2, np.array([0.0, 0.0, 6.0]), noise=0.05)
        train = LabeledDataset(np.vstack([x1, x2]), np.array([1] * 30 + [2] * 30))
        model = rsimca_fit(train)
        y1 = self.line_class(rng, 50, d1, np.zeros(3), noise=0.05)
        y2 = self.line_class(rng, 50, d2, np.array([0.0, 0.0, 6.0]), noise=0.05)
        pred = model.predict(np.vstack([y1, y2]))
        truth = np.array([1] * 50 + [2] * 50)
        assert np.mean(pred == truth) >= 0.95

    def test_orthonormal_loadings(self):
        ds = generate(default_design(2, 30, 0.25, 0.05, n_per_class=25, seed=6))
        model = rsimca_fit(ds)
        for sub in model.classes:
            gram = sub.loadings.T @ sub.loadings
            assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-9
            assert np.all(np.diff(sub.eigenvalues) <= 1e-12)
            assert np.all(sub.eigenvalues > 0)

    def test_too_small_class_rejected(self):
        rng = np.random.default_rng(7)
        ds = LabeledDataset(rng.standard_normal((6, 2)), np.array([1, 1, 1, 2, 2, 2]))
        with pytest.raises(ValueError, match="at least 4"):
            rsimca_fit(ds)

    def test_deterministic_refit(self):
        ds = generate(default_design(2, 12, 0.25, 0.1, n_per_class=20, seed=8))
        m1 = rsimca_fit(ds)
        m2 = rsimca_fit(ds)
        for a, b in zip(m1.classes, m2.classes):
            np.testing.assert_array_equal(a.loadings, b.loadings)
            assert a.sd_cutoff == b.sd_cutoff
