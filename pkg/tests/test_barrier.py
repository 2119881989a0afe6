"""Feature map, logistic cost, BFGS fitting, and barrier evaluation."""

import math

import numpy as np
import pytest

from safeplan import (
    EXPONENT_PAIRS,
    BarrierFunction,
    FitError,
    LabeledSample,
    Region,
    eval_h,
    features,
    features_gradient,
    features_hessian,
    fit,
    load_barriers,
    logistic_cost,
    save_barriers,
)
from safeplan.barrier import NUM_FEATURES, compose_affine, feature_matrix


def rel_err(got, expected):
    got = np.asarray(got, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = max(1.0, float(np.max(np.abs(expected))))
    return float(np.max(np.abs(got - expected))) / scale


class TestFeatureMap:
    def test_fifteen_pairs_constant_first(self):
        assert len(EXPONENT_PAIRS) == 15
        assert EXPONENT_PAIRS[0] == (0, 0)
        assert all(i + j <= 4 and i >= 0 and j >= 0 for i, j in EXPONENT_PAIRS)
        assert len(set(EXPONENT_PAIRS)) == 15

    def test_origin_keeps_only_constant(self):
        z = features(0.0, 0.0)
        assert z[0] == 1.0
        assert np.all(z[1:] == 0.0)

    def test_ones_everywhere_at_one_one(self):
        assert np.all(features(1.0, 1.0) == 1.0)

    def test_powers_of_two_on_x1_axis(self):
        z = features(2.0, 0.0)
        by_pair = dict(zip(EXPONENT_PAIRS, z))
        for (i, j), value in by_pair.items():
            assert value == (2.0 ** i if j == 0 else 0.0)

    def test_constant_component_always_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x1, x2 = rng.uniform(-5, 5, size=2)
            assert features(x1, x2)[0] == 1.0

    def test_feature_matrix_matches_scalar(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-3, 3, size=(10, 2))
        Z = feature_matrix(pts)
        for k, (x1, x2) in enumerate(pts):
            assert np.allclose(Z[k], features(x1, x2), rtol=1e-14)


class TestFeatureDerivatives:
    def test_gradient_at_origin(self):
        d1, d2 = features_gradient(0.0, 0.0)
        x1_slot = EXPONENT_PAIRS.index((1, 0))
        x2_slot = EXPONENT_PAIRS.index((0, 1))
        expected1 = np.zeros(15)
        expected1[x1_slot] = 1.0
        expected2 = np.zeros(15)
        expected2[x2_slot] = 1.0
        assert np.array_equal(d1, expected1)
        assert np.array_equal(d2, expected2)

    def test_quartic_power_rule(self):
        d1, _ = features_gradient(1.0, 0.0)
        assert d1[EXPONENT_PAIRS.index((4, 0))] == 4.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(100):
            x1, x2 = rng.uniform(-3, 3, size=2)
            d1, d2 = features_gradient(x1, x2)
            fd1 = (features(x1 + h, x2) - features(x1 - h, x2)) / (2 * h)
            fd2 = (features(x1, x2 + h) - features(x1, x2 - h)) / (2 * h)
            assert rel_err(d1, fd1) <= 1e-6
            assert rel_err(d2, fd2) <= 1e-6

    def test_hessian_low_order_slots_vanish(self):
        d11, d12, d22 = features_hessian(3.0, -2.0)
        for pair in ((0, 0), (1, 0), (0, 1)):
            k = EXPONENT_PAIRS.index(pair)
            assert d11[k] == 0.0 and d12[k] == 0.0 and d22[k] == 0.0

    def test_mixed_partial_of_x1sq_x2sq(self):
        _, d12, _ = features_hessian(1.0, 1.0)
        assert d12[EXPONENT_PAIRS.index((2, 2))] == 4.0

    def test_hessian_matches_gradient_differences(self):
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(100):
            x1, x2 = rng.uniform(-3, 3, size=2)
            d11, d12, d22 = features_hessian(x1, x2)
            g1p, _ = features_gradient(x1 + h, x2)
            g1m, _ = features_gradient(x1 - h, x2)
            _, g2p = features_gradient(x1, x2 + h)
            _, g2m = features_gradient(x1, x2 - h)
            assert rel_err(d11, (g1p - g1m) / (2 * h)) <= 1e-6
            assert rel_err(d22, (g2p - g2m) / (2 * h)) <= 1e-6
            g12p, _ = features_gradient(x1, x2 + h)
            g12m, _ = features_gradient(x1, x2 - h)
            assert rel_err(d12, (g12p - g12m) / (2 * h)) <= 1e-6


class TestLogisticCost:
    def samples(self, rng, n=40):
        pts = rng.uniform(-2, 2, size=(n, 2))
        labels = rng.integers(0, 2, size=n)
        return [LabeledSample((float(x), float(y)), int(l))
                for (x, y), l in zip(pts, labels)]

    def test_zero_beta(self):
        rng = np.random.default_rng(4)
        samples = self.samples(rng, 25)
        cost, grad = logistic_cost(np.zeros(15), samples)
        assert math.isclose(cost, 25 * math.log(2), rel_tol=1e-12)
        Z = feature_matrix(np.array([s.position for s in samples]))
        y = np.array([s.label for s in samples])
        assert np.allclose(grad, Z.T @ (0.5 - y), rtol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        samples = self.samples(rng, 30)
        for _ in range(10):
            beta = rng.normal(0, 0.4, size=15)
            cost, grad = logistic_cost(beta, samples)
            fd = np.empty(15)
            h = 1e-5
            for k in range(15):
                e = np.zeros(15)
                e[k] = h
                cp, _ = logistic_cost(beta + e, samples)
                cm, _ = logistic_cost(beta - e, samples)
                fd[k] = (cp - cm) / (2 * h)
            assert rel_err(grad, fd) <= 1e-5

    def test_large_positive_score_on_free_label_costs_nothing(self):
        # single free sample at (1, 1): all features are 1, so t = sum(beta)
        sample = [LabeledSample((1.0, 1.0), 1)]
        beta = np.full(15, 60.0)
        cost, _ = logistic_cost(beta, sample)
        assert 0.0 <= cost < 1e-12

    def test_stable_for_huge_scores(self):
        sample = [LabeledSample((1.0, 1.0), 0)]
        cost, grad = logistic_cost(np.full(15, 70.0), sample)
        assert math.isclose(cost, 15 * 70.0, rel_tol=1e-9)
        assert np.all(np.isfinite(grad))

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            logistic_cost(np.zeros(15), [])


def gradient_descent_fit(Z, y, steps=30000, lr=0.05):
    """Plain fixed-step gradient descent on the same loss; the fit oracle."""
    beta = np.zeros(Z.shape[1])
    n = len(y)
    for _ in range(steps):
        t = Z @ beta
        sig = 1.0 / (1.0 + np.exp(-np.clip(t, -500, 500)))
        beta -= lr * (Z.T @ (sig - y)) / n
    return beta


def disc_samples(rng, n=1500, radius=1.0, extent=3.5):
    pts = rng.uniform(-extent, extent, size=(n, 2))
    labels = (pts[:, 0] ** 2 + pts[:, 1] ** 2 > radius ** 2).astype(int)
    return pts, labels


class TestFit:
    def make_samples(self, pts, labels):
        return [LabeledSample((float(x), float(y)), int(l))
                for (x, y), l in zip(pts, labels)]

    def region(self, bbox=(-1.0, -1.0, 1.0, 1.0)):
        return Region(1, frozenset({(0, 0)}), bbox)

    def test_unit_disc_fit_matches_oracle(self):
        rng = np.random.default_rng(6)
        pts, labels = disc_samples(rng)
        bf, report = fit(self.make_samples(pts, labels), self.region(), window=2.5)
        assert report.train_accuracy >= 0.95
        assert eval_h(bf, 0.0, 0.0) < 0.0
        assert eval_h(bf, 3.0, 3.0) > 0.0
        # reference gradient-descent fit classifies the same way
        Z = feature_matrix(pts)
        oracle_beta = gradient_descent_fit(Z, labels)
        oracle_pred = (Z @ oracle_beta) > 0
        got_pred = np.array([eval_h(bf, x, y) > 0 for x, y in pts])
        assert np.mean(oracle_pred == got_pred) >= 0.95

    def test_concave_shape_classified(self, lshape_fit, lshape_grid):
        (bf, report), = lshape_fit
        assert report.train_accuracy >= 0.95

    def test_cost_decreases_monotonically(self):
        rng = np.random.default_rng(7)
        pts = np.vstack([rng.normal((-1.5, 0), 0.3, size=(60, 2)),
                         rng.normal((1.5, 0), 0.3, size=(60, 2))])
        labels = np.array([0] * 60 + [1] * 60)
        from safeplan.barrier import _bfgs, _cost_grad
        Z = feature_matrix(pts)
        y = labels.astype(float)
        _, history, _, _ = _bfgs(lambda b: _cost_grad(b, Z, y), np.zeros(15))
        diffs = np.diff(history)
        assert np.all(diffs < 0.0)

    def test_relabel_negates_decision_function(self):
        rng = np.random.default_rng(8)
        pts = np.vstack([rng.normal((-1.0, -0.5), 0.25, size=(40, 2)),
                         rng.normal((1.0, 0.5), 0.25, size=(40, 2))])
        labels = np.array([0] * 40 + [1] * 40)
        bf_a, _ = fit(self.make_samples(pts, labels), self.region(), window=2.0)
        bf_b, _ = fit(self.make_samples(pts, 1 - labels), self.region(), window=2.0)
        t_a = feature_matrix(pts) @ bf_a.beta
        t_b = feature_matrix(pts) @ bf_b.beta
        assert np.all(np.sign(t_a) == -np.sign(t_b))

    def test_single_label_window_rejected(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(-1, 1, size=(50, 2))
        with pytest.raises(FitError, match="single label"):
            fit(self.make_samples(pts, np.ones(50, dtype=int)), self.region(), window=1.0)

    def test_too_few_samples_rejected(self):
        pts = np.array([[0.1, 0.1], [0.2, -0.3], [-0.4, 0.2]])
        with pytest.raises(FitError, match="16"):
            fit(self.make_samples(pts, [0, 1, 0]), self.region(), window=1.0)

    def test_sign_convention_free_positive(self, rect_fit, rect_grid):
        (bf, _), = rect_fit
        assert eval_h(bf, 4.5, 3.75) < 0.0  # obstacle center
        assert eval_h(bf, 2.8, 2.2) > 0.0   # free corner of the window


class TestComposeAffine:
    def test_world_eval_matches_normalized(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            beta = rng.normal(size=15)
            cx, cy = rng.uniform(-5, 5, size=2)
            sx, sy = rng.uniform(0.5, 4.0, size=2)
            world = compose_affine(beta, cx, cy, sx, sy)
            for _ in range(5):
                x, y = rng.uniform(-6, 6, size=2)
                normalized = features((x - cx) / sx, (y - cy) / sy)
                expected = float(beta @ normalized)
                got = float(world @ features(x, y))
                assert math.isclose(got, expected, rel_tol=1e-9, abs_tol=1e-9)


class TestEvalH:
    def test_constant_barrier(self):
        beta = np.zeros(15)
        beta[0] = 1.0
        bf = BarrierFunction(beta, 1, (0, 0, 1, 1))
        assert eval_h(bf, 12.3, -4.5) == 1.0

    def test_circle_boundary(self):
        beta = np.zeros(15)
        beta[0] = -1.0
        beta[EXPONENT_PAIRS.index((2, 0))] = 1.0
        beta[EXPONENT_PAIRS.index((0, 2))] = 1.0
        bf = BarrierFunction(beta, 1, (-2, -2, 2, 2))
        assert math.isclose(eval_h(bf, 1.0, 0.0), 0.0, abs_tol=1e-15)

    def test_matches_naive_monomial_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            beta = rng.normal(size=15)
            bf = BarrierFunction(beta, 1, (0, 0, 1, 1))
            x1, x2 = rng.uniform(-2, 2, size=2)
            naive = sum(b * x1 ** i * x2 ** j
                        for b, (i, j) in zip(beta, EXPONENT_PAIRS))
            assert math.isclose(eval_h(bf, x1, x2), naive, rel_tol=1e-12, abs_tol=1e-12)

    def test_total_degree_at_most_four(self):
        # fifth-order finite differences of a quartic vanish identically
        rng = np.random.default_rng(12)
        beta = rng.normal(size=15)
        bf = BarrierFunction(beta, 1, (0, 0, 1, 1))
        coeffs = [1, -5, 10, -10, 5, -1]
        for axis in (0, 1):
            for _ in range(5):
                x0, y0 = rng.uniform(-2, 2, size=2)
                total = 0.0
                for k, c in enumerate(coeffs):
                    x = x0 + (k if axis == 0 else 0)
                    y = y0 + (k if axis == 1 else 0)
                    total += c * eval_h(bf, x, y)
                assert abs(total) <= 1e-8 * max(1.0, abs(eval_h(bf, x0 + 5, y0 + 5)))

    def test_beta_length_validated(self):
        with pytest.raises(ValueError):
            BarrierFunction(np.zeros(14), 1, (0, 0, 1, 1))
        with pytest.raises(ValueError):
            BarrierFunction(np.full(15, np.nan), 1, (0, 0, 1, 1))


class TestBarrierFileRoundTrip:
    def test_save_load_exact(self, tmp_path, rect_fit):
        (bf, _), = rect_fit
        path = str(tmp_path / "a.barriers")
        save_barriers(path, [bf])
        loaded, = load_barriers(path)
        assert loaded.region_id == bf.region_id
        assert loaded.window == bf.window
        assert np.array_equal(loaded.beta, bf.beta)

    def test_malformed_record_rejected(self, tmp_path):
        path = tmp_path / "bad.barriers"
        path.write_text("region 1; window 0 0 1; beta " + " ".join(["0.0"] * 15) + "\n")
        with pytest.raises(ValueError, match="malformed"):
            load_barriers(str(path))
