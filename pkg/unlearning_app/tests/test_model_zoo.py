import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from utils.exceptions import ConfigError, DomainError
from utils.model_zoo import (
    ConvexityClass,
    LossFamily,
    LossSpec,
    ProjectionSet,
    batch_grad,
    batch_loss,
    certified_constants,
    eval_grad,
    eval_loss,
    paired_grads,
    per_sample_grads,
    sample_domain,
    validate_labels,
)
from utils.verify import check_gradient_agreement

finite = st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False)


def make_spec(family, d=2, radius=1.0, params=None, ball=2.0, theta0=None):
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    return certified_constants(family, params, radius, ProjectionSet.ball(d, ball), theta0)


class LossEvaluationTests(SimpleTestCase):
    def setUp(self):
        self.quadratic = make_spec(LossFamily.QUADRATIC)

    def test_quadratic_values(self):
        self.assertEqual(eval_loss(self.quadratic, ((0.0, 0.0), 0.0), [0.0, 0.0]), 0.0)
        self.assertAlmostEqual(eval_loss(self.quadratic, ((1.0, 0.0), 0.0), [0.0, 0.0]), 0.5)

    def test_quadratic_gradients(self):
        np.testing.assert_array_equal(eval_grad(self.quadratic, ((1.0, 0.0), 0.0), [1.0, 0.0]), [0.0, 0.0])
        np.testing.assert_array_equal(eval_grad(self.quadratic, ((0.0, 0.0), 0.0), [2.0, 0.0]), [2.0, 0.0])

    def test_ridge_logistic_matches_direct_formula(self):
        spec = make_spec(LossFamily.RIDGE_LOGISTIC, d=3, params={'lambda': 0.1})
        rng = np.random.default_rng(3)
        X, y = sample_domain(spec, rng, 20)
        for x, label in zip(X, y):
            theta = rng.standard_normal(3)
            expected = math.log(1.0 + math.exp(-label * float(x @ theta))) + 0.05 * float(theta @ theta)
            self.assertAlmostEqual(eval_loss(spec, (x, label), theta), expected, delta=1e-12)

    def test_non_finite_input_is_a_domain_error(self):
        with self.assertRaises(DomainError):
            eval_loss(self.quadratic, ((math.nan, 0.0), 0.0), [0.0, 0.0])

    def test_batch_helpers_agree_with_per_sample_rows(self):
        spec = make_spec(LossFamily.SMOOTH_NONCONVEX, d=4)
        rng = np.random.default_rng(0)
        X, y = sample_domain(spec, rng, 30)
        theta = rng.standard_normal(4)
        rows = per_sample_grads(spec, X, y, theta)
        np.testing.assert_allclose(batch_grad(spec, X, y, theta), rows.mean(axis=0))
        np.testing.assert_allclose(paired_grads(spec, X, y, np.tile(theta, (30, 1))), rows)
        self.assertGreaterEqual(batch_loss(spec, X, y, theta), 0.0)

    def test_gradients_match_finite_differences_for_every_family(self):
        for family, params in [
            (LossFamily.QUADRATIC, None),
            (LossFamily.RIDGE_LOGISTIC, {'lambda': 0.1}),
            (LossFamily.LOGISTIC, None),
            (LossFamily.SMOOTH_NONCONVEX, None),
        ]:
            with self.subTest(family=family):
                report = check_gradient_agreement(make_spec(family, d=3, params=params), trials=100, seed=1)
                self.assertTrue(report.passed, report.details)


class CertifiedConstantsTests(SimpleTestCase):
    def test_quadratic_constants(self):
        spec = make_spec(LossFamily.QUADRATIC, radius=1.5, ball=2.0)
        self.assertEqual((spec.L, spec.mu), (1.0, 1.0))
        self.assertAlmostEqual(spec.G, 3.5)
        self.assertEqual(spec.convexity_class, ConvexityClass.STRONGLY_CONVEX)
        self.assertEqual((spec.noise_B, spec.noise_C), (1.0, 2.25))

    def test_ridge_logistic_constants(self):
        spec = make_spec(LossFamily.RIDGE_LOGISTIC, params={'lambda': 0.1})
        self.assertAlmostEqual(spec.mu, 0.1)
        self.assertAlmostEqual(spec.L, 0.35)
        self.assertAlmostEqual(spec.interp_const, math.log(2.0))

    def test_logistic_is_convex_with_zero_mu(self):
        spec = make_spec(LossFamily.LOGISTIC, radius=2.0)
        self.assertEqual(spec.mu, 0.0)
        self.assertAlmostEqual(spec.L, 1.0)
        self.assertEqual(spec.convexity_class, ConvexityClass.CONVEX)

    def test_ridge_logistic_requires_positive_lambda(self):
        with self.assertRaises(ConfigError):
            make_spec(LossFamily.RIDGE_LOGISTIC, params={'lambda': 0.0})
        with self.assertRaises(ConfigError):
            make_spec(LossFamily.QUADRATIC, params={'lambda': 0.3})

    def test_unknown_family(self):
        with self.assertRaises(ConfigError):
            make_spec('Hinge')

    def test_loss_spec_rejects_mu_above_l(self):
        with self.assertRaises(ConfigError):
            LossSpec(LossFamily.QUADRATIC, 2, 1.0, 2.0, ConvexityClass.STRONGLY_CONVEX,
                     1.0, 1.0, 1.0, 1.0, 0.5, 1.0)

    def test_loss_spec_rejects_inconsistent_class(self):
        with self.assertRaises(ConfigError):
            LossSpec(LossFamily.LOGISTIC, 2, 1.0, 0.0, ConvexityClass.STRONGLY_CONVEX,
                     1.0, 0.0, 1.0, 1.0, 0.5, 1.0)

    def test_label_validation(self):
        spec = make_spec(LossFamily.LOGISTIC)
        validate_labels(spec, [1.0, -1.0])
        with self.assertRaises(DomainError):
            validate_labels(spec, [0.0, 1.0])
        with self.assertRaises(DomainError):
            validate_labels(make_spec(LossFamily.SMOOTH_NONCONVEX), [1.5])


class ProjectionTests(SimpleTestCase):
    def test_inside_point_is_unchanged(self):
        ball = ProjectionSet.ball(2, 1.0)
        np.testing.assert_array_equal(ball.project([0.3, -0.2]), [0.3, -0.2])

    def test_outside_point_is_scaled_to_the_radius(self):
        ball = ProjectionSet.ball(2, 1.0)
        np.testing.assert_allclose(ball.project([3.0, 0.0]), [1.0, 0.0])

    def test_off_center_ball(self):
        ball = ProjectionSet.ball(2, 1.0, center=[1.0, 1.0])
        np.testing.assert_allclose(ball.project([1.0, 4.0]), [1.0, 2.0])
        self.assertAlmostEqual(ball.outer_radius, math.sqrt(2.0) + 1.0)

    def test_invalid_radius(self):
        with self.assertRaises(ConfigError):
            ProjectionSet.ball(2, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, 3, elements=finite), arrays(np.float64, 3, elements=finite))
    def test_projection_is_nonexpansive(self, u, v):
        ball = ProjectionSet.ball(3, 1.5, center=[0.5, 0.0, -0.5])
        gap = np.linalg.norm(ball.project(u) - ball.project(v))
        self.assertLessEqual(gap, np.linalg.norm(u - v) + 1e-12)
        self.assertTrue(ball.contains(ball.project(u), rtol=1e-9))
