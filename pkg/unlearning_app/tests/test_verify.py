import numpy as np
from django.test import SimpleTestCase

from unlearning_app.experiments import build_setup
from utils.certify import Method, PrivacyBudget, Regime
from utils.data_engine import UnlearnRequest, synthesize_dataset
from utils.exceptions import ConfigError
from utils.model_zoo import LossFamily, ProjectionSet, certified_constants
from utils.verify import (
    check_bias_bounds,
    check_biased_descent,
    check_contraction,
    check_coupled_divergence,
    check_end_to_end_sensitivity,
    check_gaussian_indistinguishability_1d,
    check_gradient_bound,
    check_init_loss_bound,
    check_projection_nonexpansive,
    check_quadratic_growth,
    check_same_loss_contraction,
    check_sgd_convergence,
    check_smoothness,
    check_strong_convexity,
    collect_replica_summaries,
    run_suite,
)

from .factories import QUADRATIC_D2D, make_config

FAMILIES = [
    (LossFamily.QUADRATIC, None),
    (LossFamily.RIDGE_LOGISTIC, {'lambda': 0.5}),
    (LossFamily.LOGISTIC, None),
    (LossFamily.SMOOTH_NONCONVEX, None),
]


def make_spec(family, params=None, d=3, theta0=None):
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    return certified_constants(family, params, 1.0, ProjectionSet.ball(d, 2.0), theta0)


class LossCertificateTests(SimpleTestCase):
    def test_certificates_hold_for_every_family(self):
        projection = ProjectionSet.ball(3, 2.0)
        for family, params in FAMILIES:
            spec = make_spec(family, params, theta0=[0.5, -0.5, 0.0])
            for report in (
                check_smoothness(spec, 2000, seed=3),
                check_strong_convexity(spec, 2000, seed=3),
                check_gradient_bound(spec, projection, 2000, seed=3),
                check_init_loss_bound(spec, [0.5, -0.5, 0.0], 2000, seed=3),
                check_projection_nonexpansive(spec, projection, 2000, seed=3),
            ):
                with self.subTest(family=family, check=report.name):
                    self.assertTrue(report.passed, report.summary_line())
                    self.assertEqual(report.violations, 0)

    def test_nonconvex_family_skips_the_convexity_certificate(self):
        report = check_strong_convexity(make_spec(LossFamily.SMOOTH_NONCONVEX), 100)
        self.assertTrue(report.skipped)
        self.assertTrue(report.summary_line().startswith('SKIP'))

    def test_contraction_inside_the_step_size_range(self):
        quadratic = make_spec(LossFamily.QUADRATIC)
        self.assertTrue(check_contraction(quadratic, 0.5, 2000, seed=1).passed)
        logistic = make_spec(LossFamily.LOGISTIC)
        self.assertTrue(check_contraction(logistic, 2.0 / logistic.L, 2000, seed=1).passed)
        ridge = make_spec(LossFamily.RIDGE_LOGISTIC, {'lambda': 0.5})
        self.assertTrue(check_contraction(ridge, ridge.mu / ridge.L ** 2, 2000, seed=1).passed)

    def test_contraction_fails_outside_the_step_size_range(self):
        report = check_contraction(make_spec(LossFamily.QUADRATIC), 1.9, 2000, seed=1)
        self.assertFalse(report.passed)
        self.assertGreater(report.violations, 0)
        self.assertLess(report.worst_margin, 0)
        self.assertTrue(report.summary_line().startswith('FAIL'))


class DatasetCertificateTests(SimpleTestCase):
    def test_bias_bounds_with_relative_bound(self):
        spec = make_spec(LossFamily.QUADRATIC)
        dataset = synthesize_dataset(spec, 100, seed=4)
        report = check_bias_bounds(dataset, UnlearnRequest(tuple(range(10)), 100), spec, 300, seed=2)
        self.assertTrue(report.passed, report.summary_line())
        self.assertTrue(report.details['relative_checked'])
        self.assertAlmostEqual(report.details['chi_square'], 1.0 / 9.0)

    def test_bias_bounds_without_relative_noise(self):
        spec = make_spec(LossFamily.LOGISTIC)
        dataset = synthesize_dataset(spec, 50, seed=4)
        report = check_bias_bounds(dataset, UnlearnRequest((0, 1, 2), 50), spec, 300, seed=2)
        self.assertTrue(report.passed)
        self.assertFalse(report.details['relative_checked'])

    def test_quadratic_growth(self):
        for family, params in FAMILIES[:2]:
            spec = make_spec(family, params)
            report = check_quadratic_growth(spec, synthesize_dataset(spec, 60, seed=1), 500, seed=1)
            with self.subTest(family=family):
                self.assertTrue(report.passed, report.summary_line())
        spec = make_spec(LossFamily.LOGISTIC)
        self.assertTrue(check_quadratic_growth(spec, synthesize_dataset(spec, 20, seed=1), 10).skipped)

    def test_gaussian_indistinguishability(self):
        self.assertTrue(check_gaussian_indistinguishability_1d(4.0, 12.43, 1.0, 0.01).passed)
        self.assertFalse(check_gaussian_indistinguishability_1d(4.0, 0.5, 1.0, 0.01).passed)
        self.assertTrue(check_gaussian_indistinguishability_1d(0.0, 0.0, 1.0, 0.01).passed)


class ReplicaCheckTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.setup = build_setup(make_config())
        cls.summaries = collect_replica_summaries(
            cls.setup.run, cls.setup.dataset, cls.setup.request, cls.setup.spec, 20, min_replicas=20
        )

    def common(self):
        s = self.setup
        return (s.run, s.dataset, s.request, s.spec)

    def test_summaries_are_ordered(self):
        self.assertEqual([s.replica_id for s in self.summaries], list(range(20)))
        self.assertEqual(self.summaries[0].distances.shape, (self.setup.run.T + 1,))

    def test_coupled_divergence(self):
        report = check_coupled_divergence(*self.common(), 20, summaries=self.summaries, min_replicas=20)
        self.assertTrue(report.passed, report.summary_line())
        self.assertTrue(report.statistical)

    def test_end_to_end_sensitivity(self):
        report = check_end_to_end_sensitivity(
            *self.common(), self.setup.budget, 20, Method.PSGD_R2D, Regime.STRONGLY_CONVEX,
            summaries=self.summaries, min_replicas=20,
        )
        self.assertTrue(report.passed, report.summary_line())
        self.assertEqual(report.details['moment'], 'FirstMoment')

    def test_same_loss_contraction_has_no_violations(self):
        report = check_same_loss_contraction(*self.common(), 20, summaries=self.summaries, min_replicas=20)
        self.assertEqual(report.violations, 0)
        self.assertEqual(report.instances, 20 * (self.setup.run.K + 1))

    def test_projected_runs_skip_the_unprojected_lemmas(self):
        s = self.setup
        self.assertTrue(check_sgd_convergence(s.run, s.dataset, s.spec, 20, s.request).skipped)
        self.assertTrue(check_biased_descent(*self.common(), 20, summaries=self.summaries).skipped)

    def test_too_few_replicas(self):
        with self.assertRaises(ConfigError):
            check_coupled_divergence(*self.common(), 20, summaries=self.summaries, min_replicas=100)


class DescentToDeleteCheckTests(SimpleTestCase):
    def test_statistical_suite(self):
        setup = build_setup(make_config(QUADRATIC_D2D))
        self.assertEqual(setup.run.T, 30)
        reports = {r.name: r for r in run_suite(setup, 'statistical', replicas=20, min_replicas=20)}
        self.assertTrue(reports['same_loss_contraction'].skipped)
        for name in ('coupled_divergence', 'end_to_end_sensitivity', 'sgd_convergence', 'biased_descent'):
            with self.subTest(check=name):
                self.assertFalse(reports[name].skipped)
                self.assertTrue(reports[name].passed, reports[name].summary_line())
        self.assertEqual(reports['end_to_end_sensitivity'].details['moment'], 'SecondMoment')


class SuiteTests(SimpleTestCase):
    def test_exact_suite_passes(self):
        reports = run_suite(build_setup(make_config()), 'exact')
        self.assertEqual(len(reports), 10)
        for report in reports:
            with self.subTest(check=report.name):
                self.assertTrue(report.passed, report.summary_line())
                self.assertEqual(report.details['config'], 'quadratic_r2d')

    def test_exact_checks_use_the_full_trial_budget(self):
        setup = build_setup(make_config(verify={'trials': 3000}))
        self.assertEqual(setup.trials, 3000)
        for report in run_suite(setup, 'exact'):
            if report.skipped or report.name == 'gaussian_indistinguishability_1d':
                continue
            with self.subTest(check=report.name):
                self.assertGreaterEqual(report.instances, setup.trials)

    def test_unknown_suite(self):
        with self.assertRaises(ConfigError):
            run_suite(build_setup(make_config()), 'smoke')

    def test_contraction_eta_override_fails(self):
        setup = build_setup(make_config(verify={'trials': 500, 'contraction_eta': 1.9}))
        reports = {r.name: r for r in run_suite(setup, 'exact')}
        self.assertFalse(reports['contraction'].passed)

    def test_budget_is_used_for_indistinguishability(self):
        setup = build_setup(make_config(privacy={'epsilon': 0.5, 'delta': 0.01}))
        self.assertEqual(setup.budget, PrivacyBudget(0.5, 0.01))
        reports = {r.name: r for r in run_suite(setup, 'exact')}
        self.assertTrue(reports['gaussian_indistinguishability_1d'].passed)
