from django.test import SimpleTestCase

from unlearning_app.experiments import apply_overrides, build_setup
from unlearning_app.forms import SweepForm, validate_config
from utils.certify import Method, NoiseMode, Regime
from utils.exceptions import CertificationError, ConfigError

from .factories import QUADRATIC_D2D, make_config


class ValidateConfigTests(SimpleTestCase):
    def test_defaults_are_filled(self):
        cleaned = validate_config(make_config())
        self.assertEqual(cleaned['unlearn']['selection'], 'first_m')
        self.assertEqual(cleaned['run']['algorithm'], 'R2D')
        self.assertEqual(cleaned['run']['record_every'], 1)
        self.assertEqual(cleaned['certify']['variant'], 'appendix')
        self.assertEqual(cleaned['certify']['noise_mode'], 'noiseless_checkpoint')
        self.assertFalse(cleaned['experiment']['negative_fixture'])
        self.assertNotIn('sweep', cleaned)

    def test_errors_from_every_section_are_collected(self):
        raw = make_config(privacy={'delta': 1.5}, run={'eta': 0}, bogus=1)
        del raw['dataset']
        with self.assertRaises(ConfigError) as ctx:
            validate_config(raw)
        message = str(ctx.exception)
        for fragment in ('dataset: section is required', 'run.eta', 'privacy: delta must lie in (0, 1)', 'bogus'):
            self.assertIn(fragment, message)

    def test_ridge_logistic_needs_lambda(self):
        with self.assertRaisesMessage(ConfigError, 'params.lambda'):
            validate_config(make_config(loss={'family': 'RidgeLogistic'}))

    def test_d2d_runs_are_unprojected(self):
        with self.assertRaisesMessage(ConfigError, 'D2D runs are unprojected'):
            validate_config(make_config(run={'algorithm': 'D2D'}))

    def test_explicit_indices(self):
        raw = make_config(unlearn={'selection': 'explicit_indices', 'indices': [3, 1], 'm': None})
        self.assertEqual(validate_config(raw)['unlearn']['indices'], [3, 1])
        with self.assertRaises(ConfigError):
            validate_config(make_config(unlearn={'selection': 'explicit_indices', 'indices': [1.5]}))

    def test_sweep_form_casts_integer_axes(self):
        form = SweepForm(data={'axis': 'T', 'values': [10.0, 20.0]})
        self.assertTrue(form.is_valid())
        self.assertEqual(form.cleaned_data['values'], [10, 20])
        self.assertFalse(SweepForm(data={'axis': 'm', 'values': []}).is_valid())


class BuildSetupTests(SimpleTestCase):
    def test_projected_quadratic(self):
        setup = build_setup(make_config())
        self.assertEqual(setup.method, Method.PSGD_R2D)
        self.assertEqual(setup.regime, Regime.STRONGLY_CONVEX)
        self.assertEqual((setup.n, setup.m), (40, 4))
        self.assertEqual(setup.request.indices, (0, 1, 2, 3))
        self.assertEqual(setup.run.theta0, (0.0, 0.0, 0.0))
        self.assertAlmostEqual(setup.spec.G, 3.0)

    def test_weaker_regime_is_allowed(self):
        setup = build_setup(make_config(certify={'regime': 'Convex'}))
        self.assertEqual(setup.regime, Regime.CONVEX)

    def test_method_must_match_the_run(self):
        with self.assertRaises(ConfigError):
            build_setup(make_config(certify={'method': 'SGD_D2D'}))

    def test_unprojected_r2d_uses_sgd_bound(self):
        setup = build_setup(make_config(run={'projected': False}))
        self.assertEqual(setup.method, Method.SGD_R2D)
        self.assertIsNone(setup.run.projection)

    def test_descent_to_delete_horizon(self):
        setup = build_setup(make_config(QUADRATIC_D2D))
        self.assertEqual((setup.run.T, setup.run.K), (30, 5))
        self.assertEqual(setup.plan['T_source'], 'd2d_training_horizon')
        self.assertAlmostEqual(setup.projection.radius, 3.0)

    def test_horizon_below_target_keeps_k(self):
        setup = build_setup(make_config(QUADRATIC_D2D, run={'theta0': [0.0, 0.0]}))
        self.assertEqual(setup.run.T, 5)
        self.assertEqual(len(setup.warnings), 1)

    def test_target_sigma_outside_strongly_convex_psgd_warns(self):
        setup = build_setup(make_config(QUADRATIC_D2D, certify={'target_sigma': 0.1}))
        self.assertEqual(setup.run.K, 5)
        self.assertIn('target_sigma', setup.warnings[-1])

    def test_theta0_outside_the_projection(self):
        with self.assertRaises(ConfigError):
            build_setup(make_config(run={'theta0': [5.0, 0.0, 0.0]}))

    def test_noise_mode(self):
        setup = build_setup(make_config(certify={'noise_mode': 'noisy_release'}))
        self.assertEqual(setup.noise_mode, NoiseMode.NOISY_RELEASE)

    def test_convex_step_size_violation(self):
        with self.assertRaisesMessage(CertificationError, 'eta <= 2/L'):
            build_setup(make_config(loss={'family': 'Logistic'}, run={'eta': 9.0}))

    def test_overrides_do_not_touch_the_original(self):
        raw = make_config()
        changed = apply_overrides(raw, seed=9, replicas=3, variant='main')
        self.assertEqual((changed['seed'], changed['replicas'], changed['certify']['variant']), (9, 3, 'main'))
        self.assertNotIn('certify', raw)
