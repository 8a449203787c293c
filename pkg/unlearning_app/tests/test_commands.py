import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from unlearning_app.models import ExperimentRecord

from .factories import QUADRATIC_D2D, make_config


class CommandTestCase(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write_config(self, raw, name='config.json'):
        path = self.tmp / name
        path.write_text(json.dumps(raw))
        return str(path)

    def call(self, command, *args, **options):
        out = StringIO()
        call_command(command, *args, stdout=out, **options)
        return out.getvalue()

    def assertExitStatus(self, status, command, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(command, *args, **options)
        self.assertEqual(ctx.exception.returncode, status)
        return ctx.exception


class CalibrateCommandTests(CommandTestCase):
    def test_prints_and_writes_the_calibration(self):
        out_dir = self.tmp / 'out'
        result = json.loads(self.call('calibrate', config=self.write_config(make_config()), out=str(out_dir)))
        self.assertEqual(result['method'], 'PSGD_R2D')
        self.assertEqual(result['regime'], 'StronglyConvex')
        self.assertEqual(result['variant'], 'Appendix')
        self.assertEqual(result['guarantee'], {'epsilon': 1.0, 'delta': 0.1})
        self.assertGreater(result['sigma'], 0)
        self.assertIn('sigma_cap', result['plan'])
        self.assertEqual(json.loads((out_dir / 'calibration.json').read_text()), result)

    def test_variant_override(self):
        main = json.loads(self.call('calibrate', config=self.write_config(make_config()), variant='main'))
        appendix = json.loads(self.call('calibrate', config=self.write_config(make_config())))
        self.assertEqual(main['variant'], 'MainText')
        self.assertNotEqual(main['sensitivity']['Sigma'], appendix['sensitivity']['Sigma'])

    def test_target_sigma_sets_k(self):
        raw = make_config(certify={'target_sigma': 0.05})
        result = json.loads(self.call('calibrate', config=self.write_config(raw)))
        self.assertEqual(result['plan']['K_source'], 'target_sigma')
        self.assertLessEqual(result['sensitivity']['Sigma'], 0.05)
        self.assertEqual(result['plan']['K'], result['plan']['K_for_target'])

    def test_d2d_horizon_is_planned(self):
        result = json.loads(self.call('calibrate', config=self.write_config(make_config(QUADRATIC_D2D))))
        self.assertEqual(result['method'], 'SGD_D2D')
        self.assertEqual(result['plan']['T'], 30)
        self.assertEqual(result['sensitivity']['moment'], 'SecondMoment')

    def test_noisy_release_is_flagged(self):
        raw = make_config(certify={'noise_mode': 'noisy_release'})
        result = json.loads(self.call('calibrate', config=self.write_config(raw)))
        self.assertTrue(any('noisy_release' in w for w in result['warnings']))

    def test_step_size_violation_exits_with_validation_status(self):
        raw = make_config(run={'eta': 1.5})
        error = self.assertExitStatus(1, 'calibrate', config=self.write_config(raw))
        self.assertIn('eta <= mu/L^2', str(error))

    def test_d2d_fraction_violation(self):
        raw = make_config(QUADRATIC_D2D, unlearn={'m': 10})
        error = self.assertExitStatus(1, 'calibrate', config=self.write_config(raw))
        self.assertIn('m/n < 1/(6B+1)', str(error))

    def test_regime_cannot_be_strengthened(self):
        raw = make_config(loss={'family': 'Logistic'}, certify={'regime': 'StronglyConvex'})
        self.assertExitStatus(1, 'calibrate', config=self.write_config(raw))

    def test_invalid_and_missing_configs(self):
        self.assertExitStatus(1, 'calibrate')
        self.assertExitStatus(1, 'calibrate', config=str(self.tmp / 'missing.json'))
        error = self.assertExitStatus(1, 'calibrate', config=self.write_config(make_config(run={'eta': -1})))
        self.assertIn('run.eta', str(error))

    def test_record_flag_stores_a_row(self):
        self.call('calibrate', config=self.write_config(make_config()), record=True)
        self.assertExitStatus(1, 'calibrate', config=self.write_config(make_config(run={'eta': 1.5})), record=True)
        ok, failed = ExperimentRecord.objects.order_by('id')
        self.assertEqual((ok.command, ok.exit_status, ok.config_name), ('calibrate', 0, 'quadratic_r2d'))
        self.assertEqual(failed.exit_status, 1)
        self.assertIn('error', failed.summary)
        self.assertEqual(ok.config_digest, ExperimentRecord.digest(ok.config))


class RunCommandTests(CommandTestCase):
    def run_into(self, out_dir, raw=None, **options):
        config = self.write_config(raw or make_config(replicas=3))
        return json.loads(self.call('run', config=config, out=str(out_dir), **options))

    def test_artifacts(self):
        out_dir = self.tmp / 'run'
        summary = self.run_into(out_dir, coupled=True)
        self.assertEqual(summary['files'], ['releases.csv', 'distances.csv'])
        for replica in range(3):
            for role in ('learn', 'unlearn', 'retrain'):
                self.assertTrue((out_dir / f'{role}_replica{replica}.json').exists())
        releases = pd.read_csv(out_dir / 'releases.csv')
        self.assertEqual(list(releases.columns), ['schema_version', 'replica', 'role', 'theta_0', 'theta_1', 'theta_2'])
        self.assertEqual(len(releases), 6)
        distances = pd.read_csv(out_dir / 'distances.csv')
        self.assertEqual(len(distances), 3 * 31)
        self.assertTrue((distances.loc[distances.t == 0, 'dist_train_retrain'] == 0).all())

    def test_same_seed_gives_identical_files(self):
        first, second = self.tmp / 'a', self.tmp / 'b'
        self.run_into(first)
        self.run_into(second, workers=2)
        for name in ('releases.csv', 'summary.json', 'learn_replica2.json', 'unlearn_replica1.json'):
            self.assertEqual((first / name).read_bytes(), (second / name).read_bytes(), name)

    def test_iterate_thinning_flags(self):
        def steps(out_dir, role='learn'):
            return json.loads((out_dir / f'{role}_replica0.json').read_text())['iterate_steps']

        self.run_into(self.tmp / 'plain', make_config(replicas=1))
        self.assertEqual(steps(self.tmp / 'plain'), [0, 30])
        self.run_into(self.tmp / 'all', make_config(replicas=1), store_iterates=True)
        self.assertEqual(steps(self.tmp / 'all'), list(range(31)))
        self.run_into(self.tmp / 'thin', make_config(replicas=1), record_every=10)
        self.assertEqual(steps(self.tmp / 'thin'), [0, 10, 20, 30])
        self.assertEqual(steps(self.tmp / 'thin', 'unlearn'), [0, 10])

    def test_seed_override_changes_the_releases(self):
        first, second = self.tmp / 'a', self.tmp / 'b'
        self.run_into(first)
        self.run_into(second, seed=99)
        self.assertNotEqual((first / 'releases.csv').read_bytes(), (second / 'releases.csv').read_bytes())

    def test_noisy_release_mode_runs(self):
        out_dir = self.tmp / 'noisy'
        summary = self.run_into(out_dir, make_config(replicas=2, certify={'noise_mode': 'noisy_release'}))
        self.assertEqual(summary['calibration']['noise_mode'], 'noisy_release')

    @override_settings(UNLEARN_DIVERGENCE_LIMIT=1e-6)
    def test_divergence_exits_with_status_three(self):
        error = self.assertExitStatus(3, 'run', config=self.write_config(make_config(replicas=1)),
                                      out=str(self.tmp / 'div'), record=True)
        self.assertIn('numeric divergence at step 1', str(error))
        self.assertEqual(ExperimentRecord.objects.get().summary['step'], 1)


class SweepCommandTests(CommandTestCase):
    def test_k_sweep_table(self):
        config = self.write_config(make_config())
        self.call('sweep', config=config, out=str(self.tmp), axis='K', values='0,10,20,30')
        table = pd.read_csv(self.tmp / 'sweep_K.csv')
        self.assertEqual(
            list(table.columns),
            ['schema_version', 'K', 'T', 'm', 'epsilon', 'Sigma', 'sigma', 'mc_mean', 'mc_se'],
        )
        self.assertEqual(list(table.K), [0, 10, 20, 30])
        self.assertTrue(table.Sigma.is_monotonic_decreasing)
        self.assertEqual(table.Sigma.iloc[-1], 0.0)

    def test_sweep_section_of_the_config(self):
        raw = make_config(sweep={'axis': 'epsilon', 'values': [0.5, 1.0, 2.0]})
        self.call('sweep', config=self.write_config(raw), out=str(self.tmp))
        table = pd.read_csv(self.tmp / 'sweep_epsilon.csv')
        self.assertTrue(table.sigma.is_monotonic_decreasing)

    @override_settings(UNLEARN_MIN_REPLICAS=5)
    def test_monte_carlo_column(self):
        raw = make_config(replicas=5)
        self.call('sweep', config=self.write_config(raw), out=str(self.tmp), axis='m', values='2,4', monte_carlo=True)
        table = pd.read_csv(self.tmp / 'sweep_m.csv')
        self.assertTrue(table.mc_mean.notna().all())

    def test_bad_values(self):
        config = self.write_config(make_config())
        self.assertExitStatus(1, 'sweep', config=config, out=str(self.tmp), axis='K', values='1,x')
        self.assertExitStatus(1, 'sweep', config=config, out=str(self.tmp), axis='K', values='1.5')
        self.assertExitStatus(1, 'sweep', config=config, out=str(self.tmp), axis='K', values='10,40')


class VerifyCommandTests(CommandTestCase):
    def test_exact_suite_passes(self):
        out = self.call('verify', config=self.write_config(make_config()), out=str(self.tmp))
        report = json.loads((self.tmp / 'verify_report.json').read_text())
        self.assertTrue(report['passed'])
        self.assertIn('PASS quadratic_r2d contraction', out)

    def test_negative_fixture_fails_with_status_two(self):
        raw = make_config(negative_fixture=True, verify={'trials': 500, 'contraction_eta': 1.9})
        report_path = self.tmp / 'negative.json'
        self.assertExitStatus(2, 'verify', config=self.write_config(raw), out=str(report_path), record=True)
        report = json.loads(report_path.read_text())
        self.assertFalse(report['passed'])
        self.assertIn('quadratic_r2d:contraction', report['failed'])
        self.assertEqual(ExperimentRecord.objects.get().exit_status, 2)

    @override_settings(UNLEARN_MIN_REPLICAS=20)
    def test_statistical_suite(self):
        self.call('verify', config=self.write_config(make_config()), out=str(self.tmp), suite='statistical')
        report = json.loads((self.tmp / 'verify_report.json').read_text())
        names = [r['name'] for r in report['configs']['quadratic_r2d']]
        self.assertIn('end_to_end_sensitivity', names)
        self.assertTrue(report['passed'])

    @override_settings(UNLEARN_MIN_REPLICAS=20)
    def test_too_few_replicas(self):
        config = self.write_config(make_config())
        self.assertExitStatus(1, 'verify', config=config, out=str(self.tmp), suite='statistical', replicas=5)

    def test_reference_configs_skip_negative_fixtures(self):
        configs = self.tmp / 'configs'
        configs.mkdir()
        (configs / 'good.json').write_text(json.dumps(make_config(name='good')))
        bad = make_config(name='bad', negative_fixture=True, verify={'trials': 500, 'contraction_eta': 1.9})
        (configs / 'bad.json').write_text(json.dumps(bad))
        with override_settings(UNLEARN_REFERENCE_CONFIG_DIR=configs):
            self.call('verify', out=str(self.tmp))
        report = json.loads((self.tmp / 'verify_report.json').read_text())
        self.assertEqual(list(report['configs']), ['good'])
