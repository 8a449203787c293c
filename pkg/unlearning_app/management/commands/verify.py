import logging
from pathlib import Path

from django.conf import settings

from utils.serialization import dump_json

from ...experiments import apply_overrides, build_setup, load_config, reference_configs, verify_experiment
from ..experiment_command import ChecksFailed, ExperimentCommand

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Run the exact and/or statistical check suites; exits with status 2 if any check fails.'
    config_required = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--suite', choices=['exact', 'statistical', 'all'], default='exact')

    def report_path(self, options) -> Path:
        out = Path(options.get('out') or settings.UNLEARN_OUTPUT_DIR)
        return out if out.suffix == '.json' else out / 'verify_report.json'

    def configs(self, raw, options):
        if raw is not None:
            return [raw]
        paths = reference_configs()
        logger.info("Verifying %s shipped configs", len(paths))
        return [
            apply_overrides(load_config(path), options.get('seed'), options.get('replicas'), options.get('variant'))
            for path in paths
        ]

    def execute_experiment(self, raw, options):
        results = {}
        for config in self.configs(raw, options):
            setup = build_setup(config)
            results[setup.name] = verify_experiment(
                setup, options['suite'], options.get('replicas'), self.workers(options),
                settings.UNLEARN_MIN_REPLICAS,
            )
        failed = [
            f"{name}:{report['name']}"
            for name, reports in results.items() for report in reports if not report['passed']
        ]
        report = {'suite': options['suite'], 'configs': results, 'passed': not failed, 'failed': failed}
        dump_json(report, self.report_path(options))
        for name, reports in results.items():
            for item in reports:
                status = 'SKIP' if item['skipped'] else ('PASS' if item['passed'] else 'FAIL')
                self.stdout.write(f"{status} {name} {item['name']} violations={item['violations']}")
        if failed:
            raise ChecksFailed(f"{len(failed)} checks failed: {', '.join(failed)}", report)
        return report
