import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from utils.exceptions import ConfigError, NumericDivergenceError, StateError

from ..experiments import apply_overrides, build_setup, load_config, record_experiment

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_CHECK_FAILED = 2
EXIT_DIVERGENCE = 3


class ChecksFailed(Exception):
    """Raised by a command body after its outputs are written."""

    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary


class ExperimentCommand(BaseCommand):
    """Shared flags and exit-code mapping for calibrate / run / sweep / verify."""

    config_required = True

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Experiment config (JSON)')
        parser.add_argument('--out', help='Output directory (default: UNLEARN_OUTPUT_DIR)')
        parser.add_argument('--seed', type=int, help='Override the master seed')
        parser.add_argument('--replicas', type=int, help='Override the replica count')
        parser.add_argument('--variant', choices=['main', 'appendix'], help='Sensitivity formula variant')
        parser.add_argument('--workers', type=int, help='Process pool width (default: UNLEARN_WORKERS)')
        parser.add_argument('--store-iterates', action='store_true', default=None,
                            help='Keep intermediate iterates in trajectory records')
        parser.add_argument('--record-every', type=int, help='Keep every k-th iterate (implies --store-iterates)')
        parser.add_argument('--record', action='store_true', help='Store an ExperimentRecord row')

    # -------------------- helpers --------------------
    def out_dir(self, options) -> Path:
        return Path(options.get('out') or settings.UNLEARN_OUTPUT_DIR)

    def workers(self, options) -> int:
        return options.get('workers') or settings.UNLEARN_WORKERS

    def raw_config(self, options):
        if not options.get('config'):
            raise ConfigError('--config is required')
        raw = load_config(options['config'])
        return apply_overrides(
            raw, options.get('seed'), options.get('replicas'), options.get('variant'),
            store_iterates=options.get('store_iterates'), record_every=options.get('record_every'),
        )

    def setup(self, raw):
        return build_setup(raw)

    def execute_experiment(self, raw, options):
        raise NotImplementedError

    # -------------------- entry point --------------------
    def handle(self, *args, **options):
        raw = None
        try:
            if self.config_required or options.get('config'):
                raw = self.raw_config(options)
            summary = self.execute_experiment(raw, options)
        except ChecksFailed as exc:
            self._record(options, raw, exc.summary, EXIT_CHECK_FAILED)
            raise CommandError(str(exc), returncode=EXIT_CHECK_FAILED)
        except NumericDivergenceError as exc:
            logger.error("%s", exc)
            self._record(options, raw, {'error': str(exc), 'step': exc.step}, EXIT_DIVERGENCE)
            raise CommandError(str(exc), returncode=EXIT_DIVERGENCE)
        except (ConfigError, StateError) as exc:
            logger.error("%s", exc)
            self._record(options, raw, {'error': str(exc)}, EXIT_VALIDATION)
            raise CommandError(str(exc), returncode=EXIT_VALIDATION)
        self._record(options, raw, summary, 0)

    def _record(self, options, raw, summary, status):
        if options.get('record'):
            record_experiment(self.command_name, raw, summary, status, options.get('out') or '')

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]
