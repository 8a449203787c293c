import logging

from utils.serialization import dumps_json

from ...experiments import run_experiment
from ..experiment_command import ExperimentCommand

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Learn, unlearn and release noisy models for every replica; --coupled adds the retrain run.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--coupled', action='store_true', help='Also run the coupled retrain trajectory')

    def execute_experiment(self, raw, options):
        setup = self.setup(raw)
        out_dir = self.out_dir(options)
        summary = run_experiment(setup, out_dir, coupled=options['coupled'], workers=self.workers(options))
        self.stdout.write(dumps_json(summary), ending='')
        return summary
