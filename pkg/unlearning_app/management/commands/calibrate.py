from pathlib import Path

from utils.certify import calibrate
from utils.serialization import dump_json, dumps_json

from ..experiment_command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Compute the sensitivity, noise scale and iteration plans for a config; runs no trajectories.'

    def execute_experiment(self, raw, options):
        result = calibrate(self.setup(raw))
        self.stdout.write(dumps_json(result), ending='')
        if options.get('out'):
            dump_json(result, Path(options['out']) / 'calibration.json')
        return result
