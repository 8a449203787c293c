from django.conf import settings

from utils.exceptions import ConfigError
from utils.serialization import write_table

from ...experiments import sweep_columns, sweep_experiment
from ...forms import SweepForm
from ..experiment_command import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Tabulate Sigma, sigma and K/T along one axis (K, T, epsilon or m) into sweep_<axis>.csv.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--axis', choices=['K', 'T', 'epsilon', 'm'])
        parser.add_argument('--values', help='Comma-separated axis values')
        parser.add_argument('--monte-carlo', action='store_true', help='Add the Monte Carlo final distance')

    def sweep_spec(self, raw, options):
        data = dict(raw.get('sweep') or {})
        if options.get('axis'):
            data['axis'] = options['axis']
        if options.get('values'):
            try:
                data['values'] = [float(v) for v in options['values'].split(',') if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"--values must be comma-separated numbers: {exc}") from exc
        if options.get('monte_carlo'):
            data['monte_carlo'] = True
        form = SweepForm(data=data)
        if not form.is_valid():
            errors = '; '.join(f"sweep.{field}: {' '.join(msgs)}" for field, msgs in form.errors.items())
            raise ConfigError(f"invalid sweep: {errors}")
        return form.cleaned_data

    def execute_experiment(self, raw, options):
        sweep = self.sweep_spec(raw, options)
        rows = sweep_experiment(
            raw, sweep['axis'], sweep['values'], sweep['monte_carlo'],
            workers=self.workers(options), min_replicas=settings.UNLEARN_MIN_REPLICAS,
        )
        path = write_table(rows, self.out_dir(options) / f"sweep_{sweep['axis']}.csv", sweep_columns(sweep['axis']))
        self.stdout.write(f"Wrote {len(rows)} rows to {path}")
        return {'axis': sweep['axis'], 'rows': rows, 'path': str(path)}
