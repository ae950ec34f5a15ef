import csv

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from estimation.dp_symmetric import drop_probability_sweep
from estimation.exceptions import EstimationError
from estimation.utils import format_float
from ._common import USAGE_ERROR, add_common_arguments, load_config, output_dir


def _probabilities(text):
    values = [float(p) for p in text.split(',') if p.strip()]
    if not values or any(not 0.0 <= p <= 1.0 for p in values):
        raise ValueError(f"Drop probabilities must be a comma-separated list in [0, 1] (got {text!r})")
    return values


class Command(BaseCommand):
    help = 'Re-solves a builder channel across drop probabilities and records whether thresholds persist'

    def add_arguments(self, parser):
        add_common_arguments(parser)
        parser.add_argument('--probabilities', default=','.join(f'{p:.1f}' for p in np.linspace(0.0, 0.9, 10)),
                            help='Comma-separated drop probabilities to sweep')

    def handle(self, *args, **options):
        run = load_config(options)
        if 'builder' not in run.channel_source:
            raise CommandError('sweep_drops needs a builder channel (energy_harvesting or workload_chain)',
                               returncode=USAGE_ERROR)
        try:
            probabilities = _probabilities(options['probabilities'])
        except ValueError as e:
            raise CommandError(str(e), returncode=USAGE_ERROR)
        out = output_dir(run.output_dir)

        try:
            rows = drop_probability_sweep(run.plant, run.channel_source['builder'], run.channel_source['params'],
                                          probabilities, run.grid(), run.solver['value_cap'])
        except EstimationError as e:
            raise CommandError(f"Solver failed: {e}", returncode=USAGE_ERROR)

        path = out / 'sweep_drops.csv'
        with open(path, 'w', newline='') as fh:
            writer = csv.writer(fh)
            writer.writerow(['p', 'state', 'theorem2_satisfied', 'all_threshold', 'witnesses', 'V1'])
            for row in rows:
                writer.writerow([format_float(row.p), '' if row.state is None else row.state,
                                 int(row.theorem2_satisfied), int(row.all_threshold), row.witnesses,
                                 format_float(row.v1)])

        persistent = sum(row.all_threshold for row in rows)
        style = self.style.SUCCESS if persistent == len(rows) else self.style.WARNING
        self.stdout.write(style(f"Threshold structure held in {persistent} of {len(rows)} solves"))
        self.stdout.write(self.style.SUCCESS(f"Sweep written to {path}"))
