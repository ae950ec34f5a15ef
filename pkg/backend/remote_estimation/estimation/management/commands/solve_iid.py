from django.core.management.base import BaseCommand, CommandError

from estimation.dp_iid import iid_backward_induction, export_iid_table_csv
from estimation.exceptions import EstimationError
from estimation.policy import export_policy_csv
from estimation.utils import write_json
from ._common import USAGE_ERROR, add_common_arguments, load_config, output_dir


class Command(BaseCommand):
    help = 'Solves the white-source (a = 0) program over possibly asymmetric no-transmit intervals'

    def add_arguments(self, parser):
        add_common_arguments(parser)

    def handle(self, *args, **options):
        run = load_config(options)
        if run.plant.a != 0:
            raise CommandError(
                f"solve_iid needs a = 0 (got a = {run.plant.a}); use solve_symmetric for correlated sources",
                returncode=USAGE_ERROR)
        out = output_dir(run.output_dir)

        try:
            table = iid_backward_induction(run.fsm, run.plant.sigma2, run.plant.horizon,
                                           search_points=run.solver['search_points'],
                                           provenance=run.iid_provenance())
        except EstimationError as e:
            raise CommandError(f"Solver failed: {e}", returncode=USAGE_ERROR)

        export_iid_table_csv(table, out / 'iid_value_table.csv')
        export_policy_csv(table.policy(), out / 'iid_policy.csv')
        write_json(out / 'iid_asymmetry.json', [
            {'n': r.n, 'q': r.q, 'interval': r.interval, 'objective': r.objective,
             'symmetric_objective': r.symmetric_objective, 'improvement': r.improvement}
            for r in table.asymmetry_log
        ])
        v1 = table.value(1, run.fsm.initial_state)
        write_json(out / 'iid_summary.json', {
            'provenance': table.provenance,
            'plant': run.plant.to_dict(),
            'V1': v1,
            'values': table.values,
            'asymmetric_improvements': len(table.asymmetry_log),
        })

        self.stdout.write(f"V1(q1) = {v1:.10g}")
        if table.asymmetry_log:
            self.stdout.write(self.style.WARNING(
                f"{len(table.asymmetry_log)} (n, q) pair(s) prefer an asymmetric interval; see iid_asymmetry.json"))
        self.stdout.write(self.style.SUCCESS(f"Artifacts written to {out}"))
