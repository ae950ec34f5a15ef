from django.core.management.base import BaseCommand, CommandError

from estimation.dp_symmetric import (
    solve_and_extract, check_value_structure, check_lemma4_bound, check_stage_condition,
    theorem2_condition, export_value_table_csv,
)
from estimation.exceptions import EstimationError
from estimation.policy import export_policy_csv
from estimation.utils import write_json
from ._common import USAGE_ERROR, add_common_arguments, load_config, output_dir


class Command(BaseCommand):
    help = 'Solves the symmetric-policy dynamic program and writes value table, thresholds and structure report'

    def add_arguments(self, parser):
        add_common_arguments(parser)

    def handle(self, *args, **options):
        run = load_config(options)
        out = output_dir(run.output_dir)
        grid = run.grid()
        self.stdout.write(f"Solving N={run.plant.horizon}, m={run.fsm.num_states} on {grid.num_points} grid points "
                          f"(half width {grid.half_width:.4g})...")

        try:
            report = solve_and_extract(run.plant, run.fsm, grid, run.solver['value_cap'])
        except EstimationError as e:
            raise CommandError(f"Solver failed: {e}", returncode=USAGE_ERROR)
        table = report.table

        export_value_table_csv(table, report.gridded_policy, out / 'symmetric_value_table.csv')
        policy = report.threshold_policy() if report.all_threshold else report.gridded_policy
        export_policy_csv(policy, out / 'symmetric_policy.csv')

        structure = check_value_structure(table)
        bound = check_lemma4_bound(table, run.plant)
        stage = check_stage_condition(table, run.plant, run.fsm)
        theorem = theorem2_condition(run.plant, run.fsm)
        write_json(out / 'symmetric_structure.json', {
            'provenance': table.provenance,
            'value_structure_violations': [vars(v) for v in structure.violations],
            'difference_quotient_violations': [vars(v) for v in bound.violations],
            'stage_condition': [vars(c) for c in stage],
            'theorem2': vars(theorem),
            'not_threshold': [{'n': n, 'q': q, 'reason': str(rule), 'witness': rule.witness}
                              for n, q, rule in report.witnesses],
        })
        v1 = table.initial_value(run.fsm)
        write_json(out / 'symmetric_summary.json', {
            'provenance': table.provenance,
            'plant': run.plant.to_dict(),
            'grid': grid.to_dict(),
            'V1': v1,
            'policy_kind': policy.kind.value,
            'thresholds': report.tau_table(),
            'all_threshold': report.all_threshold,
            'theorem2_satisfied': theorem.satisfied,
        })

        self.stdout.write(f"V1(0, q1) = {v1:.10g}")
        if not theorem.satisfied:
            self.stdout.write(self.style.WARNING(
                f"Drop probabilities at states {list(theorem.offending_states)} exceed 1/(1+v) = {theorem.threshold:.6g}"))
        if report.all_threshold:
            self.stdout.write(self.style.SUCCESS('Every reachable (n, q) has a symmetric threshold policy'))
        else:
            self.stdout.write(self.style.WARNING(
                f"{len(report.witnesses)} reachable (n, q) pair(s) are not of threshold form; exported the gridded policy"))
        self.stdout.write(self.style.SUCCESS(f"Artifacts written to {out}"))
