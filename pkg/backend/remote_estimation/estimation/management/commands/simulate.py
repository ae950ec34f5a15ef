import logging
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from estimation.exceptions import EstimationError
from estimation.oracle_sim import simulate, write_trace_csv
from estimation.policy import PolicyKind, load_policy_csv
from estimation.utils import read_json, write_json
from ._common import USAGE_ERROR, add_common_arguments, load_config, output_dir

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Runs the closed-loop Monte Carlo simulation of a policy file under a run configuration'

    def add_arguments(self, parser):
        add_common_arguments(parser)
        parser.add_argument('--policy', required=True, help='Policy CSV written by solve_symmetric or solve_iid')
        parser.add_argument('--trace-trials', type=int, dest='trace_trials',
                            help='Write a per-step trace CSV for the first K trials')

    def _load_policy(self, path):
        try:
            return load_policy_csv(path)
        except OSError as e:
            raise CommandError(f"Cannot read policy {path}: {e}", returncode=USAGE_ERROR)
        except (KeyError, ValueError, TypeError) as e:
            raise CommandError(f"Malformed policy file {path}: {e}", returncode=USAGE_ERROR)

    def _prediction(self, policy_path, policy, provenance):
        prefix = 'iid' if policy.kind is PolicyKind.INTERVAL_PAIR else 'symmetric'
        summary_path = Path(policy_path).parent / f'{prefix}_summary.json'
        if not summary_path.exists():
            return None
        summary = read_json(summary_path)
        return summary['V1'] if summary.get('provenance') == provenance else None

    def handle(self, *args, **options):
        if options.get('trials') is not None and options['trials'] < 1:
            raise CommandError(f"--trials must be positive (got {options['trials']})", returncode=USAGE_ERROR)
        run = load_config(options)
        out = output_dir(run.output_dir)
        policy = self._load_policy(options['policy'])

        expected = run.iid_provenance() if policy.kind is PolicyKind.INTERVAL_PAIR else run.symmetric_provenance()
        if policy.provenance != expected:
            logger.warning(f"Policy provenance {policy.provenance or '(none)'} does not match this configuration ({expected})")
            self.stdout.write(self.style.WARNING('Policy was not solved for this configuration'))

        trace_trials = options.get('trace_trials')
        if trace_trials is None:
            trace_trials = run.sim['trace_trials']
        try:
            summary = simulate(run.plant, run.fsm, policy, run.sim['trials'], run.sim['seed'], trace_trials)
        except (EstimationError, ValidationError) as e:
            raise CommandError(f"Simulation rejected: {e}", returncode=USAGE_ERROR)

        write_json(out / 'simulation_summary.json', {**summary.to_dict(), 'provenance': policy.provenance})
        if trace_trials:
            write_trace_csv(summary, out / 'simulation_trace.csv')

        self.stdout.write(f"Simulated total cost: {summary.total:.6g} +/- {summary.total_se:.3g} "
                          f"({summary.trials} trials, seed {summary.seed})")
        predicted = self._prediction(options['policy'], policy, policy.provenance)
        if predicted is not None:
            style = self.style.SUCCESS if summary.within(predicted) else self.style.WARNING
            gap = abs(summary.total - predicted) / summary.total_se if summary.total_se else 0.0
            self.stdout.write(style(f"DP prediction: {predicted:.6g} ({gap:.2f} standard errors away)"))
        self.stdout.write(self.style.SUCCESS(f"Summary written to {out / 'simulation_summary.json'}"))
