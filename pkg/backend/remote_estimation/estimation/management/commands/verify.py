from dataclasses import fields

from django.core.management.base import BaseCommand, CommandError

from estimation.verification import SuiteSettings, run_suite
from estimation.utils import estimation_setting, write_json
from ._common import PROPERTY_FAILURE, USAGE_ERROR, add_common_arguments, output_dir, read_json_file


class Command(BaseCommand):
    help = 'Runs the property suite: value structure, bounds, threshold extraction, oracles and simulation'

    def add_arguments(self, parser):
        add_common_arguments(parser, config_required=False)
        parser.add_argument('--corrupt-value-table', action='store_true', dest='corrupt_value_table',
                            help='Plant a defect in one value table to check that the suite catches it')

    def _suite(self, options):
        params = {}
        if options.get('config'):
            params = read_json_file(options['config'])
            known = {f.name for f in fields(SuiteSettings)}
            unknown = set(params) - known
            if unknown:
                raise CommandError(f"Unknown suite settings: {sorted(unknown)}", returncode=USAGE_ERROR)
        for flag in ('grid_points', 'trials', 'seed'):
            if options.get(flag) is not None:
                params[flag] = options[flag]
        if options.get('corrupt_value_table'):
            params['corrupt_value_table'] = True
        return SuiteSettings(**params)

    def handle(self, *args, **options):
        suite = self._suite(options)
        out = output_dir(estimation_setting('OUTPUT_DIR', options.get('out')))
        results = run_suite(suite)

        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            self.stdout.write(style(f"[{'PASS' if result.passed else 'FAIL'}] {result.name}: {result.detail}"))
        write_json(out / 'verify_report.json', [vars(r) for r in results])

        failed = [r for r in results if not r.passed]
        if failed:
            raise CommandError(f"Property failed: {failed[0].name} ({failed[0].detail})", returncode=PROPERTY_FAILURE)
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} properties hold"))
