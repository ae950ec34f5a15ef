from django.core.management.base import BaseCommand

from estimation.presets import EXAMPLE_CONFIGS
from estimation.utils import estimation_setting, write_json
from ._common import output_dir


class Command(BaseCommand):
    help = 'Writes the bundled example run configurations as JSON files'

    def add_arguments(self, parser):
        parser.add_argument('--out', help='Directory to write the example configs into')

    def handle(self, *args, **options):
        out = output_dir(estimation_setting('OUTPUT_DIR', options.get('out')))
        for name, config in EXAMPLE_CONFIGS.items():
            path = write_json(out / f'{name}.json', config)
            self.stdout.write(f"Wrote {path}")
        self.stdout.write(self.style.SUCCESS(f"Exported {len(EXAMPLE_CONFIGS)} example configurations"))
