import json

from django.core.exceptions import ValidationError as DjangoValidationError
from django.core.management.base import CommandError
from rest_framework import serializers

from estimation.serializers import load_run_config
from estimation.utils import ensure_output_dir

USAGE_ERROR = 2
PROPERTY_FAILURE = 1


def add_common_arguments(parser, config_required=True):
    parser.add_argument('--config', required=config_required, help='Path to a JSON run configuration')
    parser.add_argument('--out', help='Output directory for artifacts')
    parser.add_argument('--seed', type=int, help='Simulation seed')
    parser.add_argument('--trials', type=int, help='Number of Monte Carlo trials')
    parser.add_argument('--grid-points', type=int, dest='grid_points', help='Error grid size (odd)')


def _flatten(detail, prefix=''):
    if isinstance(detail, dict):
        for key, value in detail.items():
            yield from _flatten(value, f"{prefix}{key}." if key != 'non_field_errors' else prefix)
    elif isinstance(detail, list):
        for value in detail:
            yield from _flatten(value, prefix)
    else:
        yield f"{prefix.rstrip('.')}: {detail}" if prefix else str(detail)


def read_json_file(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as e:
        raise CommandError(f"Cannot read {path}: {e}", returncode=USAGE_ERROR)
    except json.JSONDecodeError as e:
        raise CommandError(f"{path} is not valid JSON: {e}", returncode=USAGE_ERROR)


def load_config(options):
    data = read_json_file(options['config'])
    try:
        return load_run_config(
            data,
            out=options.get('out'),
            seed=options.get('seed'),
            trials=options.get('trials'),
            grid_points=options.get('grid_points'),
        )
    except serializers.ValidationError as e:
        lines = '\n  '.join(_flatten(e.detail))
        raise CommandError(f"Invalid configuration:\n  {lines}", returncode=USAGE_ERROR)
    except DjangoValidationError as e:
        raise CommandError(f"Invalid configuration: {'; '.join(e.messages)}", returncode=USAGE_ERROR)


def output_dir(path):
    try:
        return ensure_output_dir(path)
    except DjangoValidationError as e:
        raise CommandError('; '.join(e.messages), returncode=USAGE_ERROR)


