from dataclasses import dataclass
import json

from django.conf import settings
from django.core.exceptions import ValidationError as DjangoValidationError
from rest_framework import serializers

from .channel import BUILDERS, ChannelFsm, validate_fsm
from .process import PlantModel
from .quadrature import ErrorGrid
from .utils import ensure_output_dir, provenance_hash


def _setting(name):
    return lambda: settings.ESTIMATION[name]


class PlantSerializer(serializers.Serializer):
    a = serializers.FloatField()
    sigma2 = serializers.FloatField()
    x0 = serializers.FloatField(default=0.0)
    horizon = serializers.IntegerField(min_value=1)

    def validate_sigma2(self, value):
        if not value > 0:
            raise serializers.ValidationError("Noise variance must be positive.")
        return value

    def create(self, validated_data):
        return PlantModel(**validated_data)


class ChannelFsmSerializer(serializers.Serializer):
    num_states = serializers.IntegerField(min_value=1)
    transitions = serializers.ListField(
        child=serializers.ListField(child=serializers.IntegerField(allow_null=True), min_length=2, max_length=2)
    )
    drop_probs = serializers.ListField(child=serializers.FloatField())
    initial_state = serializers.IntegerField(default=0)
    transmit_allowed = serializers.ListField(child=serializers.BooleanField(), required=False)

    def validate(self, data):
        fsm = ChannelFsm(
            num_states=data['num_states'],
            transitions=data['transitions'],
            drop_probs=data['drop_probs'],
            initial_state=data['initial_state'],
            transmit_allowed=data.get('transmit_allowed'),
        )
        violations = validate_fsm(fsm)
        if violations:
            raise serializers.ValidationError({'fsm': [str(v) for v in violations]})
        data['fsm'] = fsm
        return data

    def create(self, validated_data):
        return validated_data['fsm']


class ChannelSourceSerializer(serializers.Serializer):
    builder = serializers.ChoiceField(choices=sorted(BUILDERS), required=False)
    params = serializers.DictField(required=False, default=dict)
    fsm = ChannelFsmSerializer(required=False)

    def validate(self, data):
        has_builder = 'builder' in data
        has_fsm = 'fsm' in data
        if has_builder == has_fsm:
            raise serializers.ValidationError("Give exactly one channel source: a builder name or an inline fsm.")
        if has_fsm:
            data['channel'] = data['fsm']['fsm']
            return data

        try:
            fsm = BUILDERS[data['builder']](**data['params'])
        except TypeError as e:
            raise serializers.ValidationError({'params': [f"Bad parameters for {data['builder']}: {e}"]})
        except DjangoValidationError as e:
            raise serializers.ValidationError({'params': e.messages})
        violations = validate_fsm(fsm)
        if violations:
            raise serializers.ValidationError({'fsm': [str(v) for v in violations]})
        data['channel'] = fsm
        return data

    def create(self, validated_data):
        return validated_data['channel']


class GridSettingsSerializer(serializers.Serializer):
    half_width = serializers.JSONField(default='auto')
    num_points = serializers.IntegerField(min_value=3, default=_setting('GRID_POINTS'))

    def validate_half_width(self, value):
        if value == 'auto':
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
            raise serializers.ValidationError("Half width must be 'auto' or a positive number.")
        return float(value)

    def validate_num_points(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError("The error grid needs an odd number of points.")
        return value


class SolverSettingsSerializer(serializers.Serializer):
    grid = GridSettingsSerializer(required=False)
    value_cap = serializers.FloatField(min_value=1.0, default=_setting('VALUE_CAP'))
    search_points = serializers.IntegerField(min_value=3, default=_setting('SEARCH_POINTS'))
    grid_cap = serializers.FloatField(min_value=1.0, default=_setting('GRID_CAP'))


class SimSettingsSerializer(serializers.Serializer):
    trials = serializers.IntegerField(min_value=1, default=_setting('TRIALS'))
    seed = serializers.IntegerField(min_value=0, default=_setting('SEED'))
    trace_trials = serializers.IntegerField(min_value=0, default=0)


class OutputsSerializer(serializers.Serializer):
    directory = serializers.CharField(required=False)

    def validate_directory(self, value):
        try:
            ensure_output_dir(value)
        except DjangoValidationError as e:
            raise serializers.ValidationError(e.messages)
        return value


@dataclass(eq=False)
class RunConfig:
    plant: PlantModel
    fsm: ChannelFsm
    channel_source: dict
    solver: dict
    sim: dict
    output_dir: str

    def grid(self):
        grid = self.solver['grid']
        if grid['half_width'] == 'auto':
            return ErrorGrid.for_plant(self.plant, grid['num_points'], self.solver['grid_cap'])
        return ErrorGrid(half_width=grid['half_width'], num_points=grid['num_points'])

    def symmetric_provenance(self):
        return provenance_hash(self.plant, self.fsm, {'grid': self.grid().to_dict(), 'value_cap': self.solver['value_cap']})

    def iid_provenance(self):
        return provenance_hash(self.plant, self.fsm, {'search_points': self.solver['search_points']})


class RunConfigSerializer(serializers.Serializer):
    plant = PlantSerializer()
    channel = ChannelSourceSerializer()
    solver = SolverSettingsSerializer(required=False)
    sim = SimSettingsSerializer(required=False)
    outputs = OutputsSerializer(required=False)

    @staticmethod
    def _nested_defaults(serializer_class, data):
        nested = serializer_class(data=data or {})
        nested.is_valid(raise_exception=True)
        return nested.validated_data

    def create(self, validated_data):
        solver = dict(self._nested_defaults(SolverSettingsSerializer, self.initial_data.get('solver')))
        solver['grid'] = dict(self._nested_defaults(GridSettingsSerializer, (self.initial_data.get('solver') or {}).get('grid')))
        sim = dict(self._nested_defaults(SimSettingsSerializer, self.initial_data.get('sim')))
        outputs = validated_data.get('outputs') or {}
        source = validated_data['channel']
        return RunConfig(
            plant=PlantModel(**validated_data['plant']),
            fsm=source['channel'],
            channel_source={k: v for k, v in source.items() if k in ('builder', 'params')},
            solver=solver,
            sim=sim,
            output_dir=outputs.get('directory') or settings.ESTIMATION['OUTPUT_DIR'],
        )


def apply_overrides(data, out=None, seed=None, trials=None, grid_points=None):
    """Command-line flags win over the config document."""
    data = json.loads(json.dumps(data))
    if out is not None:
        data.setdefault('outputs', {})['directory'] = out
    if seed is not None:
        data.setdefault('sim', {})['seed'] = seed
    if trials is not None:
        data.setdefault('sim', {})['trials'] = trials
    if grid_points is not None:
        data.setdefault('solver', {}).setdefault('grid', {})['num_points'] = grid_points
    return data


def load_run_config(data, **overrides):
    """Validate a config document (dict) with overrides applied; raises rest_framework ValidationError."""
    serializer = RunConfigSerializer(data=apply_overrides(data, **overrides))
    serializer.is_valid(raise_exception=True)
    return serializer.save()
