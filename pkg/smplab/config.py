"""
Experiment configuration files.

A configuration is a UTF-8 text of ``section.key = value`` lines. ``#`` starts a comment, lists are comma separated.
Parameters of registered coefficients and cost terms are nested below the key selecting them::

    experiment.name = spike-rates
    basis.n_modes = 64
    scenario.reaction = tanh-saturated
    scenario.reaction.amplitude = 0.5
    cost.running = quadratic-tracking, control-energy
    cost.running.control-energy.weight = 0.1
    spike.epsilon_ladder = 0.0625, 0.03125, 0.015625
"""
import re
from collections import OrderedDict
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from smplab.coefficients import AbstractCoefficient, build_coefficient
from smplab.costs import CostSpec, build_cost_term
from smplab.enums import ControlSetKind
from smplab.regression import RegressionBasis
from smplab.scenario import ControlProcess, ControlSet, Scenario
from smplab.spectral import build_basis
from smplab.utils import enum_slug, format_float


KEY_RE = re.compile(r'^[a-z][a-z0-9_]*(\.[a-z0-9][a-z0-9_\-]*)+$')
CONTROL_SET_KINDS = {enum_slug(kind): kind for kind in ControlSetKind}


class ConfigErrorEntry(NamedTuple):

    line: Optional[int]
    message: str

    def __str__(self):
        return self.message if self.line is None else 'line {}: {}'.format(self.line, self.message)


class ConfigError(ImproperlyConfigured):
    """Every problem found in a configuration, not only the first one."""

    def __init__(self, errors: List[ConfigErrorEntry]):
        self.errors = list(errors)
        super().__init__('\n'.join(str(error) for error in self.errors))


def parse_int(text: str) -> int:
    return int(text)


def parse_float(text: str) -> float:
    value = float(text)
    if not np.isfinite(value):
        raise ValueError('not finite')
    return value


def parse_floats(text: str) -> Tuple[float, ...]:
    return tuple(parse_float(item) for item in text.split(',')) if text.strip() else ()


def parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in {'true', 'yes', 'on', '1'}:
        return True
    if lowered in {'false', 'no', 'off', '0'}:
        return False
    raise ValueError(text)


def parse_str(text: str) -> str:
    if not text:
        raise ValueError('empty')
    return text


def parse_slugs(text: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in text.split(',') if item.strip())


TYPE_NAMES = {
    parse_int: 'an integer', parse_float: 'a number', parse_floats: 'a list of numbers', parse_bool: 'a boolean',
    parse_str: 'a string', parse_slugs: 'a list of names',
}


class Field(NamedTuple):

    parse: Callable[[str], Any]
    default: Any = None
    positive: bool = False


FIELDS: 'OrderedDict[str, Field]' = OrderedDict((
    ('experiment.name', Field(parse_str)),
    ('experiment.seed', Field(parse_int, 0)),
    ('experiment.output', Field(parse_str)),
    ('experiment.strict', Field(parse_bool, False)),
    ('basis.n_modes', Field(parse_int, 16, True)),
    ('basis.lambda', Field(parse_float, 1.0, True)),
    ('basis.grid_size', Field(parse_int, None, True)),
    ('time.horizon', Field(parse_float, 1.0, True)),
    ('time.n_steps', Field(parse_int, 128, True)),
    ('scenario.reaction', Field(parse_str, 'linear')),
    ('scenario.noise_gain', Field(parse_str)),
    ('scenario.boundary_noise', Field(parse_floats, (0.0, 0.0))),
    ('scenario.initial_state', Field(parse_floats, (0.0,))),
    ('scenario.n_paths', Field(parse_int, 1000, True)),
    ('control.set', Field(parse_str, 'box')),
    ('control.lower', Field(parse_floats, (-1.0, -1.0))),
    ('control.upper', Field(parse_floats, (1.0, 1.0))),
    ('control.points', Field(parse_floats)),
    ('control.values', Field(parse_floats)),
    ('control.initial', Field(parse_floats, (0.0, 0.0))),
    ('control.file', Field(parse_str)),
    ('cost.running', Field(parse_slugs, ('quadratic-tracking', 'control-energy'))),
    ('cost.terminal', Field(parse_slugs, ('quadratic-tracking',))),
    ('regression.n_regressors', Field(parse_int, 8)),
    ('regression.ridge', Field(parse_float, 1e-8)),
    ('regression.truncate', Field(parse_bool, True)),
    ('adjoint.picard_iterations', Field(parse_int, 2)),
    ('adjoint.saved_paths', Field(parse_int, 1)),
    ('adjoint.oracle_tolerance', Field(parse_float, 1e-2, True)),
    ('simulate.saved_paths', Field(parse_int, 1)),
    ('simulate.self_convergence_levels', Field(parse_int, 0)),
    ('gradient.theta_ladder', Field(parse_floats, (0.1, 0.05, 0.025))),
    ('gradient.n_directions', Field(parse_int, 4, True)),
    ('gradient.tolerance', Field(parse_float, 5e-2, True)),
    ('spike.t_bar', Field(parse_float)),
    ('spike.v', Field(parse_floats)),
    ('spike.epsilon_ladder', Field(parse_floats)),
    ('spike.chunk_size', Field(parse_int, 500, True)),
    ('spike.refinements', Field(parse_bool, False)),
    ('spike.min_delta_slope', Field(parse_float, 0.5)),
    ('optimizer.step_size', Field(parse_float, 1.0, True)),
    ('optimizer.max_iters', Field(parse_int, 50)),
    ('optimizer.tolerance', Field(parse_float, 1e-3, True)),
    ('optimizer.damping', Field(parse_float, 0.0)),
    ('optimizer.acceptance_slack', Field(parse_float, 0.0)),
    ('verify.tolerance', Field(parse_float, None, True)),
    ('verify.gap_factor', Field(parse_float, 10.0, True)),
    ('regularity.window', Field(parse_float, 0.02, True)),
    ('regularity.min_nodes', Field(parse_int, 8, True)),
    ('regularity.slope_min', Field(parse_float, -0.35)),
    ('regularity.slope_max', Field(parse_float, 0.0)),
    ('regularity.refine_modes', Field(parse_bool, True)),
    ('validate.convex_case', Field(parse_bool, False)),
    ('validate.samples', Field(parse_int, None, True)),
    ('validate.radius', Field(parse_float, None, True)),
))

# Registry selectors and the prefix of their parameter keys.
COEFFICIENT_SELECTORS = ('scenario.reaction', 'scenario.noise_gain')
COST_SELECTORS = ('cost.running', 'cost.terminal')


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, tuple):
        return ', '.join(format_value(item) for item in value)
    return str(value)


def field_defaults() -> Dict[str, Any]:
    overrides = getattr(settings, 'SMPLAB_CONFIG_DEFAULTS', {})
    defaults = {}
    for key, field in FIELDS.items():
        value = overrides.get(key, field.default)
        defaults[key] = field.parse(value) if isinstance(value, str) else value
    return defaults


class ExperimentConfig:
    """
    Validated experiment configuration: every field of ``FIELDS`` with defaults filled plus the explicitly set
    registry parameters.
    """

    def __init__(self, values: Dict[str, Any], params: Dict[str, Any]):
        self.values = values
        self.params = params

    def __repr__(self):
        return 'ExperimentConfig(experiment={!r})'.format(self.experiment)

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and (self.values, self.params) == (other.values, other.params)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def experiment(self) -> Optional[str]:
        return self.values['experiment.name']

    @property
    def seed(self) -> int:
        return self.values['experiment.seed']

    def with_overrides(self, overrides: Dict[str, str]) -> "ExperimentConfig":
        """Configuration with the given keys replaced by textual values."""
        return parse_config(self.serialize(), overrides)

    def selector_params(self, selector: str, slug: Optional[str] = None) -> Dict[str, Any]:
        prefix = '{}.{}.'.format(selector, slug) if slug else '{}.'.format(selector)
        return {key[len(prefix):]: value for key, value in self.params.items() if key.startswith(prefix)}

    def build_coefficient(self, selector: str) -> Optional[AbstractCoefficient]:
        slug = self.values[selector]
        return None if slug is None else build_coefficient(slug, self.selector_params(selector))

    def build_control_set(self) -> ControlSet:
        kind = CONTROL_SET_KINDS.get(self.values['control.set'])
        if kind == ControlSetKind.BOX:
            return ControlSet.box(self.values['control.lower'], self.values['control.upper'])
        if kind == ControlSetKind.FINITE_SET:
            if self.values['control.points'] is not None:
                points = self.values['control.points']
                if len(points) % 2:
                    raise ImproperlyConfigured('control.points must list pairs of coordinates')
                return ControlSet.finite(np.reshape(points, (-1, 2)))
            if self.values['control.values'] is not None:
                return ControlSet.product(self.values['control.values'])
            raise ImproperlyConfigured('missing key points in section control')
        raise ImproperlyConfigured('Unknown control set "{}"'.format(self.values['control.set']))

    def build_scenario(self) -> Scenario:
        basis = build_basis(self.values['basis.n_modes'], self.values['basis.lambda'], self.values['basis.grid_size'])
        return Scenario(
            basis, self.values['time.horizon'], self.values['time.n_steps'],
            reaction=self.build_coefficient('scenario.reaction'),
            control_set=self.build_control_set(),
            noise_gain=self.build_coefficient('scenario.noise_gain'),
            boundary_noise=self.values['scenario.boundary_noise'],
            initial_state=self.values['scenario.initial_state'],
            n_paths=self.values['scenario.n_paths'],
            seed=self.seed,
        )

    def build_cost(self) -> CostSpec:
        return CostSpec(*(
            tuple(build_cost_term(slug, self.selector_params(selector, slug)) for slug in self.values[selector])
            for selector in COST_SELECTORS
        ))

    def build_regression(self) -> RegressionBasis:
        return RegressionBasis(
            self.values['regression.n_regressors'], self.values['regression.ridge'],
            truncate=self.values['regression.truncate'],
        )

    def initial_control(self, scenario: Scenario) -> ControlProcess:
        """The constant ``control.initial`` or the control stored in ``control.file`` by an optimize run."""
        if self.values['control.file'] is None:
            return ControlProcess.constant(scenario.grid, self.values['control.initial'], scenario.control_set)
        try:
            values = np.loadtxt(self.values['control.file'], delimiter=',', skiprows=1, usecols=(2, 3), ndmin=2)
        except (OSError, ValueError) as ex:
            raise ImproperlyConfigured('Cannot read control file "{}": {}'.format(self.values['control.file'], ex))
        if values.shape[0] != scenario.n_steps:
            raise ImproperlyConfigured('Control file has {} steps, the scenario {}'.format(
                values.shape[0], scenario.n_steps
            ))
        return ControlProcess.tagged(values, scenario.control_set)

    def serialize(self) -> str:
        lines = [
            '{} = {}'.format(key, format_value(value)) for key, value in self.values.items() if value is not None
        ]
        lines += ['{} = {}'.format(key, format_value(value)) for key, value in sorted(self.params.items())]
        return '\n'.join(lines) + '\n'


def _registry_parameter(key: str, values: Dict[str, Any]) -> Tuple[Optional[Any], Optional[str]]:
    """Default of the registered parameter addressed by ``key``, or an error message."""
    from smplab.loading import coefficient_register, cost_register

    for selector in COEFFICIENT_SELECTORS:
        if key.startswith(selector + '.'):
            name = key[len(selector) + 1:]
            cls = coefficient_register.get(values[selector]) if values[selector] else None
            if cls is None or name not in cls.parameters:
                return None, 'unknown key {}'.format(key)
            return cls.parameters[name], None
    for selector in COST_SELECTORS:
        if key.startswith(selector + '.'):
            slug, _, name = key[len(selector) + 1:].rpartition('.')
            cls = cost_register.get(slug)
            if slug not in values[selector] or cls is None or name not in cls.parameters:
                return None, 'unknown key {}'.format(key)
            return cls.parameters[name], None
    return None, 'unknown key {}'.format(key)


def _split_lines(text: str, errors: List[ConfigErrorEntry]) -> 'OrderedDict[str, Tuple[int, str]]':
    entries: 'OrderedDict[str, Tuple[int, str]]' = OrderedDict()
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not KEY_RE.match(key):
            errors.append(ConfigErrorEntry(number, 'expected "section.key = value", got "{}"'.format(raw.strip())))
        elif key in entries:
            errors.append(ConfigErrorEntry(
                number, 'duplicate key {}, first set on line {}'.format(key, entries[key][0])
            ))
        else:
            entries[key] = (number, value)
    return entries


def _parse_field(key: str, field: Field, text: str, line: Optional[int],
                 errors: List[ConfigErrorEntry]) -> Tuple[bool, Any]:
    try:
        value = field.parse(text)
    except ValueError:
        errors.append(ConfigErrorEntry(line, 'key {} expects {}, got "{}"'.format(key, TYPE_NAMES[field.parse], text)))
        return False, None
    if field.positive and not np.all(np.asarray(value) > 0):
        errors.append(ConfigErrorEntry(line, 'key {} must be positive, got "{}"'.format(key, text)))
        return False, None
    return True, value


def parse_config(text: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    """
    Parse and validate a configuration text.

    Args:
        text: configuration in the ``section.key = value`` format
        overrides: textual values replacing those of the text (e.g. the seed given on the command line)

    Returns:
        ExperimentConfig with defaults filled

    Raises:
        ConfigError: listing every unknown key, type mismatch, duplicate and missing required key
    """
    from smplab.loading import experiment_register

    errors: List[ConfigErrorEntry] = []
    entries = _split_lines(text, errors)
    for key, value in (overrides or {}).items():
        entries[key] = (None, str(value))

    values = field_defaults()
    registry_entries = []
    for key, (line, text_value) in entries.items():
        field = FIELDS.get(key)
        if field is None:
            registry_entries.append((key, line, text_value))
            continue
        valid, value = _parse_field(key, field, text_value, line, errors)
        if valid:
            values[key] = value

    params: Dict[str, Any] = {}
    for key, line, text_value in registry_entries:
        default, message = _registry_parameter(key, values)
        if message:
            errors.append(ConfigErrorEntry(line, message))
            continue
        field = Field(parse_floats if isinstance(default, tuple) else parse_float)
        valid, value = _parse_field(key, field, text_value, line, errors)
        if valid:
            params[key] = value

    name = values['experiment.name']
    if name is None:
        errors.append(ConfigErrorEntry(None, 'missing key name in section experiment'))
    elif name not in experiment_register:
        errors.append(ConfigErrorEntry(entries.get('experiment.name', (None,))[0], 'unknown experiment "{}"'.format(
            name
        )))
    else:
        for key in experiment_register[name].required_keys:
            if values[key] is None:
                section, _, short = key.partition('.')
                errors.append(ConfigErrorEntry(None, 'missing key {} in section {}'.format(short, section)))

    config = ExperimentConfig(values, params)
    if not errors:
        try:
            config.build_scenario()
            config.build_cost()
            config.build_regression()
        except (ImproperlyConfigured, ValueError) as ex:
            errors.append(ConfigErrorEntry(None, str(ex)))
    if errors:
        raise ConfigError(errors)
    return config


def read_config(path: str, overrides: Optional[Dict[str, str]] = None) -> ExperimentConfig:
    with open(path, encoding='utf-8') as config_file:
        return parse_config(config_file.read(), overrides)
