import os
from tempfile import TemporaryDirectory

import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import TestCase
from django.test.utils import override_settings
from numpy.testing import assert_allclose

from germanium.tools import assert_equal, assert_in, assert_is_none, assert_raises, assert_true

from smplab.config import ConfigError, ConfigErrorEntry, parse_config, read_config
from smplab.enums import ControlSetKind


SPIKE_CONFIG = """
# spike variation of a saturated reaction
experiment.name = spike-rates
experiment.seed = 3
basis.n_modes = 8
time.n_steps = 64
scenario.reaction = tanh-saturated
scenario.reaction.amplitude = 0.5   # weak
scenario.boundary_noise = 0.2, 0.1
cost.running = quadratic-tracking, control-energy
cost.running.control-energy.weight = 0.1
cost.running.quadratic-tracking.target = 0.25
spike.t_bar = 0.5
spike.v = 1, -1
spike.epsilon_ladder = 0.125, 0.0625
"""


class TestParseConfig(TestCase):

    def assert_config_errors(self, text, expected, overrides=None):
        with assert_raises(ConfigError) as raised:
            parse_config(text, overrides)
        assert_equal(sorted(str(error) for error in raised.exception.errors), sorted(expected))

    def test_defaults_are_filled(self):
        config = parse_config('experiment.name = simulate\n')
        assert_equal(config.experiment, 'simulate')
        assert_equal(config.seed, 0)
        assert_equal(config['basis.n_modes'], 16)
        assert_equal(config['scenario.n_paths'], 200)
        assert_equal(config['cost.running'], ('quadratic-tracking', 'control-energy'))
        assert_is_none(config['scenario.noise_gain'])
        assert_equal(config.params, {})
        assert_equal(config['adjoint.picard_iterations'], 2)
        assert_true(config.build_regression().truncate)
        assert_equal(config['regularity.min_nodes'], 8)

    @override_settings(SMPLAB_CONFIG_DEFAULTS={'time.n_steps': '16'})
    def test_defaults_can_be_changed_in_settings(self):
        config = parse_config('experiment.name = simulate\n')
        assert_equal(config['time.n_steps'], 16)
        assert_equal(config['scenario.n_paths'], 1000)

    def test_values_and_registry_parameters(self):
        config = parse_config(SPIKE_CONFIG)
        assert_equal(config.seed, 3)
        assert_equal(config['spike.v'], (1.0, -1.0))
        assert_equal(config['scenario.boundary_noise'], (0.2, 0.1))
        scenario = config.build_scenario()
        assert_equal(scenario.reaction.amplitude, 0.5)
        assert_equal(scenario.reaction.scale, 1.0)
        assert_equal(scenario.basis.n_modes, 8)
        assert_equal(scenario.seed, 3)
        assert_equal(scenario.control_set.kind, ControlSetKind.BOX)
        cost = config.build_cost()
        assert_equal([term.slug for term in cost.running], ['quadratic-tracking', 'control-energy'])
        assert_equal(cost.running[0].target, 0.25)
        assert_equal(cost.running[1].weight, 0.1)

    def test_serialized_config_parses_to_itself(self):
        config = parse_config(SPIKE_CONFIG)
        assert_equal(parse_config(config.serialize()), config)
        config = parse_config('experiment.name = simulate\nscenario.initial_state =\nbasis.lambda = 0.1\n')
        assert_equal(config['scenario.initial_state'], ())
        assert_equal(parse_config(config.serialize()), config)

    def test_overrides(self):
        config = parse_config(SPIKE_CONFIG).with_overrides({'experiment.seed': '11'})
        assert_equal(config.seed, 11)
        assert_equal(config['spike.v'], (1.0, -1.0))
        self.assert_config_errors(SPIKE_CONFIG, ['key experiment.seed expects an integer, got "x"'],
                                  {'experiment.seed': 'x'})

    def test_every_error_is_reported_with_its_line(self):
        text = '\n'.join((
            'experiment.name = simulate',
            'basis.n_modes = 8',
            'basis.n_modes = 16',
            'basis.colour = 3',
            'time.n_steps = many',
            'just text',
            'time.horizon = -1',
            'cost.running.log-cosh.weight = 2',
        ))
        self.assert_config_errors(text, [
            'line 3: duplicate key basis.n_modes, first set on line 2',
            'line 4: unknown key basis.colour',
            'line 5: key time.n_steps expects an integer, got "many"',
            'line 6: expected "section.key = value", got "just text"',
            'line 7: key time.horizon must be positive, got "-1"',
            'line 8: unknown key cost.running.log-cosh.weight',
        ])

    def test_required_keys(self):
        self.assert_config_errors('basis.n_modes = 8\n', ['missing key name in section experiment'])
        self.assert_config_errors('experiment.name = spike-rates\nspike.t_bar = 0.5\nspike.v = 1, 1\n',
                                  ['missing key epsilon_ladder in section spike'])
        self.assert_config_errors('experiment.name = sculpt\n', ['line 1: unknown experiment "sculpt"'])

    def test_registry_parameters_are_checked(self):
        self.assert_config_errors(
            'experiment.name = simulate\nscenario.reaction.amplitude = 2\nscenario.noise_gain = affine\n'
            'scenario.noise_gain.offset = inf\n',
            ['line 2: unknown key scenario.reaction.amplitude',
             'line 4: key scenario.noise_gain.offset expects a number, got "inf"'],
        )
        self.assert_config_errors(
            'experiment.name = simulate\nscenario.reaction = tanh-saturated\nscenario.reaction.scale = 0\n',
            ['Coefficient "tanh-saturated" needs a positive scale'],
        )
        self.assert_config_errors('experiment.name = simulate\nscenario.reaction = cubic\n',
                                  ['Unknown coefficient "cubic"'])

    def test_finite_control_sets(self):
        config = parse_config('experiment.name = optimize\ncontrol.set = finite-set\ncontrol.values = -1, 0, 1\n')
        assert_equal(len(config.build_control_set().points), 9)
        config = parse_config('experiment.name = optimize\ncontrol.set = finite-set\ncontrol.points = 0, 1, 1, 0\n')
        assert_allclose(config.build_control_set().points, [[0.0, 1.0], [1.0, 0.0]])
        self.assert_config_errors('experiment.name = optimize\ncontrol.set = finite-set\n',
                                  ['missing key points in section control'])
        self.assert_config_errors('experiment.name = optimize\ncontrol.set = finite-set\ncontrol.points = 0, 1, 1\n',
                                  ['control.points must list pairs of coordinates'])
        self.assert_config_errors('experiment.name = optimize\ncontrol.set = ball\n', ['Unknown control set "ball"'])

    def test_error_entry_without_line(self):
        assert_equal(str(ConfigErrorEntry(None, 'missing key name in section experiment')),
                     'missing key name in section experiment')
        assert_true(issubclass(ConfigError, ImproperlyConfigured))


class TestConfigFiles(TestCase):

    def test_read_config(self):
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'spike.cfg')
            with open(path, 'w', encoding='utf-8') as config_file:
                config_file.write(SPIKE_CONFIG)
            assert_equal(read_config(path, {'experiment.seed': '5'}).seed, 5)

    def test_initial_control_from_file(self):
        with TemporaryDirectory() as directory:
            path = os.path.join(directory, 'control.csv')
            with open(path, 'w', encoding='utf-8') as control_file:
                control_file.write('step,t,u_left,u_right\n0,0,1,-1\n1,0.25,0.5,0\n2,0.5,0,0\n3,0.75,-1,1\n')
            config = parse_config('experiment.name = verify-smp\ntime.n_steps = 4\ncontrol.file = {}\n'.format(path))
            scenario = config.build_scenario()
            control = config.initial_control(scenario)
            assert_allclose(control.values, [[1.0, -1.0], [0.5, 0.0], [0.0, 0.0], [-1.0, 1.0]])
            assert_true(control.admissible)
            config = config.with_overrides({'time.n_steps': '8'})
            with assert_raises(ImproperlyConfigured) as raised:
                config.initial_control(config.build_scenario())
            assert_in('4 steps', str(raised.exception))

    def test_missing_control_file(self):
        config = parse_config('experiment.name = verify-smp\ncontrol.file = /nonexistent/control.csv\n')
        with assert_raises(ImproperlyConfigured):
            config.initial_control(config.build_scenario())

    def test_constant_initial_control(self):
        config = parse_config('experiment.name = optimize\ntime.n_steps = 4\ncontrol.initial = 0.5, -0.5\n')
        control = config.initial_control(config.build_scenario())
        assert_allclose(control.values, np.tile([0.5, -0.5], (4, 1)))
