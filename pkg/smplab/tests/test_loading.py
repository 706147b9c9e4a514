from django.core.exceptions import ImproperlyConfigured
from django.test import TestCase
from django.test.utils import override_settings

from germanium.tools import assert_equal, assert_in, assert_raises, assert_true

from smplab.experiments.default import SimulateExperiment
from smplab.loading import (
    AppLoader, SettingsListCostLoader, coefficient_register, cost_register, experiment_register
)
from smplab.utils import str_to_class


class MissingModuleLoader(AppLoader):

    module_name = 'observables'


class TestLoading(TestCase):

    def test_builtin_experiments_are_registered_in_order(self):
        assert_equal(
            [slug for slug in experiment_register.keys() if slug != 'cost-only'],
            ['simulate', 'adjoint', 'grad-check', 'spike-rates', 'optimize', 'verify-smp', 'regularity', 'validate']
        )
        assert_equal(experiment_register['simulate'], SimulateExperiment)

    def test_app_modules_are_loaded(self):
        assert_in('cost-only', experiment_register)
        assert_in('mean-square', cost_register)
        assert_in('sine', coefficient_register)
        assert_equal(str(experiment_register['cost-only']), 'Cost only')

    def test_app_loader_skips_apps_without_the_module(self):
        MissingModuleLoader().import_modules()

    def test_settings_list_loader(self):
        with assert_raises(ImproperlyConfigured):
            SettingsListCostLoader().import_modules()
        with override_settings(SMPLAB_COSTS_LIST='tests.costs'):
            with assert_raises(ImproperlyConfigured):
                SettingsListCostLoader().import_modules()
        with override_settings(SMPLAB_COSTS_LIST=['tests.costs']):
            SettingsListCostLoader().import_modules()
        assert_true(cost_register.is_registered('mean-square'))

    def test_str_to_class(self):
        assert_equal(str_to_class('smplab.experiments.default.SimulateExperiment'), SimulateExperiment)
        with assert_raises(AttributeError):
            str_to_class('smplab.experiments.default.MissingExperiment')
