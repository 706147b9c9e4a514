from collections import OrderedDict
from importlib import import_module
from typing import TYPE_CHECKING, Any, Generic, Optional, Tuple, Type, TypeVar, Union

from django.apps import apps
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.utils.module_loading import module_has_submodule

from .utils import str_to_class

if TYPE_CHECKING:
    from smplab.coefficients import AbstractCoefficient
    from smplab.costs import AbstractCostTerm
    from smplab.experiments import AbstractExperiment


class BaseLoader:
    """Base class for all loaders."""

    def import_modules(self) -> None:
        raise NotImplementedError


class AppLoader(BaseLoader):
    """Scan all installed apps for `module_name` module."""

    module_name: str

    def import_modules(self) -> None:
        for app in apps.get_app_configs():
            if app.name != 'smplab' and module_has_submodule(app.module, self.module_name):
                import_module(f'{app.name}.{self.module_name}')


class SettingsListLoader(BaseLoader):
    """Import all modules from list `list_name` in settings."""

    list_name: str

    def import_modules(self) -> None:
        modules = getattr(settings, self.list_name, None)
        if modules is None:
            raise ImproperlyConfigured(f'settings.{self.list_name} not found.')
        if not isinstance(modules, (list, tuple)):
            raise ImproperlyConfigured(
                f'settings.{self.list_name} must be a list of module paths, got {type(modules).__name__}.'
            )
        for module in modules:
            import_module(module)


class SettingsListCoefficientLoader(SettingsListLoader):
    """Load all coefficients from settings.SMPLAB_COEFFICIENTS_LIST list."""

    list_name = 'SMPLAB_COEFFICIENTS_LIST'


class SettingsListCostLoader(SettingsListLoader):
    """Load all cost terms from settings.SMPLAB_COSTS_LIST list."""

    list_name = 'SMPLAB_COSTS_LIST'


class AppCoefficientLoader(AppLoader):
    """Scan all installed apps for coefficients module which should contain reaction and noise gain coefficients."""

    module_name = 'coefficients'


class AppCostLoader(AppLoader):
    """Scan all installed apps for costs module which should contain running and terminal cost terms."""

    module_name = 'costs'


class AppExperimentLoader(AppLoader):
    """Scan all installed apps for experiments module which should contain experiments."""

    module_name = 'experiments'


K = TypeVar('K')
V = TypeVar('V')


class BaseRegister(Generic[K, V]):
    """Base class for all registers."""

    _is_import_done = False
    register_dict: "OrderedDict[K, V]"
    loaders_settings: str
    default_loader: Optional[str]
    builtin_modules: Tuple[str, ...] = ()

    def __init__(self):
        self.register_dict = OrderedDict()

    def register(self, key: K, object_class: V) -> None:
        self.register_dict[key] = object_class

    def is_registered(self, key: K) -> bool:
        """Check the key without triggering the loaders (used while the register is being filled)."""
        return key in self.register_dict

    def _import_objects(self) -> None:
        for path in self.builtin_modules:
            import_module(path)
        default_loader = [self.default_loader] if self.default_loader else []
        for loader_path in getattr(settings, self.loaders_settings, default_loader):
            if isinstance(loader_path, (list, tuple)):
                for path in loader_path:
                    import_module(path)
            else:
                str_to_class(loader_path)().import_modules()

    @property
    def loaded(self) -> "OrderedDict[K, V]":
        if not self._is_import_done:
            self._is_import_done = True
            self._import_objects()
        return self.register_dict

    def __contains__(self, key: K) -> bool:
        return key in self.loaded

    def __getitem__(self, key: K) -> V:
        return self.loaded[key]

    def keys(self):
        return self.loaded.keys()

    def items(self):
        return self.loaded.items()

    def get(self, key: K, default: Any = None) -> Union[V, Any]:
        return self.loaded.get(key, default)


class CoefficientsRegister(BaseRegister[str, Type["AbstractCoefficient"]]):
    """
    CoefficientsRegister is storage for found reaction and noise gain classes.
    """

    default_loader = 'smplab.loading.AppCoefficientLoader'
    loaders_settings = 'SMPLAB_COEFFICIENT_LOADERS'
    builtin_modules = ('smplab.coefficients.default',)


class CostTermsRegister(BaseRegister[str, Type["AbstractCostTerm"]]):
    """
    CostTermsRegister is storage for found running and terminal cost term classes.
    """

    default_loader = 'smplab.loading.AppCostLoader'
    loaders_settings = 'SMPLAB_COST_LOADERS'
    builtin_modules = ('smplab.costs.default',)


class ExperimentsRegister(BaseRegister[str, Type["AbstractExperiment"]]):
    """
    ExperimentsRegister is storage for found experiment classes.
    """

    default_loader = 'smplab.loading.AppExperimentLoader'
    loaders_settings = 'SMPLAB_EXPERIMENT_LOADERS'
    builtin_modules = ('smplab.experiments.default',)


coefficient_register = CoefficientsRegister()
cost_register = CostTermsRegister()
experiment_register = ExperimentsRegister()
