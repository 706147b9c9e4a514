from typing import TYPE_CHECKING, Any, List, NamedTuple, Optional, Tuple, Union

from django.core.exceptions import ImproperlyConfigured
from django.utils.functional import cached_property

from smplab.enums import Verdict
from smplab.utils import format_float

if TYPE_CHECKING:
    from smplab.config import ExperimentConfig
    from smplab.costs import CostSpec
    from smplab.experiments.writer import ArtifactWriter
    from smplab.regression import RegressionBasis
    from smplab.scenario import ControlProcess, Scenario


class SummaryLine(NamedTuple):

    name: str
    value: Union[float, str]
    verdict: Verdict = Verdict.INFO
    threshold: Optional[str] = None

    def __str__(self):
        value = format_float(self.value) if isinstance(self.value, (int, float)) else self.value
        threshold = ' ({})'.format(self.threshold) if self.threshold else ''
        return '{} = {}{} {}'.format(self.name, value, threshold, self.verdict.name)


def check(name: str, value: float, lower: Optional[float] = None, upper: Optional[float] = None) -> SummaryLine:
    """Summary line passing when ``lower <= value <= upper``."""
    passed = (lower is None or value >= lower) and (upper is None or value <= upper)
    bounds = []
    if lower is not None:
        bounds.append('>= {}'.format(format_float(lower)))
    if upper is not None:
        bounds.append('<= {}'.format(format_float(upper)))
    return SummaryLine(name, value, Verdict.PASS if passed else Verdict.FAIL, ', '.join(bounds))


class ExperimentMetaclass(type):

    def __new__(mcs, name, bases, attrs):
        from smplab.loading import experiment_register

        new_class = super().__new__(mcs, name, bases, attrs)
        if hasattr(new_class, 'slug') and new_class.slug:
            if experiment_register.is_registered(new_class.slug):
                raise ImproperlyConfigured('More experiments with slug {}'.format(new_class.slug))

            experiment_register.register(new_class.slug, new_class)
        return new_class

    def __str__(self):
        return str(self.name)


class AbstractExperiment(metaclass=ExperimentMetaclass):
    """
    Named batch run on a validated configuration. ``run`` writes the CSV artifacts through the writer and returns the
    summary lines; ``required_keys`` are configuration keys without a default the experiment cannot run without.
    """

    name: str
    slug: str
    required_keys: Tuple[str, ...] = ()

    def __init__(self, config: "ExperimentConfig", writer: "ArtifactWriter", progress: Any = None):
        self.config = config
        self.writer = writer
        self.progress = progress

    @cached_property
    def scenario(self) -> "Scenario":
        return self.config.build_scenario()

    @cached_property
    def cost(self) -> "CostSpec":
        return self.config.build_cost()

    @cached_property
    def regression(self) -> "RegressionBasis":
        return self.config.build_regression()

    @cached_property
    def control(self) -> "ControlProcess":
        return self.config.initial_control(self.scenario)

    def run(self) -> List[SummaryLine]:
        raise NotImplementedError
