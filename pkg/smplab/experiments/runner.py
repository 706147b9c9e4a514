import logging
import os
import time
from typing import Any, List, NamedTuple, Optional

from django.conf import settings

from smplab.config import ExperimentConfig
from smplab.enums import Verdict
from smplab.loading import experiment_register

from .base import SummaryLine
from .writer import ArtifactWriter


logger = logging.getLogger(getattr(settings, 'SMPLAB_LOGGER', __name__))


class ExperimentResult(NamedTuple):

    experiment: str
    summary: List[SummaryLine]
    directory: str
    exit_status: int

    @property
    def failures(self) -> List[SummaryLine]:
        return [line for line in self.summary if line.verdict == Verdict.FAIL]


def run_experiment(config: ExperimentConfig, directory: Optional[str] = None, strict: Optional[bool] = None,
                   progress: Any = None) -> ExperimentResult:
    """
    Run the configured experiment and write its artifacts into ``directory``.

    Errors of the experiment are written to ``error.txt`` next to the manifest and re-raised. The exit status is
    nonzero when a summary verdict fails and the run is strict.
    """
    directory = directory or config['experiment.output'] or os.curdir
    strict = config['experiment.strict'] if strict is None else strict
    writer = ArtifactWriter(directory)
    experiment = experiment_register[config.experiment](config, writer, progress)
    logger.info('Experiment %s started (seed %d, output %s)', config.experiment, config.seed, directory)
    started = time.monotonic()
    try:
        summary = experiment.run()
    except Exception as ex:
        writer.write_error(ex)
        writer.write_manifest(config, time.monotonic() - started)
        logger.info('Experiment %s failed: %s', config.experiment, ex)
        raise
    writer.write_summary(summary)
    writer.write_manifest(config, time.monotonic() - started)
    result = ExperimentResult(config.experiment, summary, directory, 0)
    if strict and result.failures:
        result = result._replace(exit_status=1)
    logger.info('Experiment %s finished with %d failed verdicts', config.experiment, len(result.failures))
    return result
