import logging

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import BaseCommand, CommandError

from smplab.config import read_config
from smplab.experiments.runner import run_experiment
from smplab.loading import experiment_register


logger = logging.getLogger(getattr(settings, 'SMPLAB_LOGGER', __name__))


class Command(BaseCommand):
    help = 'Run a stochastic maximum principle experiment and write its artifacts.'

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='experiment', title='experiments')
        subparsers.required = True
        for slug, experiment_class in experiment_register.items():
            subparser = subparsers.add_parser(slug, help=experiment_class.name)
            subparser.add_argument('--config', type=str, action='store', dest='config', required=True,
                                   help='path of the experiment configuration file')
            subparser.add_argument('--out', type=str, action='store', dest='out', default=None,
                                   help='output directory, defaults to experiment.output or the current directory')
            subparser.add_argument('--seed', type=int, action='store', dest='seed', default=None,
                                   help='unsigned 64-bit seed overriding experiment.seed')
            subparser.add_argument('--strict', action='store_true', dest='strict', default=None,
                                   help='exit with nonzero status when a summary verdict fails')

    def handle(self, experiment, config, out=None, seed=None, strict=None, *args, **options):
        overrides = {'experiment.name': experiment}
        if seed is not None:
            overrides['experiment.seed'] = str(seed)
        try:
            experiment_config = read_config(config, overrides)
        except OSError as ex:
            raise CommandError('Cannot read configuration {}: {}'.format(config, ex))
        except ImproperlyConfigured as ex:
            raise CommandError('Invalid configuration {}:\n{}'.format(config, ex))

        try:
            result = run_experiment(experiment_config, out, strict, progress=self.stdout)
        except Exception as ex:
            logger.exception('Experiment %s failed', experiment)
            raise CommandError('Experiment {} failed: {}'.format(experiment, ex))

        for line in result.summary:
            self.stdout.write(str(line))
        if result.exit_status:
            raise CommandError('{} summary verdicts failed'.format(len(result.failures)))
        self.stdout.write('Artifacts were written to {}'.format(result.directory))
