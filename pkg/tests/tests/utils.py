import os
import shutil
import tempfile
from io import StringIO

import numpy as np
from django.core.management import call_command
from django.test import TestCase

from germanium.tools import assert_equal, assert_true


class ExperimentDirectoryMixin(TestCase):
    """Temporary directory holding the configuration files and the artifacts of command runs."""

    def setUp(self):
        super().setUp()
        self.directory = tempfile.mkdtemp(prefix='smplab-')
        self.addCleanup(shutil.rmtree, self.directory, ignore_errors=True)

    def path(self, *parts: str) -> str:
        return os.path.join(self.directory, *parts)

    def write_config(self, filename: str, text: str) -> str:
        path = self.path(filename)
        with open(path, 'w', encoding='utf-8') as config_file:
            config_file.write(text)
        return path

    def call_smplab(self, experiment: str, config: str, out: str, *args: str) -> str:
        stdout = StringIO()
        call_command('smplab', experiment, '--config', config, '--out', self.path(out), *args, stdout=stdout)
        return stdout.getvalue()

    def read_artifact(self, out: str, filename: str) -> bytes:
        with open(self.path(out, filename), 'rb') as artifact:
            return artifact.read()

    def load_csv(self, out: str, filename: str) -> np.ndarray:
        return np.loadtxt(self.path(out, filename), delimiter=',', skiprows=1, ndmin=2)

    def assertArtifactsEqual(self, first: str, second: str, filename: str):
        assert_equal(self.read_artifact(first, filename), self.read_artifact(second, filename))

    def assertArtifactExists(self, out: str, filename: str):
        assert_true(os.path.isfile(self.path(out, filename)), '{} was not written'.format(filename))
