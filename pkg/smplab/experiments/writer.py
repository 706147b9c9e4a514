import os
import traceback
from typing import Any, Iterable, List, Sequence

import numpy as np

from smplab.utils import format_float
from smplab.version import get_version


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


class ArtifactWriter:
    """
    Writes the artifacts of one experiment run into ``directory``: CSV files (comma separated, header row, LF line
    endings, floats with 17 significant digits), ``manifest.txt``, ``summary.txt`` and ``error.txt`` on failure.
    """

    def __init__(self, directory: str):
        self.directory = directory
        self.files: List[str] = []
        os.makedirs(directory, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.directory, filename)

    def _write_text(self, filename: str, text: str) -> str:
        with open(self.path(filename), 'w', encoding='utf-8', newline='\n') as output:
            output.write(text)
        if filename not in self.files:
            self.files.append(filename)
        return self.path(filename)

    def write_csv(self, filename: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        lines = [','.join(header)]
        for row in rows:
            if len(row) != len(header):
                raise ValueError('Row of {} cells does not match the {} columns of {}'.format(
                    len(row), len(header), filename
                ))
            lines.append(','.join(format_cell(cell) for cell in row))
        return self._write_text(filename, '\n'.join(lines) + '\n')

    def write_summary(self, lines: Iterable[Any]) -> str:
        return self._write_text('summary.txt', ''.join('{}\n'.format(line) for line in lines))

    def write_manifest(self, config, wall_time: float) -> str:
        header = [
            'experiment = {}'.format(config.experiment),
            'version = {}'.format(get_version()),
            'seed = {}'.format(config.seed),
            'wall_time = {:.3f}'.format(wall_time),
            'files = {}'.format(', '.join(self.files)),
            '',
            '# configuration',
        ]
        return self._write_text('manifest.txt', '\n'.join(header) + '\n' + config.serialize())

    def write_error(self, exception: BaseException) -> str:
        return self._write_text('error.txt', ''.join(
            traceback.format_exception(type(exception), exception, exception.__traceback__)
        ))
