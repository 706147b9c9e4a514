from typing import Any, NamedTuple, Sequence

import numpy as np
from scipy import stats


def str_to_class(class_string: str) -> Any:
    module_name, class_name = class_string.rsplit('.', 1)
    # load the module, will raise ImportError if module cannot be loaded
    m = __import__(module_name, globals(), locals(), [str(class_name)])
    # get the class, will raise AttributeError if class cannot be found
    c = getattr(m, class_name)
    return c


def enum_slug(member) -> str:
    """Lower-case, dash separated name of an enum member (``FINITE_SET`` -> ``finite-set``)."""
    return member.name.lower().replace('_', '-')


def format_float(value: float) -> str:
    """
    Format a float with 17 significant digits.

    Every artifact written by the lab goes through this function so that identical runs produce byte-identical files.
    """
    return format(float(value), '.17g')


def keyed_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Return a generator whose stream depends only on ``seed`` and the integer ``keys``.

    Args:
        seed: The scenario seed (64-bit, non-negative)
        keys: Lineage of the stream (e.g. step index and noise kind)

    Returns:
        Independent numpy generator
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


class LogLogFit(NamedTuple):

    slope: float
    intercept: float
    slope_stderr: float

    @property
    def constant(self) -> float:
        return float(np.exp(self.intercept))

    def confidence_interval(self, z: float = 1.96):
        return self.slope - z * self.slope_stderr, self.slope + z * self.slope_stderr


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> LogLogFit:
    """
    Least-squares line through ``(log x, log y)``.

    Both coordinates must be positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError('At least two matching points are required for a log-log fit.')
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError('Log-log fit requires positive values.')
    result = stats.linregress(np.log(x), np.log(y))
    stderr = float(result.stderr) if x.size > 2 else float('nan')
    return LogLogFit(float(result.slope), float(result.intercept), stderr)


def mean_and_standard_error(values: np.ndarray, axis: int = 0):
    """Monte-Carlo mean and standard error of ``values`` along ``axis``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    mean = values.mean(axis=axis)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, values.std(axis=axis, ddof=1) / np.sqrt(n)
