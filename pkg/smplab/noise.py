"""
Common random numbers for every simulation of a scenario.

Increments are never stored per run: the draws of fine step ``j`` come from the generator keyed by
``(seed, j, kind)``, row ``p`` of which belongs to path ``p``. Any path subset, any coarsening of the time grid and any
truncation of the modal dimension therefore sees exactly the same Brownian motions.
"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from smplab.utils import keyed_rng


logger = logging.getLogger(__name__)

BOUNDARY_NOISE = 0
DISTRIBUTED_NOISE = 1


class LineageError(ValueError):
    """Compared quantities were not produced on the same grid or from the same noise."""


class NoiseBundle:
    """
    Standard Brownian increments over ``n_steps`` steps of ``[0, horizon]``: boundary increments in R^2 and, when
    ``distributed`` is set, modal increments in R^``n_modes``, both with variance ``h`` per component.

    Args:
        seed: scenario seed
        paths: path indices, rows of the keyed draws
        horizon: length of the time interval
        n_steps: number of (coarse) steps
        n_modes: modal dimension of the distributed increments
        distributed: whether distributed increments are generated at all
        refinement: number of fine steps summed into one step
        draw_modes: modal width of the draws, at least ``n_modes``
    """

    def __init__(self, seed: int, paths: Sequence[int], horizon: float, n_steps: int, n_modes: int,
                 distributed: bool = True, refinement: int = 1, draw_modes: Optional[int] = None):
        self.seed = int(seed)
        self.paths = np.asarray(paths, dtype=np.int64)
        self.horizon = float(horizon)
        self.n_steps = int(n_steps)
        self.n_modes = int(n_modes)
        self.distributed = bool(distributed)
        self.refinement = int(refinement)
        self.draw_modes = int(draw_modes or n_modes)
        if self.draw_modes < self.n_modes:
            raise ValueError('Draw width must cover the modal dimension.')
        if self.paths.ndim != 1 or not self.paths.size or self.paths.min() < 0:
            raise ValueError('Noise bundle needs a nonempty list of nonnegative path indices.')
        self._cache: Dict[Tuple[int, int], np.ndarray] = {}
        self._cache_bytes = 0

    @classmethod
    def for_scenario(cls, scenario, n_paths: Optional[int] = None) -> 'NoiseBundle':
        return cls(
            scenario.seed, np.arange(n_paths or scenario.n_paths), scenario.horizon, scenario.n_steps,
            scenario.basis.n_modes, distributed=scenario.noise_gain is not None,
        )

    def __repr__(self):
        return (f'NoiseBundle(seed={self.seed}, n_paths={self.n_paths}, n_steps={self.n_steps}, '
                f'refinement={self.refinement}, n_modes={self.n_modes}, distributed={self.distributed})')

    @property
    def n_paths(self) -> int:
        return self.paths.size

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def fine_steps(self) -> int:
        return self.n_steps * self.refinement

    @property
    def lineage(self) -> tuple:
        """Identity of the underlying Brownian motions."""
        return self.seed, self.horizon, self.fine_steps, self.draw_modes, self.distributed, tuple(self.paths.tolist())

    def check_lineage(self, other: 'NoiseBundle') -> None:
        if self.lineage != other.lineage or self.n_steps != other.n_steps:
            raise LineageError(f'Noise bundles {self!r} and {other!r} are not driven by the same increments.')

    def _fine_draws(self, fine_step: int, kind: int, width: int) -> np.ndarray:
        key = (fine_step, kind)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        rows = int(self.paths.max()) + 1
        draws = keyed_rng(self.seed, fine_step, kind).standard_normal((rows, width))[self.paths]
        draws *= np.sqrt(self.horizon / self.fine_steps)
        limit = getattr(settings, 'SMPLAB_NOISE_CACHE_BYTES', 256 * 2 ** 20)
        if self._cache_bytes + draws.nbytes <= limit:
            self._cache[key] = draws
            self._cache_bytes += draws.nbytes
        return draws

    def _increment(self, step: int, kind: int, width: int) -> np.ndarray:
        if not 0 <= step < self.n_steps:
            raise IndexError(f'Step {step} outside of the noise grid with {self.n_steps} steps.')
        start = step * self.refinement
        total = self._fine_draws(start, kind, width).copy()
        for fine_step in range(start + 1, start + self.refinement):
            total += self._fine_draws(fine_step, kind, width)
        return total

    def boundary(self, step: int) -> np.ndarray:
        """Boundary increments ``(n_paths, 2)`` of ``step``."""
        return self._increment(step, BOUNDARY_NOISE, 2)

    def modal(self, step: int) -> Optional[np.ndarray]:
        """Distributed modal increments ``(n_paths, n_modes)`` of ``step`` or ``None``."""
        if not self.distributed:
            return None
        return self._increment(step, DISTRIBUTED_NOISE, self.draw_modes)[:, :self.n_modes]

    def _copy(self, **changes) -> 'NoiseBundle':
        params = dict(
            seed=self.seed, paths=self.paths, horizon=self.horizon, n_steps=self.n_steps, n_modes=self.n_modes,
            distributed=self.distributed, refinement=self.refinement, draw_modes=self.draw_modes,
        )
        params.update(changes)
        return NoiseBundle(**params)

    def select(self, indices: Sequence[int]) -> 'NoiseBundle':
        """Bundle of the given positions within this bundle's paths."""
        return self._copy(paths=self.paths[np.asarray(indices, dtype=np.int64)])

    def coarsened(self, factor: int) -> 'NoiseBundle':
        """Same Brownian motions sampled on every ``factor``-th node."""
        if factor < 1 or self.n_steps % factor:
            raise LineageError(f'Cannot coarsen {self.n_steps} steps by a factor {factor}.')
        return self._copy(n_steps=self.n_steps // factor, refinement=self.refinement * factor)

    def truncated(self, n_modes: int) -> 'NoiseBundle':
        """Same Brownian motions restricted to the first ``n_modes`` modes."""
        if n_modes > self.n_modes:
            raise LineageError(f'Cannot extend {self.n_modes} noise modes to {n_modes}.')
        return self._copy(n_modes=n_modes)
