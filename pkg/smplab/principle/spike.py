"""
Spike variations ``u^eps = v on [t_bar, t_bar + eps), u_bar elsewhere`` and the study of their convergence rates.
"""
import logging
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from chamber.utils.tqdm import tqdm

from smplab.costs import CostSpec
from smplab.forward import ExponentialEuler, check_finite
from smplab.noise import NoiseBundle
from smplab.scenario import ControlProcess, ControlSet, Scenario, TimeGrid
from smplab.spectral import build_basis, h_norm
from smplab.utils import LogLogFit, fit_loglog, mean_and_standard_error


logger = logging.getLogger(__name__)


class SpikeAlignmentError(ValueError):
    pass


class SpikeSpec(NamedTuple):

    t_bar: float
    epsilon: float
    v: Sequence[float]

    def check(self, grid: TimeGrid, control_set: Optional[ControlSet] = None) -> None:
        if self.epsilon <= 0:
            raise ValueError(f'Spike width must be positive, got {self.epsilon!r}.')
        if self.t_bar < 0 or self.t_bar + self.epsilon > grid.horizon * (1 + 1e-12):
            raise ValueError(f'Spike window [{self.t_bar!r}, {self.t_bar + self.epsilon!r}] leaves [0, T].')
        if control_set is not None and not control_set.contains(np.asarray(self.v, dtype=float)):
            raise ValueError(f'Spike value {self.v!r} is not admissible.')


def _step_index(time: float, h: float, strict: bool, round_up: bool) -> int:
    ratio = time / h
    nearest = int(round(ratio))
    if abs(ratio - nearest) <= 1e-9 * max(1.0, abs(ratio)):
        return nearest
    if strict:
        raise SpikeAlignmentError(f'Time {time!r} is not a multiple of the step {h!r}.')
    return int(np.ceil(ratio)) if round_up else int(np.floor(ratio))


def spike_steps(grid: TimeGrid, spec: SpikeSpec, strict: bool = True) -> range:
    """Steps whose interval ``[t_i, t_{i+1})`` lies inside ``[t_bar, t_bar + eps)``."""
    spec.check(grid)
    first = _step_index(spec.t_bar, grid.step, strict, round_up=True)
    stop = _step_index(spec.t_bar + spec.epsilon, grid.step, strict, round_up=False)
    return range(first, max(first, min(stop, grid.n_steps)))


def spike_control(u_bar: ControlProcess, spec: SpikeSpec, grid: TimeGrid, control_set: Optional[ControlSet] = None,
                  strict: bool = True) -> ControlProcess:
    """
    Args:
        strict: reject windows that are not multiples of the step; otherwise only steps fully inside the window
            are changed
    """
    u_bar.check_grid(grid)
    spec.check(grid, control_set)
    steps = spike_steps(grid, spec, strict)
    values = np.array(u_bar.values)
    values[steps.start:steps.stop] = np.asarray(spec.v, dtype=float)
    admissible = u_bar.admissible and (control_set is None or bool(control_set.contains(np.asarray(spec.v, float))))
    return ControlProcess(values, admissible=admissible)


class RateReport(NamedTuple):

    epsilons: List[float]
    delta_values: List[float]
    delta_errors: List[float]
    eta_values: List[float]
    eta_errors: List[float]
    cost_increments: List[float]
    cost_increment_errors: List[float]
    first_variation_moments: Dict[int, List[float]]
    delta_fit: LogLogFit
    eta_fit: Optional[LogLogFit]
    noisy_ladder: bool
    refinement_deltas: Dict[str, float]

    @property
    def delta_slope(self) -> float:
        return self.delta_fit.slope

    @property
    def eta_slope(self) -> Optional[float]:
        return None if self.eta_fit is None else self.eta_fit.slope


class _SpikeStream:
    """Perturbed state and first variation of one spike, started at the first spiked step."""

    def __init__(self, steps: range, v: np.ndarray):
        self.steps = steps
        self.v = v
        self.x_eps = None
        self.x_tilde = None

    def active(self, i: int) -> bool:
        return i >= self.steps.start


def _stream_chunk(scenario: Scenario, cost: CostSpec, u_bar: ControlProcess, streams: List[_SpikeStream],
                  noise: NoiseBundle):
    """Pathwise sup-norms and cost increments of one chunk of paths for every spike of the ladder."""
    grid = scenario.grid
    h = grid.step
    basis = scenario.basis
    scheme = ExponentialEuler(scenario, h)
    n_paths = noise.n_paths
    x_bar = np.tile(scenario.initial_state, (n_paths, 1))
    size = len(streams)
    sup_delta = np.zeros((size, n_paths))
    sup_eta = np.zeros((size, n_paths))
    sup_tilde = np.zeros((size, n_paths))
    increments = np.zeros((size, n_paths))

    for i in range(grid.n_steps):
        boundary = noise.boundary(i) if scenario.has_boundary_noise else None
        modal = noise.modal(i) if scenario.noise_gain is not None else None
        u_i = u_bar.values[i]
        cost_bar = cost.running_value(basis, x_bar, u_i)
        for e, stream in enumerate(streams):
            if not stream.active(i):
                continue
            if stream.x_eps is None:
                stream.x_eps = x_bar.copy()
                stream.x_tilde = np.zeros_like(x_bar)
            u_eps = stream.v if i in stream.steps else u_i
            increments[e] += h * (cost.running_value(basis, stream.x_eps, u_eps) - cost_bar)
            stream.x_tilde = scheme.linearized_step(stream.x_tilde, x_bar, u_eps - u_i, modal)
            stream.x_eps = scheme.step(stream.x_eps, u_eps, boundary, modal)
            check_finite(stream.x_eps, i + 1, noise)
        x_bar = scheme.step(x_bar, u_i, boundary, modal)
        check_finite(x_bar, i + 1, noise)
        for e, stream in enumerate(streams):
            if stream.x_eps is None:
                continue
            difference = stream.x_eps - x_bar
            np.maximum(sup_delta[e], h_norm(difference), out=sup_delta[e])
            np.maximum(sup_eta[e], h_norm(difference - stream.x_tilde), out=sup_eta[e])
            np.maximum(sup_tilde[e], h_norm(stream.x_tilde), out=sup_tilde[e])

    terminal_bar = cost.terminal_value(basis, x_bar)
    for e, stream in enumerate(streams):
        increments[e] += cost.terminal_value(basis, stream.x_eps) - terminal_bar
    return sup_delta, sup_eta, sup_tilde, increments


def _fit_positive(epsilons: Sequence[float], values: Sequence[float]) -> Optional[LogLogFit]:
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        return None
    return fit_loglog(epsilons, values)


def spike_rate_study(scenario: Scenario, cost: CostSpec, u_bar: ControlProcess, t_bar: float, v: Sequence[float],
                     epsilons: Sequence[float], chunk_size: int = 500, moments: Sequence[int] = (2, 4),
                     refinements: bool = False, progress=None) -> RateReport:
    """
    Simulate ``X_bar``, ``X^eps``, ``X~^eps`` and ``eta^eps`` for every ``eps`` of the ladder with common random
    numbers, streaming over time so that no trajectory is stored, and fit the log-log rates of
    ``E sup|X^eps - X_bar|`` and ``E sup|eta^eps|``.
    """
    grid = scenario.grid
    u_bar.check_grid(grid)
    epsilons = [float(eps) for eps in epsilons]
    if len(epsilons) < 2 or any(a <= b for a, b in zip(epsilons, epsilons[1:])):
        raise ValueError('Spike ladder must be strictly decreasing with at least two entries.')
    v = np.broadcast_to(np.asarray(v, dtype=float), (2,)).copy()
    specs = [SpikeSpec(t_bar, eps, v) for eps in epsilons]
    streams = [_SpikeStream(spike_steps(grid, spec, strict=True), v) for spec in specs]
    if grid.step > min(epsilons) / 8 * (1 + 1e-12):
        logger.warning('Time step %g is coarser than eps_min / 8 = %g', grid.step, min(epsilons) / 8)

    full_noise = NoiseBundle.for_scenario(scenario)
    chunks = range(0, scenario.n_paths, chunk_size)
    results = []
    for start in tqdm(chunks, file=progress, disable=progress is None, desc='Spike ladder'):
        for stream in streams:
            stream.x_eps = stream.x_tilde = None
        noise = full_noise.select(np.arange(start, min(start + chunk_size, scenario.n_paths)))
        results.append(_stream_chunk(scenario, cost, u_bar, streams, noise))
    sup_delta, sup_eta, sup_tilde, increments = (np.concatenate(parts, axis=1) for parts in zip(*results))

    delta, delta_se = mean_and_standard_error(sup_delta, axis=1)
    eta, eta_se = mean_and_standard_error(sup_eta, axis=1)
    increment, increment_se = mean_and_standard_error(increments, axis=1)
    moment_values = {p: (sup_tilde ** p).mean(axis=1).tolist() for p in moments}
    delta_fit = fit_loglog(epsilons, delta)
    eta_fit = None if np.all(eta <= 1e-12 * np.max(delta)) else _fit_positive(epsilons, eta)
    gaps = np.abs(np.diff(delta))
    noisy = bool(np.max(delta_se) > 0.5 * np.min(gaps)) if gaps.size else False
    if noisy:
        logger.warning('Monte-Carlo error %g exceeds half of the smallest ladder gap %g', np.max(delta_se),
                       np.min(gaps))
    logger.info('Spike rates: delta slope %.4f, eta slope %s', delta_fit.slope,
                'n/a' if eta_fit is None else '{:.4f}'.format(eta_fit.slope))

    refinement_deltas: Dict[str, float] = {}
    if refinements:
        refined_time = spike_rate_study(
            scenario.replace(n_steps=2 * scenario.n_steps), cost, u_bar.refined(2), t_bar, v, epsilons, chunk_size,
            moments
        )
        basis = scenario.basis
        refined_modes = spike_rate_study(
            scenario.replace(basis=build_basis(2 * basis.n_modes, basis.lam, 2 * basis.grid_size)), cost, u_bar,
            t_bar, v, epsilons, chunk_size, moments
        )
        refinement_deltas = {
            'h_delta_slope': refined_time.delta_slope - delta_fit.slope,
            'n_delta_slope': refined_modes.delta_slope - delta_fit.slope,
        }
        if eta_fit is not None and refined_time.eta_fit is not None and refined_modes.eta_fit is not None:
            refinement_deltas['h_eta_slope'] = refined_time.eta_slope - eta_fit.slope
            refinement_deltas['n_eta_slope'] = refined_modes.eta_slope - eta_fit.slope

    return RateReport(
        epsilons, delta.tolist(), delta_se.tolist(), eta.tolist(), eta_se.tolist(), increment.tolist(),
        increment_se.tolist(), moment_values, delta_fit, eta_fit, noisy, refinement_deltas,
    )
