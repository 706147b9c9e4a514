"""
Exponential Euler integration of the mild state equation and of its first variation on the Galerkin truncation.

The linear part is propagated exactly; the reaction, the boundary control and the noise gains are frozen at the
left endpoint of each step. Boundary noise is integrated with its exact one-step Gaussian law, reusing the sampled
boundary increment so that common random numbers survive the change of scheme.
"""
import logging
from typing import Iterator, List, NamedTuple, Optional

import numpy as np

from smplab.noise import LineageError, NoiseBundle
from smplab.scenario import ControlProcess, Scenario, TimeGrid
from smplab.spectral import h_norm, nemytskii_apply
from smplab.utils import fit_loglog, mean_and_standard_error


logger = logging.getLogger(__name__)


class BlowUpError(ArithmeticError):
    """State became non-finite."""

    def __init__(self, step: int, path: int):
        self.step = step
        self.path = path
        super().__init__(f'Non-finite state at step {step} of path {path}.')


class ExponentialEuler:
    """One-step maps of the state equation and of its linearization for a fixed step size ``h``."""

    def __init__(self, scenario: Scenario, h: float):
        basis = scenario.basis
        self.scenario = scenario
        self.h = h
        self.propagator = basis.semigroup_factors(h)
        self.phi = basis.phi(h)
        self.control_matrix = scenario.boundary_matrix * self.phi[:, None]
        self.noise_matrix = (scenario.boundary_matrix * scenario.boundary_noise) * np.sqrt(basis.psi(h) / h)[:, None]

    def reaction(self, x: np.ndarray) -> np.ndarray:
        affine = self.scenario.reaction.affine_parts
        if affine is not None:
            slope, offset = affine
            out = slope * x
            out[..., 0] += offset
            return out
        return nemytskii_apply(self.scenario.basis, self.scenario.reaction, x)

    def reaction_jacobian_apply(self, x_bar: np.ndarray, x_tilde: np.ndarray) -> np.ndarray:
        """``F_x(x_bar) x_tilde``"""
        affine = self.scenario.reaction.affine_parts
        if affine is not None:
            return affine[0] * x_tilde
        basis = self.scenario.basis
        return basis.to_modal(self.scenario.reaction.derivative(basis.to_grid(x_bar)) * basis.to_grid(x_tilde))

    def noise_term(self, x: np.ndarray, modal_increment: Optional[np.ndarray], derivative: bool = False,
                   x_bar: Optional[np.ndarray] = None) -> np.ndarray:
        """``e^{hA} G(x) dW`` or, with ``derivative``, ``e^{hA} G_x(x_bar) x dW``."""
        gain = self.scenario.noise_gain
        if gain is None or modal_increment is None:
            return 0.0
        basis = self.scenario.basis
        white = basis.to_grid(modal_increment)
        if derivative:
            field = gain.derivative(basis.to_grid(x_bar)) * basis.to_grid(x)
        else:
            field = gain(basis.to_grid(x))
        return self.propagator * basis.to_modal(field * white)

    def step(self, x: np.ndarray, u: np.ndarray, boundary_increment: Optional[np.ndarray],
             modal_increment: Optional[np.ndarray]) -> np.ndarray:
        out = self.propagator * x + self.phi * self.reaction(x) + self.control_matrix @ u
        if boundary_increment is not None and self.scenario.has_boundary_noise:
            out = out + boundary_increment @ self.noise_matrix.T
        return out + self.noise_term(x, modal_increment)

    def linearized_step(self, x_tilde: np.ndarray, x_bar: np.ndarray, v: np.ndarray,
                        modal_increment: Optional[np.ndarray]) -> np.ndarray:
        out = (
            self.propagator * x_tilde + self.phi * self.reaction_jacobian_apply(x_bar, x_tilde)
            + self.control_matrix @ v
        )
        return out + self.noise_term(x_tilde, modal_increment, derivative=True, x_bar=x_bar)


def check_finite(states: np.ndarray, step: int, noise: NoiseBundle) -> None:
    bad = ~np.all(np.isfinite(states), axis=-1)
    if bad.any():
        raise BlowUpError(step, int(noise.paths[np.argmax(bad)]))


def _check_inputs(scenario: Scenario, control: ControlProcess, noise: NoiseBundle, grid: TimeGrid) -> None:
    control.check_grid(grid)
    if noise.n_steps != grid.n_steps or noise.horizon != grid.horizon:
        raise LineageError(f'{noise!r} does not match {grid!r}.')
    if noise.n_modes != scenario.basis.n_modes:
        raise LineageError(f'{noise!r} does not match {scenario.basis!r}.')
    if scenario.noise_gain is not None and not noise.distributed:
        raise LineageError('Scenario has distributed noise but the bundle carries no distributed increments.')


def integrate(scenario: Scenario, control: ControlProcess, noise: NoiseBundle,
              grid: Optional[TimeGrid] = None) -> Iterator[np.ndarray]:
    """Yield the states ``(n_paths, N)`` at every node of ``grid``, starting with the initial state."""
    grid = grid or scenario.grid
    _check_inputs(scenario, control, noise, grid)
    scheme = ExponentialEuler(scenario, grid.step)
    x = np.tile(scenario.initial_state, (noise.n_paths, 1))
    yield x
    for i in range(grid.n_steps):
        boundary = noise.boundary(i) if scenario.has_boundary_noise else None
        modal = noise.modal(i) if scenario.noise_gain is not None else None
        x = scheme.step(x, control.values[i], boundary, modal)
        check_finite(x, i + 1, noise)
        yield x


class StatePath:
    """Modal coefficients of one path at every node of its grid."""

    def __init__(self, states: np.ndarray, grid: TimeGrid, control: ControlProcess, noise: NoiseBundle,
                 path: int):
        self.states = states
        self.grid = grid
        self.control = control
        self.noise = noise
        self.path = path

    def __repr__(self):
        return f'StatePath(path={self.path}, {self.grid!r})'

    def sup_norm(self) -> float:
        return float(h_norm(self.states).max())


class PathEnsemble:
    """
    ``states`` has shape ``(n_paths, n_steps + 1, N)``. The noise bundle and the control that produced the states
    are kept so that coupled processes can be checked for a common lineage.
    """

    def __init__(self, scenario: Scenario, states: np.ndarray, grid: TimeGrid, control: ControlProcess,
                 noise: NoiseBundle):
        states.setflags(write=False)
        self.scenario = scenario
        self.states = states
        self.grid = grid
        self.control = control
        self.noise = noise

    def __repr__(self):
        return f'PathEnsemble(n_paths={self.n_paths}, {self.grid!r})'

    def __len__(self):
        return self.n_paths

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1, :]

    def path(self, index: int) -> StatePath:
        return StatePath(self.states[index], self.grid, self.control, self.noise.select([index]),
                         int(self.noise.paths[index]))

    def check_lineage(self, other: 'PathEnsemble') -> None:
        if self.grid != other.grid or self.states.shape != other.states.shape:
            raise LineageError(f'{self!r} and {other!r} live on different grids.')
        self.noise.check_lineage(other.noise)

    def sup_norms(self) -> np.ndarray:
        """Pathwise ``sup_t |X_t|``."""
        return h_norm(self.states).max(axis=-1)

    def mean_sup_norm(self):
        mean, se = mean_and_standard_error(self.sup_norms())
        return float(mean), float(se)

    def mean_path(self) -> np.ndarray:
        return self.states.mean(axis=0)


def simulate_ensemble(scenario: Scenario, control: ControlProcess, grid: Optional[TimeGrid] = None,
                      noise: Optional[NoiseBundle] = None) -> PathEnsemble:
    grid = grid or scenario.grid
    if noise is None:
        noise = NoiseBundle(scenario.seed, np.arange(scenario.n_paths), grid.horizon, grid.n_steps,
                            scenario.basis.n_modes, distributed=scenario.noise_gain is not None)
    states = np.stack(list(integrate(scenario, control, noise, grid)), axis=1)
    return PathEnsemble(scenario, states, grid, control, noise)


def simulate_path(scenario: Scenario, control: ControlProcess, noise: NoiseBundle, grid: Optional[TimeGrid] = None,
                  path: int = 0) -> StatePath:
    """Single path at position ``path`` of ``noise``."""
    ensemble = simulate_ensemble(scenario, control, grid, noise.select([path]))
    return ensemble.path(0)


def first_variation(scenario: Scenario, base: PathEnsemble, direction: ControlProcess) -> PathEnsemble:
    """
    Linearized equation along ``base`` forced by ``(lambda - A) D direction``, started at zero and driven by the
    same increments as ``base``.
    """
    grid, noise = base.grid, base.noise
    _check_inputs(scenario, direction, noise, grid)
    scheme = ExponentialEuler(scenario, grid.step)
    x_tilde = np.zeros((base.n_paths, scenario.basis.n_modes))
    states = [x_tilde]
    for i in range(grid.n_steps):
        modal = noise.modal(i) if scenario.noise_gain is not None else None
        x_tilde = scheme.linearized_step(x_tilde, base.states[:, i, :], direction.values[i], modal)
        check_finite(x_tilde, i + 1, noise)
        states.append(x_tilde)
    return PathEnsemble(scenario, np.stack(states, axis=1), grid, direction, noise)


def first_variation_path(scenario: Scenario, base: StatePath, direction: ControlProcess, noise: NoiseBundle,
                         grid: Optional[TimeGrid] = None) -> StatePath:
    grid = grid or base.grid
    if grid != base.grid:
        raise LineageError(f'{base!r} does not live on {grid!r}.')
    base.noise.check_lineage(noise)
    ensemble = PathEnsemble(scenario, base.states[None].copy(), grid, base.control, noise)
    result = first_variation(scenario, ensemble, direction)
    return StatePath(result.states[0], grid, direction, noise, base.path)


def remainder(x_eps: PathEnsemble, x_bar: PathEnsemble, x_tilde: PathEnsemble) -> PathEnsemble:
    """``eta = X^eps - X_bar - X~`` for coupled ensembles."""
    x_bar.check_lineage(x_eps)
    x_bar.check_lineage(x_tilde)
    states = x_eps.states - x_bar.states - x_tilde.states
    return PathEnsemble(x_bar.scenario, states, x_bar.grid, x_eps.control - x_bar.control, x_bar.noise)


def remainder_path(x_eps: StatePath, x_bar: StatePath, x_tilde: StatePath) -> StatePath:
    if not (x_eps.grid == x_bar.grid == x_tilde.grid) or x_eps.path != x_bar.path or x_tilde.path != x_bar.path:
        raise LineageError('Remainder needs paths on one grid with one path index.')
    x_bar.noise.check_lineage(x_eps.noise)
    x_bar.noise.check_lineage(x_tilde.noise)
    return StatePath(x_eps.states - x_bar.states - x_tilde.states, x_bar.grid, x_eps.control - x_bar.control,
                     x_bar.noise, x_bar.path)


class SelfConvergenceReport(NamedTuple):

    steps: List[float]
    errors: List[float]
    standard_errors: List[float]
    rate: float
    rate_stderr: float


def self_convergence(scenario: Scenario, control: ControlProcess, levels: int = 4,
                     n_paths: Optional[int] = None) -> SelfConvergenceReport:
    """
    Strong self-convergence of the scheme: ``E max_i |X^h(t_i) - X^{h/2}(t_i)|`` over the coarse nodes for ``levels``
    successive halvings of the scenario step, all driven by one fine noise bundle.

    ``control`` lives on the scenario grid and is refined by repetition.
    """
    fine_factor = 2 ** levels
    fine_grid = scenario.grid.refined(fine_factor)
    fine_noise = NoiseBundle(scenario.seed, np.arange(n_paths or scenario.n_paths), scenario.horizon,
                             fine_grid.n_steps, scenario.basis.n_modes, distributed=scenario.noise_gain is not None)
    solutions = []
    for level in range(levels + 1):
        factor = 2 ** level
        grid = scenario.grid.refined(factor)
        noise = fine_noise.coarsened(fine_factor // factor)
        ensemble = simulate_ensemble(scenario, control.refined(factor), grid, noise)
        solutions.append(ensemble.states[:, ::factor, :])
    steps, errors, standard_errors = [], [], []
    for level in range(levels):
        difference = h_norm(solutions[level] - solutions[level + 1]).max(axis=-1)
        mean, se = mean_and_standard_error(difference)
        steps.append(scenario.grid.step / 2 ** level)
        errors.append(float(mean))
        standard_errors.append(float(se))
    fit = fit_loglog(steps, np.maximum(errors, np.finfo(float).tiny))
    logger.info('Self-convergence rate %.4f over %d levels', fit.slope, levels)
    return SelfConvergenceReport(steps, errors, standard_errors, fit.slope, fit.slope_stderr)

