"""
Backward adjoint equation along a simulated trajectory.

``solve_adjoint`` is the exact adjoint of the exponential Euler scheme, with conditional expectations replaced by
cross-sectional regressions: with ``C_i = E[Y_{i+1} | X_i]``

    Y_n = -h_x(X_n)
    Y_i = e^{hA} C_i + F_x(X_i)* (phi(h) C_i) + G_x(X_i)* E[(e^{hA} Y_{i+1}) dW_i | X_i] - h l_x(X_i, u_i)

so that discrete duality and gradient identities hold up to regression error only. By default the reaction enters
through the implicit continuous-time driver ``h F_x(X_i)* Y_i`` resolved by ``picard_iterations`` fixed-point
iterations started from the other terms; ``picard_iterations = 0`` selects the exact discrete adjoint above.
"""
import logging
from typing import List, NamedTuple, Optional

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from smplab.costs import CostSpec
from smplab.forward import PathEnsemble
from smplab.regression import RegressionBasis, RegressionDiagnostics
from smplab.scenario import ControlProcess, TimeGrid
from smplab.spectral import BoundaryMap
from smplab.utils import fit_loglog


logger = logging.getLogger(__name__)

PICARD_ITERATIONS = 2


class NotLinearScenarioError(ImproperlyConfigured):
    pass


class AdjointPath:
    """Adjoint of one path: ``Y`` per node, compressed ``Z`` per step and both boundary pairings."""

    def __init__(self, y: np.ndarray, z: np.ndarray, beta: np.ndarray, step_beta: np.ndarray, path: int):
        self.y = y
        self.z = z
        self.beta = beta
        self.step_beta = step_beta
        self.path = path

    def __repr__(self):
        return f'AdjointPath(path={self.path}, n_steps={self.z.shape[0]})'


class AdjointEnsemble:
    """
    Attributes:
        y: modal ``Y_i`` per path and node, ``(n_paths, n_steps + 1, N)``
        z: projection of ``E[(e^{hA} Y_{i+1}) dW_i | X_i] / h`` per path and step, ``(n_paths, n_steps, N)``
        beta: nodal boundary pairing ``D*(lambda - A)* Y_i``, ``(n_paths, n_steps + 1, 2)``
        step_beta: pairing of step ``i`` consumed by gradients and Hamiltonians, ``(n_paths, n_steps, 2)``
        diagnostics: regression diagnostics per step
    """

    def __init__(self, ensemble: PathEnsemble, y: np.ndarray, z: np.ndarray, step_beta: np.ndarray,
                 diagnostics: Optional[List[RegressionDiagnostics]] = None):
        self.ensemble = ensemble
        self.y = y
        self.z = z
        self.beta = ensemble.scenario.pairing(y)
        self.step_beta = step_beta
        self.diagnostics = diagnostics or []
        for array in (self.y, self.z, self.beta, self.step_beta):
            array.setflags(write=False)

    def __repr__(self):
        return f'AdjointEnsemble(n_paths={self.n_paths}, {self.grid!r})'

    @property
    def grid(self) -> TimeGrid:
        return self.ensemble.grid

    @property
    def n_paths(self) -> int:
        return self.y.shape[0]

    def path(self, index: int) -> AdjointPath:
        return AdjointPath(self.y[index], self.z[index], self.beta[index], self.step_beta[index],
                           int(self.ensemble.noise.paths[index]))

    def relative_distance(self, other: 'AdjointEnsemble') -> float:
        """Relative ensemble L2 distance of ``Y`` over all nodes."""
        scale = np.sqrt(np.mean(np.sum(other.y ** 2, axis=-1)))
        return float(np.sqrt(np.mean(np.sum((self.y - other.y) ** 2, axis=-1))) / max(scale, np.finfo(float).tiny))


def boundary_pairing(y: np.ndarray, map_left: BoundaryMap, map_right: BoundaryMap) -> np.ndarray:
    """``(sum_k b_k^left Y_k, sum_k b_k^right Y_k)`` over the last axis."""
    y = np.asarray(y, dtype=float)
    return np.stack([y @ map_left.b_coeffs, y @ map_right.b_coeffs], axis=-1)


def solve_adjoint(ensemble: PathEnsemble, control: ControlProcess, cost: CostSpec,
                  regression: Optional[RegressionBasis] = None,
                  picard_iterations: int = PICARD_ITERATIONS) -> AdjointEnsemble:
    """
    Regression adjoint of ``ensemble``. Without ``regression`` the default affine features are used and directions
    without spread are dropped.
    """
    scenario = ensemble.scenario
    basis = scenario.basis
    grid = ensemble.grid
    control.check_grid(grid)
    regression = regression or RegressionBasis(truncate=True)
    regression.check_paths(basis.n_modes, ensemble.n_paths)
    h = grid.step
    propagator, phi = basis.semigroup_factors(h), basis.phi(h)
    reaction, gain = scenario.reaction, scenario.noise_gain
    states = ensemble.states
    n = grid.n_steps

    y = np.empty_like(states)
    z = np.zeros((ensemble.n_paths, n, basis.n_modes))
    step_beta = np.empty((ensemble.n_paths, n, 2))
    diagnostics: List[RegressionDiagnostics] = [RegressionDiagnostics(1.0, 0, 1)] * n
    y[:, n, :] = -cost.terminal_gradient(basis, states[:, n, :])

    for i in range(n - 1, -1, -1):
        x = states[:, i, :]
        expectation = regression.fit(x)
        diagnostics[i] = expectation.diagnostics
        continuation = expectation(y[:, i + 1, :])
        running_gradient = cost.running_state_gradient(basis, x, control.values[i])
        step_beta[:, i, :] = scenario.pairing(phi * continuation) / h
        y_i = propagator * continuation - h * running_gradient
        if gain is not None:
            white = basis.to_grid(ensemble.noise.modal(i))
            product = expectation(basis.to_grid(propagator * y[:, i + 1, :]) * white)
            noise_term = basis.to_modal(gain.derivative(basis.to_grid(x)) * product)
            z[:, i, :] = basis.to_modal(product) / h
            y_i = y_i + noise_term
        affine = reaction.affine_parts
        if picard_iterations <= 0:
            if affine is not None:
                y_i = y_i + affine[0] * phi * continuation
            else:
                y_i = y_i + basis.to_modal(reaction.derivative(basis.to_grid(x)) * basis.to_grid(phi * continuation))
        else:
            explicit = y_i
            derivative = None if affine is not None else reaction.derivative(basis.to_grid(x))
            for _ in range(picard_iterations):
                if derivative is None:
                    y_i = explicit + h * affine[0] * y_i
                else:
                    y_i = explicit + h * basis.to_modal(derivative * basis.to_grid(y_i))
        y[:, i, :] = y_i
        logger.debug('Adjoint step %d: condition number %.3e, rank %d', i, expectation.diagnostics.condition_number,
                     expectation.diagnostics.rank)

    truncated = [d for d in diagnostics if d.rank < d.n_features - 1]
    if truncated:
        logger.info('Adjoint regression dropped directions at %d steps, largest condition number %.3e',
                    len(truncated), max(d.condition_number for d in truncated))

    if not np.all(np.isfinite(y)):
        raise ArithmeticError('Adjoint became non-finite.')
    return AdjointEnsemble(ensemble, y, z, step_beta, diagnostics)


def solve_adjoint_exact_linear(ensemble: PathEnsemble, control: ControlProcess, cost: CostSpec,
                               picard_iterations: int = PICARD_ITERATIONS) -> AdjointEnsemble:
    """
    Explicit conditional expectations of the adjoint for affine reaction, no multiplicative noise and costs with
    affine diagonal state gradients: ``Y_i = -(K_i X_i + k_i)`` with

        K_i = s (c a K_{i+1} + h Q),   k_i = s (c (K_{i+1} phi (f_0 + B u_i) + k_{i+1}) + h q),   a = e^{hA} + f' phi

    where ``c = a, s = 1`` for the exact discrete adjoint (``picard_iterations = 0``) and ``c = e^{hA}``,
    ``s = sum_{j <= p} (h f')^j`` after ``p`` Picard iterations of the implicit driver.
    """
    scenario = ensemble.scenario
    basis = scenario.basis
    grid = ensemble.grid
    control.check_grid(grid)
    running = cost.running_affine_state_gradient(basis)
    terminal = cost.terminal_affine_gradient(basis)
    if not scenario.is_linear or running is None or terminal is None:
        raise NotLinearScenarioError(
            'Exact adjoint needs an affine reaction, no multiplicative noise and affine cost gradients.'
        )
    slope, offset = scenario.reaction.affine_parts
    h = grid.step
    n = grid.n_steps
    phi = basis.phi(h)
    propagator = basis.semigroup_factors(h)
    jacobian = propagator + slope * phi
    if picard_iterations <= 0:
        carry, scale = jacobian, 1.0
    else:
        carry, scale = propagator, sum((h * slope) ** j for j in range(picard_iterations + 1))
    forcing = np.zeros(basis.n_modes)
    forcing[0] = offset
    states = ensemble.states

    y = np.empty_like(states)
    step_beta = np.empty((ensemble.n_paths, n, 2))
    gain, shift = terminal
    y[:, n, :] = -(gain * states[:, n, :] + shift)
    for i in range(n - 1, -1, -1):
        x = states[:, i, :]
        drift = phi * (forcing + scenario.boundary_matrix @ control.values[i])
        continuation = -(gain * (jacobian * x + drift) + shift)
        step_beta[:, i, :] = scenario.pairing(phi * continuation) / h
        shift = scale * (carry * (gain * drift + shift) + h * running[1])
        gain = scale * (carry * jacobian * gain + h * running[0])
        y[:, i, :] = -(gain * x + shift)
    z = np.zeros((ensemble.n_paths, n, basis.n_modes))
    return AdjointEnsemble(ensemble, y, z, step_beta)


class RegularityProfile(NamedTuple):

    slope: float
    slope_stderr: float
    constant: float
    blowup_exponent: float
    times_to_horizon: np.ndarray
    mean_norms: np.ndarray
    n_fitted: int


def regularity_profile(adjoint: AdjointEnsemble, grid: Optional[TimeGrid] = None, window: float = 0.02,
                       min_nodes: int = 8) -> RegularityProfile:
    """
    Fit ``log E|beta_i|`` against ``log(T - t_i)`` on the nodes with ``0 < T - t_i <= max(window * T, min_nodes * h)``
    so that a coarse grid widens the window to ``min_nodes`` steps.

    ``blowup_exponent`` is ``min(0, slope)``: a positive slope means the pairing vanishes at the horizon.
    """
    grid = grid or adjoint.grid
    times_to_horizon = grid.horizon - grid.nodes[:-1]
    mean_norms = np.linalg.norm(adjoint.beta[:, :-1, :], axis=-1).mean(axis=0)
    reach = max(window * grid.horizon, min_nodes * grid.step)
    usable = (times_to_horizon <= reach * (1 + 1e-12)) & (mean_norms > 0)
    if usable.sum() < min_nodes:
        raise ValueError(f'Only {int(usable.sum())} usable nodes near the horizon, {min_nodes} are required.')
    fit = fit_loglog(times_to_horizon[usable], mean_norms[usable])
    return RegularityProfile(fit.slope, fit.slope_stderr, fit.constant, min(0.0, fit.slope), times_to_horizon,
                             mean_norms, int(usable.sum()))
