import logging
from typing import List, NamedTuple, Optional

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from smplab.adjoint import solve_adjoint
from smplab.costs import CostSpec
from smplab.enums import ControlSetKind
from smplab.forward import simulate_ensemble
from smplab.noise import NoiseBundle
from smplab.regression import RegressionBasis
from smplab.scenario import ControlProcess, Scenario, ValidationReport, cost_evaluate, validate_scenario
from smplab.utils import keyed_rng

from .gradient import Gradient, gradient_adjoint
from .hamiltonian import hamiltonian_table, verify_smp


logger = logging.getLogger(__name__)

# Stream key of the damping draws, disjoint from the noise and audit keys.
MSA_STREAM = 2 ** 32 + 1
DIVERGENCE_PATIENCE = 5


class IterationRecord(NamedTuple):

    iteration: int
    cost: float
    cost_error: float
    residual: float
    step_size: float
    accepted: bool
    changed_steps: int = 0


class DivergenceError(ArithmeticError):

    def __init__(self, history: List[IterationRecord]):
        self.history = history
        super().__init__(f'Cost increased on {DIVERGENCE_PATIENCE} consecutive accepted iterations.')


class OptimizationResult(NamedTuple):

    control: ControlProcess
    cost: float
    history: List[IterationRecord]
    converged: bool
    cycling: bool = False


def variational_residual(gradient: Gradient, control: ControlProcess, vertices: np.ndarray) -> float:
    """``sum_i h max_v <-g_i, v - u_i>_+`` over the vertices of the box."""
    slopes = np.einsum('ic,vic->vi', -gradient.values, vertices[:, None, :] - control.values[None])
    return float(gradient.step * np.maximum(slopes.max(axis=0), 0.0).sum())


def optimize_projected_gradient(scenario: Scenario, cost: CostSpec, u0: ControlProcess, step_size: float = 1.0,
                                max_iters: int = 50, tolerance: float = 1e-3,
                                regression: Optional[RegressionBasis] = None, acceptance_slack: float = 0.0,
                                max_halvings: int = 30,
                                validation: Optional[ValidationReport] = None) -> OptimizationResult:
    """
    ``u <- Proj_box(u - rho g)`` with the adjoint gradient and common random numbers for every evaluation. A trial
    is accepted when its cost does not exceed the current one by more than ``acceptance_slack`` standard errors
    (an infinite slack accepts every trial), otherwise ``rho`` is halved. Stops when the variational inequality
    residual drops below ``tolerance * (1 + |J|)``. The convex case hypotheses of ``validation`` (audited here when
    omitted) must hold.
    """
    control_set = scenario.control_set
    if control_set.kind != ControlSetKind.BOX:
        raise ImproperlyConfigured('Projected gradient needs a box control set.')
    if validation is None:
        validation = validate_scenario(scenario, cost, convex_case=True)
    noise = NoiseBundle.for_scenario(scenario)
    vertices = control_set.vertices
    control = ControlProcess.tagged(control_set.project(u0.values), control_set)
    history: List[IterationRecord] = []
    increases = 0
    rho = step_size

    ensemble = simulate_ensemble(scenario, control, noise=noise)
    value, error = cost_evaluate(scenario, cost, ensemble, control)
    for iteration in range(max_iters + 1):
        adjoint = solve_adjoint(ensemble, control, cost, regression)
        gradient = gradient_adjoint(control, adjoint, cost, validation)
        residual = variational_residual(gradient, control, vertices)
        history.append(IterationRecord(iteration, value, error, residual, rho, True))
        logger.info('Projected gradient iteration %d: J = %.10g, residual = %.3e, rho = %g', iteration, value,
                    residual, rho)
        if residual <= tolerance * (1.0 + abs(value)):
            return OptimizationResult(control, value, history, True)
        if iteration == max_iters:
            break
        for _ in range(max_halvings):
            trial = ControlProcess.tagged(control_set.project(control.values - rho * gradient.values), control_set)
            trial_ensemble = simulate_ensemble(scenario, trial, noise=noise)
            trial_value, trial_error = cost_evaluate(scenario, cost, trial_ensemble, trial)
            if np.isposinf(acceptance_slack) or trial_value <= value + acceptance_slack * trial_error:
                break
            history.append(IterationRecord(iteration, trial_value, trial_error, residual, rho, False))
            rho /= 2.0
        else:
            logger.info('Projected gradient stalled after %d step halvings', max_halvings)
            return OptimizationResult(control, value, history, False)
        increases = increases + 1 if trial_value > value else 0
        control, ensemble, value, error = trial, trial_ensemble, trial_value, trial_error
        if increases >= DIVERGENCE_PATIENCE:
            history.append(IterationRecord(iteration + 1, value, error, float('nan'), rho, True))
            raise DivergenceError(history)
    return OptimizationResult(control, value, history, False)


def optimize_msa(scenario: Scenario, cost: CostSpec, u0: ControlProcess, max_iters: int = 50, damping: float = 0.0,
                 tolerance: Optional[float] = None, regression: Optional[RegressionBasis] = None) -> OptimizationResult:
    """
    Method of successive approximations on a finite control set: forward solve, adjoint solve, then per step the
    value maximizing the cross-path mean of the Hamiltonian. Each step the maximization would change keeps its old
    value with probability ``damping``, convergence is declared only when no step would change. The best iterate by
    estimated cost is returned; a repeated control sequence stops the iteration.
    """
    control_set = scenario.control_set
    if control_set.kind != ControlSetKind.FINITE_SET:
        raise ImproperlyConfigured('Successive approximations need a finite control set.')
    if not 0.0 <= damping < 1.0:
        raise ValueError(f'Damping must lie in [0, 1), got {damping!r}.')
    noise = NoiseBundle.for_scenario(scenario)
    points = control_set.points
    control = ControlProcess.tagged(control_set.project(u0.values), control_set)
    history: List[IterationRecord] = []
    seen = set()
    best: Optional[OptimizationResult] = None
    converged = cycling = False

    for iteration in range(max_iters + 1):
        ensemble = simulate_ensemble(scenario, control, noise=noise)
        value, error = cost_evaluate(scenario, cost, ensemble, control)
        if best is None or value < best.cost:
            best = OptimizationResult(control, value, history, False)
        if len(points) == 1:
            history.append(IterationRecord(iteration, value, error, 0.0, damping, True))
            converged = True
            break
        adjoint = solve_adjoint(ensemble, control, cost, regression)
        report = verify_smp(ensemble, adjoint, control, control_set, cost, tolerance)
        history.append(IterationRecord(iteration, value, error, report.max_expected_gap, damping, True))
        logger.info('MSA iteration %d: J = %.10g, max gap = %.3e', iteration, value, report.max_expected_gap)
        if report.passed:
            converged = True
            break
        if iteration == max_iters:
            break
        table = hamiltonian_table(scenario.basis, ensemble.states, adjoint.step_beta, points, cost).mean(axis=1)
        steps = np.arange(control.n_steps)
        current_index = np.argmax(np.all(control.values[:, None, :] == points[None], axis=-1), axis=1)
        best_index = np.argmax(table, axis=0)
        ties = table[current_index, steps] >= table[best_index, steps]
        proposal = np.where(ties[:, None], control.values, points[best_index])
        changed = int(np.any(proposal != control.values, axis=1).sum())
        history[-1] = history[-1]._replace(changed_steps=changed)
        if not changed:
            converged = True
            break
        if damping:
            hold = keyed_rng(scenario.seed, MSA_STREAM, iteration).random(control.n_steps) < damping
            proposal = np.where(hold[:, None], control.values, proposal)
            if np.array_equal(proposal, control.values):
                continue
        key = proposal.tobytes()
        if key in seen:
            cycling = True
            logger.warning('MSA control sequence repeated at iteration %d', iteration)
            break
        seen.add(control.values.tobytes())
        seen.add(key)
        control = ControlProcess(proposal, admissible=True)

    result = best if cycling or best.cost < value else OptimizationResult(control, value, history, converged)
    return result._replace(history=history, converged=converged and not cycling, cycling=cycling)
