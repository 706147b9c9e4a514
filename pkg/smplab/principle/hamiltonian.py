import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from smplab.adjoint import AdjointEnsemble
from smplab.costs import CostSpec
from smplab.forward import PathEnsemble
from smplab.scenario import ControlProcess, ControlSet
from smplab.spectral import SpectralBasis
from smplab.utils import mean_and_standard_error


logger = logging.getLogger(__name__)


class HamiltonianValue(NamedTuple):

    value: np.ndarray
    boundary_term: np.ndarray
    running_cost_term: np.ndarray


def hamiltonian(basis: SpectralBasis, x: np.ndarray, v: np.ndarray, beta: np.ndarray,
                cost: CostSpec) -> HamiltonianValue:
    """``H(x, v, beta) = <beta, v> - l(x, v)``, broadcast over leading axes."""
    v = np.asarray(v, dtype=float)
    boundary_term = np.sum(np.asarray(beta, dtype=float) * v, axis=-1)
    running_cost_term = cost.running_value(basis, x, v)
    return HamiltonianValue(boundary_term - running_cost_term, boundary_term, running_cost_term)


def hamiltonian_table(basis: SpectralBasis, states: np.ndarray, step_beta: np.ndarray, candidates: np.ndarray,
                      cost: CostSpec) -> np.ndarray:
    """Pathwise Hamiltonians ``(n_candidates, n_paths, n_steps)`` of constant candidate values ``(n_candidates, 2)``."""
    x = states[:, :-1, :]
    return np.stack([hamiltonian(basis, x, candidate, step_beta, cost).value for candidate in candidates])


class StepGap(NamedTuple):

    step: int
    expected_gap: float
    standard_error: float
    pathwise_max_gap: float
    argmax: Tuple[float, float]


class ViolationReport(NamedTuple):

    steps: List[StepGap]
    max_expected_gap: float
    mean_expected_gap: float
    max_pathwise_gap: float
    mean_pathwise_gap: float
    error_estimate: float
    tolerance: float
    violations: List[StepGap]

    @property
    def passed(self) -> bool:
        return self.max_expected_gap <= self.tolerance


def verify_smp(ensemble: PathEnsemble, adjoint: AdjointEnsemble, u_bar: ControlProcess, control_set: ControlSet,
               cost: CostSpec, tolerance: Optional[float] = None) -> ViolationReport:
    """
    Compare ``H(X_t, u_bar_t, Y_t)`` with ``H(X_t, v, Y_t)`` on the comparison points of ``control_set``.

    The expected gap of step ``i`` is ``max_v E[H(v) - H(u_bar_i)]``, the condition satisfied by deterministic
    controls, the pathwise gap is ``E max_v [H(v) - H(u_bar_i)]``. ``error_estimate`` is the largest per-step standard
    error of the expected gap and the default tolerance is three times that estimate.
    """
    if adjoint.ensemble is not ensemble:
        ensemble.check_lineage(adjoint.ensemble)
    u_bar.check_grid(ensemble.grid)
    basis = ensemble.scenario.basis
    candidates = control_set.comparison_points()
    table = hamiltonian_table(basis, ensemble.states, adjoint.step_beta, candidates, cost)
    reference = hamiltonian(basis, ensemble.states[:, :-1, :], u_bar.values, adjoint.step_beta, cost).value
    differences = table - reference
    means = differences.mean(axis=1)
    best = np.argmax(means, axis=0)
    steps_range = np.arange(u_bar.n_steps)
    chosen = differences[best, :, steps_range]
    expected = np.maximum(means[best, steps_range], 0.0)
    _, standard_errors = mean_and_standard_error(chosen, axis=1)
    pathwise = np.maximum(differences.max(axis=0), 0.0)
    error_estimate = float(standard_errors.max()) if standard_errors.size else 0.0
    tolerance = 3.0 * error_estimate if tolerance is None else tolerance

    steps = [
        StepGap(i, float(expected[i]), float(standard_errors[i]), float(pathwise[:, i].max()),
                tuple(float(c) for c in candidates[best[i]]))
        for i in steps_range
    ]
    violations = [step for step in steps if step.expected_gap > tolerance]
    report = ViolationReport(
        steps, float(expected.max()), float(expected.mean()), float(pathwise.max()),
        float(pathwise.mean(axis=0).mean()), error_estimate, tolerance, violations,
    )
    logger.info('SMP verification: max expected gap %.3e (tolerance %.3e), %d violating steps',
                report.max_expected_gap, tolerance, len(violations))
    return report


def duality_residual(x_tilde: PathEnsemble, adjoint: AdjointEnsemble, direction: ControlProcess,
                     cost: CostSpec) -> Tuple[float, float]:
    """
    ``E<X~_T, h_x(X_T)> + E sum_i h <l_x(X_i, u_i), X~_i> + E sum_i h <beta_i, v_i>`` and its standard error, which
    vanishes for the exact adjoint of the scheme.
    """
    base = adjoint.ensemble
    base.check_lineage(x_tilde)
    direction.check_grid(base.grid)
    basis = base.scenario.basis
    h = base.grid.step
    running = cost.running_state_gradient(basis, base.states[:, :-1, :], base.control.values)
    terminal = cost.terminal_gradient(basis, base.terminal)
    pathwise = (
        np.einsum('pn,pn->p', x_tilde.terminal, terminal)
        + h * np.einsum('pin,pin->p', running, x_tilde.states[:, :-1, :])
        + h * np.einsum('pic,ic->p', adjoint.step_beta, direction.values)
    )
    mean, se = mean_and_standard_error(pathwise)
    return float(mean), float(se)
