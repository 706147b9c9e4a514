"""
Gateaux gradient of the cost for convex control sets: by adjoint, by first variation and by finite differences with
common random numbers.
"""
import logging
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from smplab.adjoint import AdjointEnsemble
from smplab.costs import CostSpec
from smplab.enums import HypothesisStatus
from smplab.forward import simulate_ensemble
from smplab.noise import NoiseBundle
from smplab.scenario import ControlProcess, Scenario, ValidationReport, running_costs
from smplab.utils import mean_and_standard_error


logger = logging.getLogger(__name__)


class Gradient(NamedTuple):
    """Gradient density ``g_i`` per step: ``dJ(u)[v] = sum_i h <g_i, v_i>``."""

    values: np.ndarray
    standard_errors: np.ndarray
    step: float

    def pair(self, direction: ControlProcess) -> float:
        return float(self.step * np.sum(self.values * direction.values))

    def norm(self) -> float:
        return float(np.sqrt(self.step * np.sum(self.values ** 2)))

    def error_estimate(self) -> float:
        return float(np.sqrt(self.step * np.sum(self.standard_errors ** 2)))


def _require_convex_case(validation: Optional[ValidationReport]) -> None:
    if validation is None:
        return
    failed = [check.code for check in validation if check.code.startswith('C.')
              and check.status in (HypothesisStatus.FAIL, HypothesisStatus.NOT_APPLICABLE)]
    if failed:
        raise ImproperlyConfigured('Convex case hypotheses are not satisfied: {}'.format(', '.join(failed)))


def gradient_adjoint(u_bar: ControlProcess, adjoint: AdjointEnsemble, cost: CostSpec,
                     validation: Optional[ValidationReport] = None) -> Gradient:
    """
    ``g_i = E[l_u(X_i, u_i)] - E[beta_i]``; ``-g`` is the derivative of the expected Hamiltonian in the control.
    """
    _require_convex_case(validation)
    ensemble = adjoint.ensemble
    u_bar.check_grid(ensemble.grid)
    l_u = cost.running_control_gradient(ensemble.scenario.basis, ensemble.states[:, :-1, :], u_bar.values)
    pathwise = np.broadcast_to(l_u, adjoint.step_beta.shape) - adjoint.step_beta
    values, standard_errors = mean_and_standard_error(pathwise, axis=0)
    return Gradient(values, standard_errors, ensemble.grid.step)


class FiniteDifference(NamedTuple):

    value: float
    noise_floor: float
    central_differences: List[float]
    extrapolations: List[float]
    accurate: bool


def _pathwise_cost(scenario: Scenario, cost: CostSpec, control: ControlProcess, noise: NoiseBundle) -> np.ndarray:
    return running_costs(scenario, cost, simulate_ensemble(scenario, control, noise=noise).states, control)


def gradient_fd(scenario: Scenario, cost: CostSpec, u_bar: ControlProcess, directions: Sequence[ControlProcess],
                thetas: Sequence[float] = (1e-1, 5e-2, 2.5e-2), accuracy: Optional[float] = None,
                noise: Optional[NoiseBundle] = None) -> List[FiniteDifference]:
    """
    Central differences ``(J(u + theta v) - J(u - theta v)) / (2 theta)`` with common random numbers, Richardson
    extrapolated pathwise over the ``theta`` ladder. The noise floor is the standard error of the last extrapolation.
    """
    thetas = [float(theta) for theta in thetas]
    if not thetas or any(theta <= 0 for theta in thetas):
        raise ValueError('Finite difference ladder needs positive step sizes.')
    noise = noise or NoiseBundle.for_scenario(scenario)
    results = []
    for direction in directions:
        direction.check_grid(scenario.grid)
        if not np.any(direction.values):
            results.append(FiniteDifference(0.0, 0.0, [0.0] * len(thetas), [0.0] * max(len(thetas) - 1, 0), True))
            continue
        central = []
        for theta in thetas:
            plus = _pathwise_cost(scenario, cost, u_bar + direction.scaled(theta), noise)
            minus = _pathwise_cost(scenario, cost, u_bar - direction.scaled(theta), noise)
            central.append((plus - minus) / (2.0 * theta))
        estimates = [central[0]]
        for j in range(1, len(thetas)):
            previous, current = thetas[j - 1] ** 2, thetas[j] ** 2
            estimates.append((previous * central[j] - current * central[j - 1]) / (previous - current))
        value, noise_floor = mean_and_standard_error(estimates[-1])
        accurate = accuracy is None or noise_floor <= accuracy
        if not accurate:
            logger.warning('Finite difference noise floor %.3e exceeds the requested accuracy %.3e', noise_floor,
                           accuracy)
        results.append(FiniteDifference(
            float(value), float(noise_floor), [float(np.mean(c)) for c in central],
            [float(np.mean(e)) for e in estimates[1:]], accurate,
        ))
    return results


def relative_l2_error(estimate: Sequence[float], reference: Sequence[float]) -> float:
    estimate, reference = np.asarray(estimate, dtype=float), np.asarray(reference, dtype=float)
    scale = np.linalg.norm(reference)
    return float(np.linalg.norm(estimate - reference) / max(scale, np.finfo(float).tiny))
