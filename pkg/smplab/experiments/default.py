import logging
from typing import Iterator, List, Optional

import numpy as np

from smplab.adjoint import NotLinearScenarioError, regularity_profile, solve_adjoint, solve_adjoint_exact_linear
from smplab.enums import ControlSetKind, HypothesisStatus, Verdict
from smplab.forward import first_variation, self_convergence, simulate_ensemble
from smplab.principle import (
    DivergenceError, duality_residual, gradient_adjoint, gradient_fd, optimize_msa, optimize_projected_gradient,
    relative_l2_error, spike_rate_study, verify_smp
)
from smplab.scenario import ControlProcess, Scenario, cost_evaluate, directional_derivative, validate_scenario
from smplab.spectral import build_basis
from smplab.utils import enum_slug, mean_and_standard_error

from .base import AbstractExperiment, SummaryLine, check


logger = logging.getLogger(__name__)


def mode_header(prefix: str, n_modes: int) -> List[str]:
    return ['{}_{}'.format(prefix, k) for k in range(n_modes)]


def modal_rows(values: np.ndarray, nodes: np.ndarray, n_paths: int) -> Iterator[list]:
    """Long rows ``(path, step, t, mode, value)`` of the first ``n_paths`` rows of ``values``."""
    for p in range(n_paths):
        for i, t in enumerate(nodes):
            for k, value in enumerate(values[p, i]):
                yield [p, i, t, k, value]


class AdjointMixin:

    def solve(self, control: ControlProcess, scenario: Optional[Scenario] = None):
        ensemble = simulate_ensemble(scenario or self.scenario, control)
        adjoint = solve_adjoint(
            ensemble, control, self.cost, self.regression, self.config['adjoint.picard_iterations']
        )
        return ensemble, adjoint

    def convex_case_validation(self):
        return validate_scenario(
            self.scenario, self.cost, convex_case=True, samples=self.config['validate.samples'],
            radius=self.config['validate.radius'],
        )


class SimulateExperiment(AbstractExperiment):

    name = 'Simulate'
    slug = 'simulate'

    def run(self):
        scenario, control = self.scenario, self.control
        ensemble = simulate_ensemble(scenario, control)
        nodes = ensemble.grid.nodes
        n_modes = scenario.basis.n_modes
        mean_path = ensemble.mean_path()
        self.writer.write_csv(
            'mean_path.csv', ['step', 't'] + mode_header('x', n_modes),
            ([i, nodes[i]] + list(mean_path[i]) for i in range(len(nodes)))
        )
        saved = min(self.config['simulate.saved_paths'], ensemble.n_paths)
        self.writer.write_csv(
            'paths.csv', ['path', 'step', 't', 'mode', 'coefficient'], modal_rows(ensemble.states, nodes, saved)
        )
        value, error = cost_evaluate(scenario, self.cost, ensemble, control)
        self.writer.write_csv('cost.csv', ['cost', 'standard_error'], [(value, error)])
        summary = [
            SummaryLine('cost', value),
            SummaryLine('cost_standard_error', error),
            SummaryLine('mean_sup_norm', ensemble.mean_sup_norm()[0]),
        ]
        levels = self.config['simulate.self_convergence_levels']
        if levels:
            report = self_convergence(scenario, control, levels)
            self.writer.write_csv(
                'self_convergence.csv', ['step', 'error', 'standard_error'],
                zip(report.steps, report.errors, report.standard_errors)
            )
            summary.append(SummaryLine('self_convergence_rate', report.rate))
        return summary


class AdjointExperiment(AdjointMixin, AbstractExperiment):

    name = 'Adjoint'
    slug = 'adjoint'

    def run(self):
        scenario, control = self.scenario, self.control
        ensemble, adjoint = self.solve(control)
        nodes = ensemble.grid.nodes
        saved = min(self.config['adjoint.saved_paths'], adjoint.n_paths)
        self.writer.write_csv(
            'adjoint_paths.csv', ['path', 'step', 't', 'mode', 'y'], modal_rows(adjoint.y, nodes, saved)
        )
        beta, beta_se = mean_and_standard_error(adjoint.beta, axis=0)
        self.writer.write_csv(
            'beta.csv', ['step', 't', 'side', 'beta', 'standard_error'],
            ([i, t, side, beta[i, s], beta_se[i, s]] for i, t in enumerate(nodes)
             for s, side in enumerate(('left', 'right')))
        )
        self.writer.write_csv(
            'regression.csv', ['step', 'condition_number', 'rank', 'n_features'],
            ([i] + list(diagnostics) for i, diagnostics in enumerate(adjoint.diagnostics))
        )
        direction = ControlProcess.constant(ensemble.grid, (1.0, 1.0))
        x_tilde = first_variation(scenario, ensemble, direction)
        residual, error = duality_residual(x_tilde, adjoint, direction, self.cost)
        summary = [
            SummaryLine('duality_residual', residual),
            SummaryLine('duality_residual_standard_error', error),
            SummaryLine('max_condition_number', max(d.condition_number for d in adjoint.diagnostics)),
        ]
        try:
            oracle = solve_adjoint_exact_linear(
                ensemble, control, self.cost, picard_iterations=self.config['adjoint.picard_iterations']
            )
        except NotLinearScenarioError:
            logger.info('Scenario is not linear, skipping the exact adjoint comparison')
        else:
            summary.append(check('oracle_relative_error', adjoint.relative_distance(oracle),
                                 upper=self.config['adjoint.oracle_tolerance']))
        return summary


class GradientCheckExperiment(AdjointMixin, AbstractExperiment):
    """
    Compares the adjoint gradient with the first variation derivative and with finite differences along indicator
    directions of consecutive time blocks, alternating the boundary side.
    """

    name = 'Gradient check'
    slug = 'grad-check'

    def directions(self) -> List[ControlProcess]:
        n_steps = self.scenario.n_steps
        n_directions = min(self.config['gradient.n_directions'], n_steps)
        bounds = np.linspace(0, n_steps, n_directions + 1).round().astype(int)
        directions = []
        for j in range(n_directions):
            values = np.zeros((n_steps, 2))
            values[bounds[j]:bounds[j + 1], j % 2] = 1.0
            directions.append(ControlProcess(values))
        return directions

    def run(self):
        scenario, control = self.scenario, self.control
        validation = self.convex_case_validation()
        ensemble, adjoint = self.solve(control)
        gradient = gradient_adjoint(control, adjoint, self.cost, validation)
        nodes = ensemble.grid.nodes
        self.writer.write_csv(
            'gradient.csv', ['step', 't', 'g_left', 'g_right', 'se_left', 'se_right'],
            ([i, nodes[i]] + list(gradient.values[i]) + list(gradient.standard_errors[i])
             for i in range(control.n_steps))
        )
        directions = self.directions()
        finite_differences = gradient_fd(
            scenario, self.cost, control, directions, self.config['gradient.theta_ladder'], noise=ensemble.noise
        )
        rows, adjoint_values, variation_values, fd_values = [], [], [], []
        for j, (direction, fd) in enumerate(zip(directions, finite_differences)):
            x_tilde = first_variation(scenario, ensemble, direction)
            derivative, derivative_error = directional_derivative(
                scenario, self.cost, ensemble.states, control, x_tilde.states, direction
            )
            adjoint_values.append(gradient.pair(direction))
            variation_values.append(derivative)
            fd_values.append(fd.value)
            rows.append((j, adjoint_values[-1], derivative, derivative_error, fd.value, fd.noise_floor))
        self.writer.write_csv(
            'grad_check.csv',
            ['direction', 'adjoint', 'first_variation', 'first_variation_se', 'finite_difference', 'noise_floor'],
            rows
        )
        return [
            SummaryLine('gradient_norm', gradient.norm()),
            check('adjoint_vs_finite_difference', relative_l2_error(adjoint_values, fd_values),
                  upper=self.config['gradient.tolerance']),
            check('first_variation_vs_finite_difference', relative_l2_error(variation_values, fd_values),
                  upper=self.config['gradient.tolerance']),
        ]


class SpikeRatesExperiment(AbstractExperiment):

    name = 'Spike rates'
    slug = 'spike-rates'
    required_keys = ('spike.t_bar', 'spike.v', 'spike.epsilon_ladder')

    def run(self):
        moments = (2, 4)
        report = spike_rate_study(
            self.scenario, self.cost, self.control, self.config['spike.t_bar'], self.config['spike.v'],
            self.config['spike.epsilon_ladder'], chunk_size=self.config['spike.chunk_size'], moments=moments,
            refinements=self.config['spike.refinements'], progress=self.progress,
        )
        self.writer.write_csv(
            'spike_rates.csv',
            ['epsilon', 'delta', 'delta_se', 'eta', 'eta_se', 'cost_increment', 'cost_increment_se']
            + ['first_variation_moment_{}'.format(p) for p in moments],
            (
                [eps, report.delta_values[j], report.delta_errors[j], report.eta_values[j], report.eta_errors[j],
                 report.cost_increments[j], report.cost_increment_errors[j]]
                + [report.first_variation_moments[p][j] for p in moments]
                for j, eps in enumerate(report.epsilons)
            )
        )
        summary = [
            check('delta_slope', report.delta_slope, lower=self.config['spike.min_delta_slope']),
            SummaryLine('delta_slope_standard_error', report.delta_fit.slope_stderr),
        ]
        if report.eta_fit is not None:
            summary.append(SummaryLine('eta_slope', report.eta_slope))
        if report.noisy_ladder:
            summary.append(SummaryLine('noisy_ladder', 'Monte-Carlo error exceeds ladder gaps'))
        for key, value in sorted(report.refinement_deltas.items()):
            summary.append(SummaryLine('refinement_{}'.format(key), value))
        return summary


class OptimizeExperiment(AdjointMixin, AbstractExperiment):
    """Projected gradient on box control sets, successive approximations on finite ones."""

    name = 'Optimize'
    slug = 'optimize'

    def write_history(self, history):
        self.writer.write_csv(
            'history.csv',
            ['iteration', 'cost', 'cost_error', 'residual', 'step_size', 'accepted', 'changed_steps'],
            history
        )

    @property
    def method(self) -> str:
        return 'projected-gradient' if self.scenario.control_set.kind == ControlSetKind.BOX else 'msa'

    def optimize(self):
        if self.method == 'projected-gradient':
            return optimize_projected_gradient(
                self.scenario, self.cost, self.control, step_size=self.config['optimizer.step_size'],
                max_iters=self.config['optimizer.max_iters'], tolerance=self.config['optimizer.tolerance'],
                regression=self.regression, acceptance_slack=self.config['optimizer.acceptance_slack'],
                validation=self.convex_case_validation(),
            )
        return optimize_msa(
            self.scenario, self.cost, self.control, max_iters=self.config['optimizer.max_iters'],
            damping=self.config['optimizer.damping'], tolerance=self.config['verify.tolerance'],
            regression=self.regression,
        )

    def run(self):
        try:
            result = self.optimize()
        except DivergenceError as ex:
            self.write_history(ex.history)
            raise
        self.write_history(result.history)
        nodes = self.scenario.grid.nodes
        self.writer.write_csv(
            'control.csv', ['step', 't', 'u_left', 'u_right'],
            ([i, nodes[i]] + list(result.control.values[i]) for i in range(result.control.n_steps))
        )
        summary = [
            SummaryLine('method', self.method),
            SummaryLine('cost', result.cost),
            SummaryLine('iterations', len([record for record in result.history if record.accepted])),
            SummaryLine('converged', 'yes' if result.converged else 'no',
                        Verdict.PASS if result.converged else Verdict.FAIL),
        ]
        if result.cycling:
            summary.append(SummaryLine('cycling', 'control sequence repeated'))
        return summary


class VerifySMPExperiment(AdjointMixin, AbstractExperiment):

    name = 'Verify maximum principle'
    slug = 'verify-smp'

    def run(self):
        control = self.control
        ensemble, adjoint = self.solve(control)
        report = verify_smp(
            ensemble, adjoint, control, self.scenario.control_set, self.cost, self.config['verify.tolerance']
        )
        nodes = ensemble.grid.nodes
        self.writer.write_csv(
            'smp_gaps.csv',
            ['step', 't', 'expected_gap', 'standard_error', 'pathwise_max_gap', 'argmax_left', 'argmax_right'],
            ([gap.step, nodes[gap.step], gap.expected_gap, gap.standard_error, gap.pathwise_max_gap] + list(gap.argmax)
             for gap in report.steps)
        )
        threshold = self.config['verify.tolerance']
        if threshold is None:
            threshold = self.config['verify.gap_factor'] * report.error_estimate
        return [
            check('max_expected_gap', report.max_expected_gap, upper=threshold),
            SummaryLine('mean_expected_gap', report.mean_expected_gap),
            SummaryLine('max_pathwise_gap', report.max_pathwise_gap),
            SummaryLine('error_estimate', report.error_estimate),
            SummaryLine('violating_steps', len(report.violations)),
        ]


class RegularityExperiment(AdjointMixin, AbstractExperiment):
    """Fits the growth of ``E|beta|`` near the horizon and repeats the fit with twice the modes."""

    name = 'Adjoint regularity'
    slug = 'regularity'

    def profile(self, scenario: Scenario):
        _, adjoint = self.solve(self.control, scenario)
        return regularity_profile(adjoint, window=self.config['regularity.window'],
                                  min_nodes=self.config['regularity.min_nodes'])

    def run(self):
        profile = self.profile(self.scenario)
        self.writer.write_csv(
            'regularity.csv', ['time_to_horizon', 'mean_norm'], zip(profile.times_to_horizon, profile.mean_norms)
        )
        summary = [
            check('regularity_slope', profile.slope, lower=self.config['regularity.slope_min'],
                  upper=self.config['regularity.slope_max']),
            SummaryLine('regularity_slope_standard_error', profile.slope_stderr),
            SummaryLine('blowup_exponent', profile.blowup_exponent),
            SummaryLine('fitted_nodes', profile.n_fitted),
        ]
        if self.config['regularity.refine_modes']:
            basis = self.scenario.basis
            refined = self.profile(
                self.scenario.replace(basis=build_basis(2 * basis.n_modes, basis.lam, 2 * basis.grid_size))
            )
            summary.append(SummaryLine('regularity_slope_n_refinement_delta', abs(refined.slope - profile.slope)))
        return summary


class ValidateExperiment(AbstractExperiment):

    name = 'Validate'
    slug = 'validate'

    verdicts = {
        HypothesisStatus.STRUCTURAL_PASS: Verdict.PASS,
        HypothesisStatus.SAMPLED_PASS: Verdict.PASS,
        HypothesisStatus.FAIL: Verdict.FAIL,
        HypothesisStatus.NOT_APPLICABLE: Verdict.INFO,
    }

    def run(self):
        report = validate_scenario(
            self.scenario, self.cost, convex_case=self.config['validate.convex_case'],
            samples=self.config['validate.samples'], radius=self.config['validate.radius'],
        )
        self.writer.write_csv(
            'validation.csv', ['code', 'status', 'witness_left', 'witness_right', 'detail'],
            ([hypothesis.code, enum_slug(hypothesis.status)] + list(hypothesis.witness or ('', ''))
             + ['"{}"'.format(hypothesis.detail.replace('"', "'"))] for hypothesis in report)
        )
        return [
            SummaryLine(hypothesis.code, hypothesis.detail, self.verdicts[hypothesis.status])
            for hypothesis in report
        ]


__all__ = (
    'AdjointExperiment', 'GradientCheckExperiment', 'OptimizeExperiment', 'RegularityExperiment',
    'SimulateExperiment', 'SpikeRatesExperiment', 'ValidateExperiment', 'VerifySMPExperiment',
)
