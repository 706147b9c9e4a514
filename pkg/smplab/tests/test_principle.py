import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import TestCase
from numpy.testing import assert_allclose, assert_array_equal

from germanium.tools import assert_equal, assert_false, assert_is_none, assert_raises, assert_true

from smplab.adjoint import solve_adjoint
from smplab.forward import first_variation, simulate_ensemble
from smplab.principle import (
    DivergenceError, Gradient, SpikeAlignmentError, SpikeSpec, duality_residual, gradient_adjoint, gradient_fd,
    hamiltonian, optimize_msa, optimize_projected_gradient, relative_l2_error, spike_control, spike_rate_study,
    spike_steps, variational_residual, verify_smp
)
from smplab.regression import RegressionBasis
from smplab.scenario import ControlProcess, ControlSet, cost_evaluate, directional_derivative, validate_scenario

from .utils import lq_cost, make_cost, make_scenario


NO_REGRESSORS = RegressionBasis(n_regressors=0)


def mass_cost():
    return make_cost(running=(('control-energy', {'weight': 0.4}),), terminal=(('linear', {'state': (1.0,)}),))


def block_directions(grid, n_blocks=4):
    directions = []
    block = grid.n_steps // n_blocks
    for index in range(n_blocks):
        values = np.zeros((grid.n_steps, 2))
        values[index * block:(index + 1) * block, index % 2] = 1.0
        directions.append(ControlProcess(values))
    return directions


class TestSpike(TestCase):

    @classmethod
    def setUpTestData(cls):
        cls.scenario = make_scenario()
        cls.grid = cls.scenario.grid

    def test_aligned_window(self):
        assert_equal(spike_steps(self.grid, SpikeSpec(0.25, 0.125, (1.0, 1.0))), range(8, 12))
        u_bar = ControlProcess.constant(self.grid, 0.0, self.scenario.control_set)
        spiked = spike_control(u_bar, SpikeSpec(0.25, 0.125, (1.0, -1.0)), self.grid, self.scenario.control_set)
        assert_array_equal(spiked.values[8:12], [[1.0, -1.0]] * 4)
        assert_array_equal(spiked.values[:8], 0.0)
        assert_array_equal(spiked.values[12:], 0.0)
        assert_true(spiked.admissible)

    def test_misaligned_window(self):
        spec = SpikeSpec(0.26, 0.125, (1.0, 1.0))
        with assert_raises(SpikeAlignmentError):
            spike_steps(self.grid, spec)
        assert_equal(spike_steps(self.grid, spec, strict=False), range(9, 12))

    def test_invalid_windows(self):
        u_bar = ControlProcess.constant(self.grid, 0.0)
        with assert_raises(ValueError):
            spike_steps(self.grid, SpikeSpec(0.9, 0.25, (1.0, 1.0)))
        with assert_raises(ValueError):
            spike_steps(self.grid, SpikeSpec(0.5, 0.0, (1.0, 1.0)))
        with assert_raises(ValueError):
            spike_control(u_bar, SpikeSpec(0.5, 0.125, (2.0, 0.0)), self.grid, self.scenario.control_set)

    def test_linear_rates(self):
        scenario = make_scenario(n_steps=256, initial_state=())
        u_bar = ControlProcess.constant(scenario.grid, 0.0)
        report = spike_rate_study(scenario, lq_cost(), u_bar, 0.5, (1.0, 1.0), (1 / 8, 1 / 16, 1 / 32))
        assert_true(0.5 < report.delta_slope < 1.0)
        assert_is_none(report.eta_slope)
        assert_false(report.noisy_ladder)
        assert_equal(report.refinement_deltas, {})
        assert_equal(sorted(report.first_variation_moments), [2, 4])

    def test_tanh_remainder_rate_doubles_the_spike_rate(self):
        scenario = make_scenario(n_modes=64, n_steps=4096, initial_state=(),
                                 reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}))
        u_bar = ControlProcess.constant(scenario.grid, 0.0)
        ladder = tuple(2.0 ** -k for k in range(4, 10))
        report = spike_rate_study(scenario, lq_cost(), u_bar, 0.25, (1.0, 1.0), ladder)
        assert_true(report.delta_slope > 0.0)
        assert_true(report.eta_slope >= 2.0 * report.delta_slope - 0.1)

    def test_chunks_share_the_noise(self):
        scenario = make_scenario(n_steps=64, reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}),
                                 boundary_noise=(0.3, 0.3), n_paths=6)
        u_bar = ControlProcess.constant(scenario.grid, 0.0)
        args = (scenario, lq_cost(), u_bar, 0.25, (1.0, 1.0), (1 / 4, 1 / 8))
        whole = spike_rate_study(*args)
        chunked = spike_rate_study(*args, chunk_size=4)
        assert_allclose(chunked.delta_values, whole.delta_values, rtol=1e-12)
        assert_allclose(chunked.eta_values, whole.eta_values, rtol=1e-12)
        assert_allclose(chunked.cost_increments, whole.cost_increments, rtol=1e-10, atol=1e-14)

    def test_ladder_must_decrease(self):
        u_bar = ControlProcess.constant(self.grid, 0.0)
        with assert_raises(ValueError):
            spike_rate_study(self.scenario, lq_cost(), u_bar, 0.25, (1.0, 1.0), (1 / 16, 1 / 8))


class TestAdjointIdentities(TestCase):

    @classmethod
    def setUpTestData(cls):
        cls.scenario = make_scenario(reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}), n_paths=10,
                                     initial_state=(0.2, 0.5))
        cls.control = ControlProcess.constant(cls.scenario.grid, (0.4, -0.2), cls.scenario.control_set)
        cls.cost = lq_cost()
        cls.ensemble = simulate_ensemble(cls.scenario, cls.control)
        cls.adjoint = solve_adjoint(cls.ensemble, cls.control, cls.cost, NO_REGRESSORS, picard_iterations=0)

    def test_duality_residual_vanishes(self):
        for direction in block_directions(self.scenario.grid):
            x_tilde = first_variation(self.scenario, self.ensemble, direction)
            residual, standard_error = duality_residual(x_tilde, self.adjoint, direction, self.cost)
            assert_allclose(residual, 0.0, atol=1e-12)
            assert_allclose(standard_error, 0.0, atol=1e-12)

    def test_adjoint_gradient_pairs_to_the_directional_derivative(self):
        gradient = gradient_adjoint(self.control, self.adjoint, self.cost)
        assert_equal(gradient.values.shape, (32, 2))
        assert_allclose(gradient.error_estimate(), 0.0, atol=1e-14)
        for direction in block_directions(self.scenario.grid):
            x_tilde = first_variation(self.scenario, self.ensemble, direction)
            derivative, _ = directional_derivative(self.scenario, self.cost, self.ensemble.states, self.control,
                                                   x_tilde.states, direction)
            assert_allclose(gradient.pair(direction), derivative, rtol=1e-10, atol=1e-14)

    def test_adjoint_gradient_matches_finite_differences(self):
        directions = block_directions(self.scenario.grid)
        gradient = gradient_adjoint(self.control, self.adjoint, self.cost)
        differences = gradient_fd(self.scenario, self.cost, self.control, directions, accuracy=1e-8)
        assert_true(all(difference.accurate for difference in differences))
        assert_true(relative_l2_error([gradient.pair(d) for d in directions],
                                      [difference.value for difference in differences]) < 1e-4)

    def test_gradient_needs_the_convex_case(self):
        scenario = self.scenario.replace(control_set=ControlSet.product((-1.0, 0.0, 1.0)))
        validation = validate_scenario(scenario, self.cost, convex_case=True, samples=2000)
        with assert_raises(ImproperlyConfigured):
            gradient_adjoint(self.control, self.adjoint, self.cost, validation)
        gradient_adjoint(self.control, self.adjoint, self.cost,
                         validate_scenario(self.scenario, self.cost, convex_case=True, samples=2000))

    def test_zero_direction_has_zero_difference(self):
        [difference] = gradient_fd(self.scenario, self.cost, self.control,
                                   [ControlProcess(np.zeros((32, 2)))], thetas=(0.1, 0.05))
        assert_equal(difference.value, 0.0)
        with assert_raises(ValueError):
            gradient_fd(self.scenario, self.cost, self.control, [], thetas=(0.1, -0.05))

    def test_hamiltonian(self):
        value = hamiltonian(self.scenario.basis, np.zeros(8), np.array([1.0, 2.0]), np.array([0.5, -1.0]),
                            make_cost(running=(('control-energy', {'weight': 2.0}),), terminal=()))
        assert_allclose(value.boundary_term, -1.5)
        assert_allclose(value.running_cost_term, 10.0)
        assert_allclose(value.value, -11.5)


class TestNoisyGradient(TestCase):

    def test_linear_quadratic_gradient_matches_finite_differences(self):
        scenario = make_scenario(reaction=('linear', {'slope': -0.5}), boundary_noise=(0.3, 0.3), n_paths=2000)
        control = ControlProcess.constant(scenario.grid, (0.2, 0.2), scenario.control_set)
        cost = lq_cost()
        ensemble = simulate_ensemble(scenario, control)
        gradient = gradient_adjoint(control, solve_adjoint(ensemble, control, cost, picard_iterations=0), cost)
        directions = block_directions(scenario.grid)
        differences = gradient_fd(scenario, cost, control, directions)
        assert_true(relative_l2_error([gradient.pair(d) for d in directions],
                                      [difference.value for difference in differences]) < 0.05)


class TestVerifySMP(TestCase):

    def test_report_of_a_constant_control(self):
        scenario = make_scenario(control_set=ControlSet.product((-1.0, 0.0, 1.0)), n_paths=10)
        cost = lq_cost()
        control = ControlProcess.constant(scenario.grid, 0.0, scenario.control_set)
        ensemble = simulate_ensemble(scenario, control)
        adjoint = solve_adjoint(ensemble, control, cost, NO_REGRESSORS)
        report = verify_smp(ensemble, adjoint, control, scenario.control_set, cost)
        assert_equal(len(report.steps), 32)
        assert_allclose(report.error_estimate, 0.0, atol=1e-12)
        assert_true(report.max_expected_gap >= 0.0)
        assert_true(report.max_pathwise_gap >= report.max_expected_gap)

    def test_gap_vanishes_at_the_pointwise_maximizer(self):
        scenario = make_scenario(control_set=ControlSet.product((-1.0, 0.0, 1.0)), n_paths=10)
        cost = mass_cost()
        u0 = ControlProcess.constant(scenario.grid, 0.0, scenario.control_set)
        result = optimize_msa(scenario, cost, u0, max_iters=20, regression=NO_REGRESSORS)
        assert_true(result.converged)
        assert_array_equal(result.control.values, [[1.0, -1.0]] * 32)
        ensemble = simulate_ensemble(scenario, result.control)
        adjoint = solve_adjoint(ensemble, result.control, cost, NO_REGRESSORS)
        report = verify_smp(ensemble, adjoint, result.control, scenario.control_set, cost)
        assert_true(report.passed)
        assert_equal(report.max_expected_gap, 0.0)

        values = result.control.values.copy()
        values[5] = 0.0
        flipped = ControlProcess.tagged(values, scenario.control_set)
        flipped_ensemble = simulate_ensemble(scenario, flipped)
        flipped_cost, _ = cost_evaluate(scenario, cost, flipped_ensemble, flipped)
        assert_true(flipped_cost > result.cost)
        flipped_report = verify_smp(flipped_ensemble, solve_adjoint(flipped_ensemble, flipped, cost, NO_REGRESSORS),
                                    flipped, scenario.control_set, cost)
        gap = flipped_report.steps[5]
        assert_true(gap.expected_gap > 0.0)
        assert_equal(gap.argmax, (1.0, -1.0))
        assert_allclose(flipped_cost - result.cost, scenario.grid.step * gap.expected_gap, rtol=1e-10)
        assert_equal([step.step for step in flipped_report.violations], [5])

    def test_damped_msa_converges_only_when_no_step_would_change(self):
        scenario = make_scenario(control_set=ControlSet.product((-1.0, 0.0, 1.0)), n_paths=10)
        cost = mass_cost()
        u0 = ControlProcess.constant(scenario.grid, 0.0, scenario.control_set)

        held = optimize_msa(scenario, cost, u0, max_iters=3, damping=0.99, regression=NO_REGRESSORS)
        assert_false(held.converged)
        assert_equal(held.history[0].changed_steps, 32)
        ensemble = simulate_ensemble(scenario, held.control)
        adjoint = solve_adjoint(ensemble, held.control, cost, NO_REGRESSORS)
        assert_false(verify_smp(ensemble, adjoint, held.control, scenario.control_set, cost).passed)

        damped = optimize_msa(scenario, cost, u0, max_iters=50, damping=0.5, regression=NO_REGRESSORS)
        assert_true(damped.converged)
        ensemble = simulate_ensemble(scenario, damped.control)
        adjoint = solve_adjoint(ensemble, damped.control, cost, NO_REGRESSORS)
        assert_true(verify_smp(ensemble, adjoint, damped.control, scenario.control_set, cost).passed)



class TestOptimizers(TestCase):

    def test_variational_residual(self):
        gradient = Gradient(np.ones((4, 2)), np.zeros((4, 2)), 0.25)
        vertices = ControlSet.box((-1.0, -1.0), (1.0, 1.0)).vertices
        assert_allclose(variational_residual(gradient, ControlProcess(np.zeros((4, 2))), vertices), 2.0)
        assert_allclose(variational_residual(gradient, ControlProcess(-np.ones((4, 2))), vertices), 0.0)

    def test_projected_gradient_converges(self):
        scenario = make_scenario(n_paths=10)
        cost = lq_cost(control_weight=1.0)
        u0 = ControlProcess.constant(scenario.grid, 0.0)
        result = optimize_projected_gradient(scenario, cost, u0, max_iters=200, regression=NO_REGRESSORS)
        assert_true(result.converged)
        assert_false(result.cycling)
        assert_true(result.control.admissible)
        accepted = [record.cost for record in result.history if record.accepted]
        assert_true(all(later <= earlier for earlier, later in zip(accepted, accepted[1:])))
        assert_true(result.cost <= result.history[0].cost)
        assert_equal(result.cost, accepted[-1])

    def test_projected_gradient_needs_the_convex_case(self):
        scenario = make_scenario(n_paths=10)
        cost = make_cost(running=(('mean-square', {}),))
        u0 = ControlProcess.constant(scenario.grid, 0.0)
        with assert_raises(ImproperlyConfigured):
            optimize_projected_gradient(scenario, cost, u0, regression=NO_REGRESSORS)
        validation = validate_scenario(scenario, lq_cost(), convex_case=True, samples=2000)
        result = optimize_projected_gradient(scenario, lq_cost(), u0, max_iters=2, regression=NO_REGRESSORS,
                                             validation=validation)
        assert_true(result.history)

    def test_projected_gradient_detects_divergence(self):
        scenario = make_scenario(control_set=ControlSet.box((-100.0, -100.0), (100.0, 100.0)), n_paths=10)
        cost = make_cost(running=(('control-energy', {}),), terminal=())
        u0 = ControlProcess.constant(scenario.grid, 1.0)
        with assert_raises(DivergenceError) as raised:
            optimize_projected_gradient(scenario, cost, u0, step_size=1.1, acceptance_slack=float('inf'),
                                        regression=NO_REGRESSORS)
        costs = [record.cost for record in raised.exception.history]
        assert_equal(len(costs), 6)
        assert_allclose(costs, 2.0 * 1.44 ** np.arange(6), rtol=1e-10)

    def test_optimizers_need_their_control_set(self):
        box = make_scenario(n_paths=10)
        finite = make_scenario(control_set=ControlSet.product((-1.0, 1.0)), n_paths=10)
        u0 = ControlProcess.constant(box.grid, 0.0)
        with assert_raises(ImproperlyConfigured):
            optimize_msa(box, lq_cost(), u0)
        with assert_raises(ImproperlyConfigured):
            optimize_projected_gradient(finite, lq_cost(), u0)
        with assert_raises(ValueError):
            optimize_msa(finite, lq_cost(), u0, damping=1.0)

    def test_msa_with_a_single_point(self):
        scenario = make_scenario(control_set=ControlSet.finite([(0.5, 0.5)]), n_paths=10)
        result = optimize_msa(scenario, lq_cost(), ControlProcess.constant(scenario.grid, 0.0))
        assert_true(result.converged)
        assert_equal(len(result.history), 1)
        assert_array_equal(result.control.values, 0.5)

    def test_msa_returns_the_best_iterate(self):
        scenario = make_scenario(control_set=ControlSet.product((-1.0, 0.0, 1.0)), n_paths=10)
        u0 = ControlProcess.constant(scenario.grid, 1.0)
        result = optimize_msa(scenario, lq_cost(), u0, max_iters=10, regression=NO_REGRESSORS)
        assert_true(result.history)
        assert_true(result.cost <= min(record.cost for record in result.history) + 1e-12)
        assert_true(np.all(scenario.control_set.contains(result.control.values)))

    def test_damped_msa_is_reproducible(self):
        scenario = make_scenario(control_set=ControlSet.product((-1.0, 0.0, 1.0)), n_paths=10)
        u0 = ControlProcess.constant(scenario.grid, 1.0)
        first, second = (
            optimize_msa(scenario, lq_cost(), u0, max_iters=5, damping=0.5, regression=NO_REGRESSORS)
            for _ in range(2)
        )
        assert_equal(first.history, second.history)
        assert_equal(first.control, second.control)
