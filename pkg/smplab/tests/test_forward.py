import numpy as np
from django.test import TestCase
from numpy.testing import assert_allclose, assert_array_equal

from germanium.tools import assert_equal, assert_false, assert_raises, assert_true

from smplab.forward import (
    BlowUpError, first_variation, first_variation_path, remainder, remainder_path, self_convergence,
    simulate_ensemble, simulate_path
)
from smplab.noise import LineageError, NoiseBundle
from smplab.scenario import ControlProcess

from .utils import make_scenario


class TestSimulateEnsemble(TestCase):

    def test_free_mode_decays_with_its_eigenvalue(self):
        scenario = make_scenario(initial_state=(0.0, 1.0))
        control = ControlProcess.constant(scenario.grid, 0.0)
        ensemble = simulate_ensemble(scenario, control)
        assert_equal(ensemble.states.shape, (1, 33, 8))
        assert_allclose(ensemble.states[0, :, 1], np.exp(-np.pi ** 2 * scenario.grid.nodes), rtol=1e-12)
        assert_allclose(ensemble.states[0, :, [0, 2, 3]], 0.0, atol=1e-15)

    def test_boundary_flux_feeds_the_mean(self):
        scenario = make_scenario(initial_state=())
        ensemble = simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, (0.0, 1.0)))
        assert_allclose(ensemble.states[0, :, 0], scenario.grid.nodes, atol=1e-14)
        ensemble = simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, (1.0, 0.0)))
        assert_allclose(ensemble.states[0, :, 0], -scenario.grid.nodes, atol=1e-14)

    def test_states_are_read_only(self):
        scenario = make_scenario()
        ensemble = simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, 0.0))
        assert_false(ensemble.states.flags.writeable)
        assert_equal(ensemble.mean_sup_norm(), (ensemble.sup_norms()[0], 0.0))
        assert_array_equal(ensemble.mean_path(), ensemble.states[0])

    def test_single_path_matches_ensemble_row(self):
        scenario = make_scenario(boundary_noise=(0.5, 0.2), n_paths=6,
                                 reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}))
        control = ControlProcess.constant(scenario.grid, (0.3, -0.3))
        ensemble = simulate_ensemble(scenario, control)
        path = simulate_path(scenario, control, ensemble.noise, path=4)
        assert_equal(path.path, 4)
        assert_allclose(path.states, ensemble.states[4], rtol=1e-12, atol=1e-14)
        assert_allclose(path.sup_norm(), ensemble.sup_norms()[4])

    def test_blow_up_is_reported(self):
        scenario = make_scenario(reaction=('linear', {'slope': 1e12}), n_steps=64)
        with np.errstate(over='ignore', invalid='ignore'):
            with assert_raises(BlowUpError) as raised:
                simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, 0.0))
        assert_true(raised.exception.step > 1)
        assert_equal(raised.exception.path, 0)

    def test_mismatching_inputs_are_rejected(self):
        scenario = make_scenario()
        with assert_raises(LineageError):
            simulate_ensemble(scenario, ControlProcess(np.zeros((16, 2))))
        noise = NoiseBundle(scenario.seed, [0], scenario.horizon, 16, scenario.basis.n_modes)
        with assert_raises(LineageError):
            simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, 0.0), noise=noise)


class TestFirstVariation(TestCase):

    def test_linear_scenario_variation_is_the_exact_difference(self):
        scenario = make_scenario(reaction=('affine', {'slope': -0.5, 'offset': 0.2}), boundary_noise=(0.4, 0.4),
                                 n_paths=5)
        control = ControlProcess.constant(scenario.grid, (0.2, 0.1))
        direction = ControlProcess(np.linspace(-1.0, 1.0, 64).reshape(32, 2))
        base = simulate_ensemble(scenario, control)
        shifted = simulate_ensemble(scenario, control + direction)
        variation = first_variation(scenario, base, direction)
        assert_allclose(variation.states, shifted.states - base.states, atol=1e-12)
        assert_allclose(remainder(shifted, base, variation).states, 0.0, atol=1e-12)

    def test_path_variation_matches_ensemble_row(self):
        scenario = make_scenario(reaction=('affine', {'slope': -0.5, 'offset': 0.2}), boundary_noise=(0.4, 0.4),
                                 n_paths=4)
        control = ControlProcess.constant(scenario.grid, (0.2, 0.1))
        direction = ControlProcess.constant(scenario.grid, (1.0, -1.0))
        base = simulate_ensemble(scenario, control)
        shifted = simulate_ensemble(scenario, control + direction)
        variation = first_variation(scenario, base, direction)

        path = first_variation_path(scenario, base.path(2), direction, base.path(2).noise)
        assert_equal(path.path, 2)
        assert_allclose(path.states, variation.states[2], atol=1e-14)
        eta = remainder_path(shifted.path(2), base.path(2), path)
        assert_allclose(eta.states, 0.0, atol=1e-12)
        with assert_raises(LineageError):
            remainder_path(shifted.path(1), base.path(2), path)

    def test_remainder_is_second_order(self):
        scenario = make_scenario(reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}),
                                 boundary_noise=(0.3, 0.0), n_paths=4)
        control = ControlProcess.constant(scenario.grid, (0.5, -0.5))
        direction = ControlProcess.constant(scenario.grid, (1.0, 1.0))
        base = simulate_ensemble(scenario, control)
        variation = first_variation(scenario, base, direction)
        sizes = []
        for epsilon in (1e-2, 5e-3):
            perturbed = simulate_ensemble(scenario, control + direction.scaled(epsilon))
            tangent = first_variation(scenario, base, direction.scaled(epsilon))
            assert_allclose(tangent.states, epsilon * variation.states, rtol=1e-10, atol=1e-15)
            sizes.append(remainder(perturbed, base, tangent).mean_sup_norm()[0])
        assert_true(3.0 < sizes[0] / sizes[1] < 5.0)

    def test_remainder_needs_common_noise(self):
        scenario = make_scenario(boundary_noise=(0.3, 0.3), n_paths=2)
        control = ControlProcess.constant(scenario.grid, 0.0)
        base = simulate_ensemble(scenario, control)
        other = simulate_ensemble(scenario.replace(seed=8), control)
        with assert_raises(LineageError):
            remainder(other, base, first_variation(scenario, base, control))


class TestSelfConvergence(TestCase):

    def test_deterministic_nonlinear_scheme_converges(self):
        scenario = make_scenario(n_modes=4, reaction=('tanh-saturated', {'amplitude': 1.0, 'scale': 0.5}),
                                 initial_state=(0.0, 1.0, 0.5))
        report = self_convergence(scenario, ControlProcess.constant(scenario.grid, (0.5, -0.5)), levels=3)
        assert_equal(len(report.steps), 3)
        assert_allclose(report.steps, [1 / 32, 1 / 64, 1 / 128])
        assert_true(all(earlier > later for earlier, later in zip(report.errors, report.errors[1:])))
        assert_allclose(report.standard_errors, 0.0)
        assert_true(report.rate > 0.5)


class TestBoundaryNoiseMoments(TestCase):

    def test_second_moments_follow_the_ito_isometry(self):
        scenario = make_scenario(boundary_noise=(1.0, 0.0), initial_state=(), n_paths=4000)
        ensemble = simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, 0.0))
        mu = -(np.pi * np.arange(1, 8)) ** 2
        for step in (8, 16, 32):
            t = scenario.grid.nodes[step]
            exact = np.append(t, 2.0 * np.expm1(2.0 * mu * t) / (2.0 * mu))
            squares = ensemble.states[:, step, :] ** 2
            standard_errors = squares.std(axis=0, ddof=1) / np.sqrt(ensemble.n_paths)
            assert_true(np.all(np.abs(squares.mean(axis=0) - exact) <= 5.0 * standard_errors))

    def test_mean_mode_is_a_martingale_fed_by_the_boundary_flux(self):
        scenario = make_scenario(boundary_noise=(0.3, 0.3), initial_state=(0.5,), n_paths=2000)
        nodes = scenario.grid.nodes
        for control, drift in (((0.0, 0.0), 0.0), ((1.0, 0.0), -1.0)):
            ensemble = simulate_ensemble(scenario, ControlProcess.constant(scenario.grid, control))
            mass = ensemble.states[:, :, 0]
            standard_errors = mass.std(axis=0, ddof=1) / np.sqrt(ensemble.n_paths)
            deviation = np.abs(mass.mean(axis=0) - 0.5 - drift * nodes)
            assert_allclose(deviation[0], 0.0, atol=1e-14)
            assert_true(np.all(deviation[1:] <= 5.0 * standard_errors[1:]))
            increment = (mass[:, -1] - mass[:, 16]) * (mass[:, 16] - mass[:, 0])
            assert_true(abs(increment.mean()) <= 5.0 * increment.std(ddof=1) / np.sqrt(ensemble.n_paths))
