from smplab.coefficients import build_coefficient
from smplab.costs import CostSpec, build_cost_term
from smplab.scenario import ControlSet, Scenario
from smplab.spectral import build_basis


def make_scenario(n_modes=8, horizon=1.0, n_steps=32, reaction=('linear', {'slope': 0.0}), noise_gain=None,
                  control_set=None, boundary_noise=(0.0, 0.0), initial_state=(1.0,), n_paths=1, seed=7, lam=1.0):
    return Scenario(
        build_basis(n_modes, lam), horizon, n_steps, build_coefficient(*reaction),
        control_set or ControlSet.box((-1.0, -1.0), (1.0, 1.0)),
        noise_gain=build_coefficient(*noise_gain) if noise_gain else None,
        boundary_noise=boundary_noise, initial_state=initial_state, n_paths=n_paths, seed=seed,
    )


def make_cost(running=(('quadratic-tracking', {}),), terminal=(('quadratic-tracking', {}),)):
    return CostSpec(
        tuple(build_cost_term(slug, params) for slug, params in running),
        tuple(build_cost_term(slug, params) for slug, params in terminal),
    )


def lq_cost(control_weight=0.1):
    return make_cost(
        running=(('quadratic-tracking', {'target': 0.5}), ('control-energy', {'weight': control_weight})),
        terminal=(('quadratic-tracking', {'target': 0.5}),),
    )
