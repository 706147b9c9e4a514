import logging
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from smplab.coefficients import AbstractCoefficient
from smplab.costs import AbstractCostTerm, CostSpec
from smplab.enums import ControlSetKind, HypothesisStatus
from smplab.noise import LineageError
from smplab.spectral import SpectralBasis, neumann_maps, smoothing_exponent
from smplab.utils import keyed_rng, mean_and_standard_error


logger = logging.getLogger(__name__)

# Stream keys of sampled audits, disjoint from the (step, kind) keys of the noise.
AUDIT_STREAM = 2 ** 32


class TimeGrid:
    """Uniform grid ``t_i = i * T / n_steps`` of ``[0, T]``."""

    def __init__(self, horizon: float, n_steps: int):
        if not horizon > 0:
            raise ImproperlyConfigured(f'Horizon must be positive, got {horizon!r}.')
        if int(n_steps) != n_steps or n_steps < 1:
            raise ImproperlyConfigured(f'Number of steps must be a positive integer, got {n_steps!r}.')
        self.horizon = float(horizon)
        self.n_steps = int(n_steps)

    def __repr__(self):
        return f'TimeGrid(horizon={self.horizon!r}, n_steps={self.n_steps})'

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and (self.horizon, self.n_steps) == (other.horizon, other.n_steps)

    def __hash__(self):
        return hash((self.horizon, self.n_steps))

    @property
    def step(self) -> float:
        return self.horizon / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.step

    def refined(self, factor: int) -> 'TimeGrid':
        return TimeGrid(self.horizon, self.n_steps * factor)


class ControlSet:
    """
    Admissible control values: a finite set of points of R^2 or a box given by per-coordinate bounds.
    """

    def __init__(self, kind: ControlSetKind, points: Optional[Sequence[Sequence[float]]] = None,
                 lower: Optional[Sequence[float]] = None, upper: Optional[Sequence[float]] = None):
        self.kind = kind
        if kind == ControlSetKind.FINITE_SET:
            points = np.asarray(points if points is not None else [], dtype=float).reshape(-1, 2)
            if not len(points):
                raise ImproperlyConfigured('Finite control set must not be empty.')
            self.points = np.unique(points, axis=0)
            self.lower, self.upper = self.points.min(axis=0), self.points.max(axis=0)
        else:
            self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (2,)).copy()
            self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (2,)).copy()
            if np.any(self.lower > self.upper) or not np.all(np.isfinite([self.lower, self.upper])):
                raise ImproperlyConfigured(f'Box bounds are not ordered: {self.lower} > {self.upper}.')
            self.points = None

    @classmethod
    def finite(cls, points: Sequence[Sequence[float]]) -> 'ControlSet':
        return cls(ControlSetKind.FINITE_SET, points=points)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> 'ControlSet':
        return cls(ControlSetKind.BOX, lower=lower, upper=upper)

    @classmethod
    def product(cls, values: Sequence[float]) -> 'ControlSet':
        """Finite set ``values x values``, e.g. ``{-1, 0, 1}^2``."""
        return cls.finite([(a, b) for a in values for b in values])

    def __repr__(self):
        if self.kind == ControlSetKind.FINITE_SET:
            return f'ControlSet.finite({self.points.tolist()})'
        return f'ControlSet.box({self.lower.tolist()}, {self.upper.tolist()})'

    def __eq__(self, other):
        if not isinstance(other, ControlSet) or self.kind != other.kind:
            return False
        if self.kind == ControlSetKind.FINITE_SET:
            return np.array_equal(self.points, other.points)
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    @property
    def is_convex(self) -> bool:
        return self.kind == ControlSetKind.BOX or len(self.points) == 1

    @property
    def vertices(self) -> np.ndarray:
        if self.kind == ControlSetKind.FINITE_SET:
            return self.points
        return np.unique(np.array([
            (self.lower[0], self.lower[1]), (self.upper[0], self.lower[1]),
            (self.lower[0], self.upper[1]), (self.upper[0], self.upper[1]),
        ]), axis=0)

    def comparison_points(self) -> np.ndarray:
        """Points on which pointwise maximizations are carried out: the set itself or vertices and edge midpoints."""
        if self.kind == ControlSetKind.FINITE_SET:
            return self.points
        lo, up = self.lower, self.upper
        mid = 0.5 * (lo + up)
        return np.unique(np.array([
            (lo[0], lo[1]), (up[0], lo[1]), (lo[0], up[1]), (up[0], up[1]),
            (mid[0], lo[1]), (mid[0], up[1]), (lo[0], mid[1]), (up[0], mid[1]),
        ]), axis=0)

    def contains(self, values: np.ndarray, atol: float = 1e-12) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.kind == ControlSetKind.BOX:
            return np.all((values >= self.lower - atol) & (values <= self.upper + atol), axis=-1)
        distance = np.abs(values[..., None, :] - self.points).max(axis=-1)
        return distance.min(axis=-1) <= atol

    def project(self, values: np.ndarray) -> np.ndarray:
        """Euclidean projection (nearest point of a finite set, ties to the first sorted point)."""
        values = np.asarray(values, dtype=float)
        if self.kind == ControlSetKind.BOX:
            return np.clip(values, self.lower, self.upper)
        distance = np.sum((values[..., None, :] - self.points) ** 2, axis=-1)
        return self.points[np.argmin(distance, axis=-1)]


class ControlProcess:
    """
    Deterministic piecewise constant control, ``values[i]`` acting on ``[t_i, t_{i+1})``.
    """

    def __init__(self, values: np.ndarray, admissible: bool = False):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 2:
            raise ValueError(f'Control values must have shape (n_steps, 2), got {values.shape}.')
        values.setflags(write=False)
        self.values = values
        self.admissible = admissible

    @classmethod
    def constant(cls, grid: TimeGrid, value: Sequence[float], control_set: Optional[ControlSet] = None):
        values = np.tile(np.broadcast_to(np.asarray(value, dtype=float), (2,)), (grid.n_steps, 1))
        return cls.tagged(values, control_set)

    @classmethod
    def tagged(cls, values: np.ndarray, control_set: Optional[ControlSet] = None) -> 'ControlProcess':
        admissible = bool(control_set is not None and np.all(control_set.contains(values)))
        return cls(values, admissible=admissible)

    def __repr__(self):
        return f'ControlProcess(n_steps={self.n_steps}, admissible={self.admissible})'

    def __eq__(self, other):
        return isinstance(other, ControlProcess) and np.array_equal(self.values, other.values)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def check_grid(self, grid: TimeGrid) -> None:
        if self.n_steps != grid.n_steps:
            raise LineageError(f'Control has {self.n_steps} steps, time grid has {grid.n_steps}.')

    def __add__(self, other: 'ControlProcess') -> 'ControlProcess':
        return ControlProcess(self.values + other.values)

    def __sub__(self, other: 'ControlProcess') -> 'ControlProcess':
        return ControlProcess(self.values - other.values)

    def scaled(self, factor: float) -> 'ControlProcess':
        return ControlProcess(self.values * factor)

    def refined(self, factor: int) -> 'ControlProcess':
        return ControlProcess(np.repeat(self.values, factor, axis=0), admissible=self.admissible)


class Scenario:
    """
    Complete description of the controlled equation
    ``dX = (A X + F(X)) dt + (lambda - A) D (u dt + sqrt(Q) dW~) + G(X) dW`` on a spectral basis.
    """

    def __init__(self, basis: SpectralBasis, horizon: float, n_steps: int, reaction: AbstractCoefficient,
                 control_set: ControlSet, noise_gain: Optional[AbstractCoefficient] = None,
                 boundary_noise: Sequence[float] = (0.0, 0.0), initial_state: Optional[Sequence[float]] = None,
                 n_paths: int = 1, seed: int = 0):
        self.basis = basis
        self.grid = TimeGrid(horizon, n_steps)
        if n_steps < 2:
            raise ImproperlyConfigured(f'Scenario needs at least 2 time steps, got {n_steps!r}.')
        if int(n_paths) != n_paths or n_paths < 1:
            raise ImproperlyConfigured(f'Number of paths must be a positive integer, got {n_paths!r}.')
        if int(seed) != seed or not 0 <= seed < 2 ** 64:
            raise ImproperlyConfigured(f'Seed must be an unsigned 64-bit integer, got {seed!r}.')
        self.reaction = reaction
        self.noise_gain = None if noise_gain is not None and noise_gain.is_zero else noise_gain
        self.control_set = control_set
        intensities = np.broadcast_to(np.asarray(boundary_noise, dtype=float), (2,)).copy()
        if np.any(intensities < 0) or not np.all(np.isfinite(intensities)):
            raise ImproperlyConfigured(f'Boundary noise intensities must be nonnegative, got {boundary_noise!r}.')
        intensities.setflags(write=False)
        self.boundary_noise = intensities
        state = np.zeros(basis.n_modes)
        values = np.asarray(initial_state if initial_state is not None else [], dtype=float)[:basis.n_modes]
        state[:values.size] = values
        state.setflags(write=False)
        self.initial_state = state
        self.n_paths = int(n_paths)
        self.seed = int(seed)
        self.boundary_maps = neumann_maps(basis)
        matrix = np.stack([m.b_coeffs for m in self.boundary_maps], axis=1)
        matrix.setflags(write=False)
        self.boundary_matrix = matrix

    def __repr__(self):
        return (f'Scenario({self.basis!r}, {self.grid!r}, reaction={self.reaction!r}, noise_gain={self.noise_gain!r}, '
                f'boundary_noise={self.boundary_noise.tolist()}, n_paths={self.n_paths}, seed={self.seed})')

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def has_boundary_noise(self) -> bool:
        return bool(np.any(self.boundary_noise > 0))

    @property
    def is_linear(self) -> bool:
        """Affine reaction and no multiplicative noise."""
        return self.reaction.affine_parts is not None and self.noise_gain is None

    def replace(self, **changes) -> 'Scenario':
        params = dict(
            basis=self.basis, horizon=self.horizon, n_steps=self.n_steps, reaction=self.reaction,
            control_set=self.control_set, noise_gain=self.noise_gain, boundary_noise=tuple(self.boundary_noise),
            initial_state=tuple(self.initial_state), n_paths=self.n_paths, seed=self.seed,
        )
        params.update(changes)
        return Scenario(**params)

    def pairing(self, y: np.ndarray) -> np.ndarray:
        """Boundary pairing ``D*(lambda - A)* y`` of modal vectors, shape ``(..., 2)``."""
        return np.asarray(y, dtype=float) @ self.boundary_matrix


class HypothesisCheck(NamedTuple):

    code: str
    status: HypothesisStatus
    detail: str
    witness: Optional[Tuple[float, float]] = None


class ValidationReport:

    def __init__(self, checks: Iterable[HypothesisCheck]):
        self.checks: List[HypothesisCheck] = list(checks)

    def __iter__(self):
        return iter(self.checks)

    def __getitem__(self, code: str) -> HypothesisCheck:
        for check in self.checks:
            if check.code == code:
                return check
        raise KeyError(code)

    @property
    def passed(self) -> bool:
        return all(check.status != HypothesisStatus.FAIL for check in self.checks)

    @property
    def failures(self) -> List[HypothesisCheck]:
        return [check for check in self.checks if check.status == HypothesisStatus.FAIL]


def _has_derivative(obj, method_name: str, base) -> bool:
    return getattr(type(obj), method_name) is not getattr(base, method_name)


def _scalar_audit(function, rng: np.random.Generator, samples: int, radius: float):
    """Largest difference quotient of ``function`` over random pairs of [-radius, radius]."""
    a = rng.uniform(-radius, radius, samples)
    b = rng.uniform(-radius, radius, samples)
    keep = a != b
    a, b = a[keep], b[keep]
    ratios = np.abs(function(a) - function(b)) / np.abs(a - b)
    worst = int(np.argmax(ratios))
    return float(ratios[worst]), (float(a[worst]), float(b[worst]))


def _field_audit(gradient, basis: SpectralBasis, rng: np.random.Generator, samples: int,
                 radius: float, chunk: int = 10000):
    """Largest difference quotient of a gradient field over random pairs of modal vectors."""
    worst_ratio, witness = 0.0, None
    scale = radius / np.sqrt(basis.n_modes)
    for start in range(0, samples, chunk):
        size = min(chunk, samples - start)
        x = rng.uniform(-scale, scale, (size, basis.n_modes))
        y = rng.uniform(-scale, scale, (size, basis.n_modes))
        distance = np.linalg.norm(x - y, axis=-1)
        ratios = np.linalg.norm(gradient(x) - gradient(y), axis=-1) / distance
        index = int(np.argmax(ratios))
        if ratios[index] > worst_ratio:
            worst_ratio, witness = float(ratios[index]), (float(np.linalg.norm(x[index])),
                                                          float(np.linalg.norm(y[index])))
    return worst_ratio, witness


def _lipschitz_check(code: str, label: str, declared: Optional[float], worst: float,
                     witness: Tuple[float, float]) -> HypothesisCheck:
    if declared is None:
        return HypothesisCheck(
            code, HypothesisStatus.FAIL,
            f'{label}: no global Lipschitz constant, sampled difference quotient reaches {worst:.6g}', witness
        )
    if worst <= declared * (1.0 + 1e-9) + 1e-12:
        return HypothesisCheck(code, HypothesisStatus.SAMPLED_PASS,
                               f'{label}: sampled quotient {worst:.6g} <= declared {declared:.6g}')
    return HypothesisCheck(
        code, HypothesisStatus.FAIL, f'{label}: sampled quotient {worst:.6g} exceeds declared {declared:.6g}', witness
    )


def _coefficient_checks(code: str, label: str, coefficient: AbstractCoefficient, rng, samples, radius):
    if not _has_derivative(coefficient, 'derivative', AbstractCoefficient):
        return [HypothesisCheck(code, HypothesisStatus.FAIL, f'{label} "{coefficient.slug}" has no derivative')]
    checks = []
    worst, witness = _scalar_audit(coefficient, rng, samples, radius)
    checks.append(_lipschitz_check(code, label, coefficient.lipschitz_constant, worst, witness))
    worst, witness = _scalar_audit(coefficient.derivative, rng, samples, radius)
    checks.append(_lipschitz_check(code, f'{label} derivative', coefficient.derivative_lipschitz_constant, worst,
                                   witness))
    failed = [check for check in checks if check.status == HypothesisStatus.FAIL]
    if failed:
        return [HypothesisCheck(code, HypothesisStatus.FAIL, '; '.join(check.detail for check in checks),
                                failed[0].witness)]
    return [HypothesisCheck(code, HypothesisStatus.SAMPLED_PASS, '; '.join(check.detail for check in checks))]


def _cost_checks(code: str, label: str, terms: Sequence[AbstractCostTerm], basis: SpectralBasis, rng, samples,
                 radius):
    if not terms:
        return HypothesisCheck(code, HypothesisStatus.STRUCTURAL_PASS, f'{label} is identically zero')
    missing = [term.slug for term in terms
               if not term.has_state_gradient or not _has_derivative(term, 'state_gradient', AbstractCostTerm)]
    if missing:
        return HypothesisCheck(code, HypothesisStatus.FAIL,
                               f'{label} terms without state derivative: {", ".join(missing)}')
    declared_constants = [term.state_gradient_lipschitz_constant() for term in terms]
    declared = None if None in declared_constants else float(sum(declared_constants))
    zero_u = np.zeros(2)

    def gradient(x):
        return sum(term.state_gradient(basis, x, zero_u) for term in terms)

    worst, witness = _field_audit(gradient, basis, rng, samples, radius)
    return _lipschitz_check(code, f'{label} state gradient', declared, worst, witness)


def validate_scenario(scenario: Scenario, cost: CostSpec, convex_case: bool = False,
                      samples: Optional[int] = None, radius: Optional[float] = None) -> ValidationReport:
    """
    Audit the structural hypotheses of the state equation, the cost and (for the convex case) the control set.

    Failures are reported, never raised. Sampled audits draw from the scenario seed.
    """
    samples = samples or getattr(settings, 'SMPLAB_AUDIT_SAMPLES', 100000)
    radius = radius or getattr(settings, 'SMPLAB_AUDIT_RADIUS', 10.0)
    checks = [HypothesisCheck(
        'A.1', HypothesisStatus.STRUCTURAL_PASS,
        'Neumann Laplacian generates a contraction semigroup (M = 1, omega = 0), lambda = {:.6g} > 0'.format(
            scenario.basis.lam
        )
    )]
    checks += _coefficient_checks('A.2', 'reaction', scenario.reaction, keyed_rng(scenario.seed, AUDIT_STREAM, 0),
                                  samples, radius)
    if scenario.noise_gain is None:
        checks.append(HypothesisCheck('A.3', HypothesisStatus.NOT_APPLICABLE, 'distributed noise is off'))
    else:
        checks += _coefficient_checks('A.3', 'noise gain', scenario.noise_gain,
                                      keyed_rng(scenario.seed, AUDIT_STREAM, 1), samples, radius)

    _, alpha = smoothing_exponent(scenario.basis, scenario.boundary_maps[0])
    status = HypothesisStatus.STRUCTURAL_PASS if alpha > 0.5 else HypothesisStatus.FAIL
    checks.append(HypothesisCheck('A.4', status, f'effective boundary regularity alpha = {alpha:.4f} (needs > 1/2)'))
    checks.append(HypothesisCheck(
        'A.5', status,
        'diagonal boundary noise covariance, intensities ({:.6g}, {:.6g}), alpha = {:.4f}'.format(
            *scenario.boundary_noise, alpha
        )
    ))

    checks.append(_cost_checks('B.1', 'running cost', cost.running, scenario.basis,
                               keyed_rng(scenario.seed, AUDIT_STREAM, 2), samples, radius))
    checks.append(_cost_checks('B.2', 'terminal cost', cost.terminal, scenario.basis,
                               keyed_rng(scenario.seed, AUDIT_STREAM, 3), samples, radius))

    if scenario.control_set.is_convex:
        checks.append(HypothesisCheck('C.1', HypothesisStatus.STRUCTURAL_PASS, 'control set is convex'))
    elif convex_case:
        checks.append(HypothesisCheck('C.1', HypothesisStatus.FAIL, 'control set not convex'))
    else:
        checks.append(HypothesisCheck('C.1', HypothesisStatus.NOT_APPLICABLE, 'control set not convex'))
    if not (convex_case or scenario.control_set.is_convex):
        checks.append(HypothesisCheck('C.2', HypothesisStatus.NOT_APPLICABLE, 'convex case not requested'))
        checks.append(HypothesisCheck('C.3', HypothesisStatus.NOT_APPLICABLE, 'convex case not requested'))
    else:
        missing = [term.slug for term in cost.running if not term.has_control_gradient]
        checks.append(
            HypothesisCheck('C.2', HypothesisStatus.FAIL, 'running cost terms without control derivative: {}'.format(
                ', '.join(missing)
            )) if missing else HypothesisCheck('C.2', HypothesisStatus.STRUCTURAL_PASS, 'l_u is registered')
        )
        coefficients = [scenario.reaction] + ([scenario.noise_gain] if scenario.noise_gain else [])
        rough = [c.slug for c in coefficients if c.derivative_lipschitz_constant is None]
        checks.append(
            HypothesisCheck('C.3', HypothesisStatus.FAIL, 'coefficients without Lipschitz derivative: {}'.format(
                ', '.join(rough)
            )) if rough else HypothesisCheck('C.3', HypothesisStatus.STRUCTURAL_PASS,
                                             'F, G, l and h are Gateaux differentiable with Lipschitz derivatives')
        )

    report = ValidationReport(checks)
    for check in report.failures:
        logger.info('Hypothesis %s failed: %s', check.code, check.detail)
    return report


def _check_states(states: np.ndarray, control: 'ControlProcess') -> np.ndarray:
    states = np.asarray(states, dtype=float)
    if states.shape[-2] != control.n_steps + 1:
        raise LineageError(f'States have {states.shape[-2] - 1} steps, control has {control.n_steps}.')
    return states


def running_costs(scenario: Scenario, cost: CostSpec, states: np.ndarray, control: ControlProcess) -> np.ndarray:
    """Pathwise ``sum_i h l(X_i, u_i) + h(X_n)`` (left endpoint rule), shape ``states.shape[:-2]``."""
    states = _check_states(states, control)
    h = scenario.horizon / control.n_steps
    running = cost.running_value(scenario.basis, states[..., :-1, :], control.values).sum(axis=-1) * h
    return running + cost.terminal_value(scenario.basis, states[..., -1, :])


def cost_evaluate(scenario: Scenario, cost: CostSpec, ensemble, control: ControlProcess) -> Tuple[float, float]:
    """
    Returns:
        Monte-Carlo estimate of ``J(u)`` and its standard error
    """
    mean, se = mean_and_standard_error(running_costs(scenario, cost, ensemble.states, control))
    return float(mean), float(se)


class CostGradientFields(NamedTuple):

    state: np.ndarray  # l_x per step, (..., n_steps, N)
    control: np.ndarray  # l_u per step, (..., n_steps, 2)
    terminal: np.ndarray  # h_x at T, (..., N)


def cost_gradient_fields(scenario: Scenario, cost: CostSpec, states: np.ndarray,
                         control: ControlProcess) -> CostGradientFields:
    states = _check_states(states, control)
    missing = [term.slug for term in cost.terms
               if not term.has_state_gradient or not _has_derivative(term, 'state_gradient', AbstractCostTerm)]
    if missing:
        raise ImproperlyConfigured('Cost terms without registered derivative: {}'.format(', '.join(missing)))
    basis = scenario.basis
    x = states[..., :-1, :]
    return CostGradientFields(
        cost.running_state_gradient(basis, x, control.values),
        cost.running_control_gradient(basis, x, control.values),
        cost.terminal_gradient(basis, states[..., -1, :]),
    )


def directional_derivative(scenario: Scenario, cost: CostSpec, states: np.ndarray, control: ControlProcess,
                           first_variation: np.ndarray, direction: ControlProcess) -> Tuple[float, float]:
    """
    ``E [sum_i h (<l_x, X~_i> + <l_u, v_i>) + <h_x(X_n), X~_n>]`` with its standard error, the derivative of
    ``J`` along ``direction`` computed through the first variation.
    """
    direction.check_grid(scenario.grid)
    fields = cost_gradient_fields(scenario, cost, states, control)
    first_variation = np.asarray(first_variation, dtype=float)
    if first_variation.shape != np.shape(states):
        raise LineageError('First variation and base states have different shapes.')
    h = scenario.grid.step
    pathwise = (
        h * np.einsum('...in,...in->...', fields.state, first_variation[..., :-1, :])
        + h * np.einsum('...ic,ic->...', fields.control, direction.values)
        + np.einsum('...n,...n->...', fields.terminal, first_variation[..., -1, :])
    )
    mean, se = mean_and_standard_error(np.atleast_1d(pathwise))
    return float(mean), float(se)
