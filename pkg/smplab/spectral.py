"""
Modal representation of the Neumann Laplacian on (0, 1).

Every unbounded operator composition used by the lab (semigroup, fractional powers, ``(lambda - A) D``) is diagonal
in the cosine basis ``e_0 = 1``, ``e_k = sqrt(2) cos(k pi x)``, so it reduces to elementwise arithmetic on the last
axis of a coefficient array. Coefficient arrays may carry any number of leading (path, step) axes.
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from numpy.polynomial.legendre import leggauss
from scipy.fft import dct, idct

from smplab.enums import BoundarySide
from smplab.utils import LogLogFit, fit_loglog


logger = logging.getLogger(__name__)


class NemytskiiEvaluationError(ArithmeticError):
    """Pointwise nonlinearity returned a non-finite value."""

    def __init__(self, grid_index: int, location: float):
        self.grid_index = grid_index
        self.location = location
        super().__init__(f'Non-finite value of the nonlinearity at grid point {grid_index} (x = {location!r}).')


class SpectralBasis:
    """
    Eigenpairs of the Neumann Laplacian truncated to ``n_modes`` together with a midpoint grid of ``grid_size``
    points used for the pseudo-spectral transforms.
    """

    def __init__(self, n_modes: int, lam: float, grid_size: int):
        self.n_modes = int(n_modes)
        self.lam = float(lam)
        self.grid_size = int(grid_size)
        self.modes = np.arange(self.n_modes)
        self.eigenvalues = -(self.modes * np.pi) ** 2
        self.grid = (np.arange(self.grid_size) + 0.5) / self.grid_size
        for array in (self.modes, self.eigenvalues, self.grid):
            array.setflags(write=False)

    def __repr__(self):
        return f'SpectralBasis(n_modes={self.n_modes}, lam={self.lam!r}, grid_size={self.grid_size})'

    def __eq__(self, other):
        return (
            isinstance(other, SpectralBasis)
            and (self.n_modes, self.lam, self.grid_size) == (other.n_modes, other.lam, other.grid_size)
        )

    def __hash__(self):
        return hash((self.n_modes, self.lam, self.grid_size))

    @property
    def resolvent_symbol(self) -> np.ndarray:
        """Diagonal of ``lambda - A``."""
        return self.lam - self.eigenvalues

    def eigenfunctions(self, x) -> np.ndarray:
        """Values ``e_k(x)`` with shape ``x.shape + (n_modes,)``."""
        x = np.asarray(x, dtype=float)
        values = np.sqrt(2.0) * np.cos(np.pi * x[..., None] * self.modes)
        values[..., 0] = 1.0
        return values

    def semigroup_factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f'Semigroup time must be nonnegative, got {t!r}.')
        return np.exp(self.eigenvalues * t)

    def phi(self, h: float) -> np.ndarray:
        """``(e^{mu h} - 1) / mu`` per mode, ``h`` for the constant mode."""
        return _expm1_ratio(self.eigenvalues, h)

    def psi(self, h: float) -> np.ndarray:
        """``(e^{2 mu h} - 1) / (2 mu)`` per mode, ``h`` for the constant mode."""
        return _expm1_ratio(2.0 * self.eigenvalues, h)

    def to_grid(self, coefficients: np.ndarray) -> np.ndarray:
        """Modal coefficients -> samples on the midpoint grid (last axis)."""
        coefficients = np.asarray(coefficients, dtype=float)
        padded = np.zeros(coefficients.shape[:-1] + (self.grid_size,))
        padded[..., :self.n_modes] = coefficients * np.sqrt(self.grid_size)
        return idct(padded, type=2, norm='ortho', axis=-1)

    def to_modal(self, samples: np.ndarray) -> np.ndarray:
        """Samples on the midpoint grid -> first ``n_modes`` modal coefficients (last axis)."""
        samples = np.asarray(samples, dtype=float)
        return dct(samples, type=2, norm='ortho', axis=-1)[..., :self.n_modes] / np.sqrt(self.grid_size)

    def project(self, values: np.ndarray) -> np.ndarray:
        """Pseudo-spectral projection of a grid field, alias of ``to_modal``."""
        return self.to_modal(values)


def _expm1_ratio(rate: np.ndarray, h: float) -> np.ndarray:
    rate = np.asarray(rate, dtype=float)
    out = np.full(rate.shape, float(h))
    nonzero = rate != 0
    out[nonzero] = np.expm1(rate[nonzero] * h) / rate[nonzero]
    return out


class BoundaryMap:
    """
    Modal form of one Neumann map: ``d_coeffs`` are the coefficients of the profile ``d`` solving
    ``lambda d - d'' = 0`` with a unit flux on ``side`` and ``b_coeffs = (lambda - mu_k) d_k``.
    """

    def __init__(self, side: BoundarySide, d_coeffs: np.ndarray, b_coeffs: np.ndarray):
        self.side = side
        self.d_coeffs = np.asarray(d_coeffs, dtype=float)
        self.b_coeffs = np.asarray(b_coeffs, dtype=float)
        self.d_coeffs.setflags(write=False)
        self.b_coeffs.setflags(write=False)

    def __repr__(self):
        return f'BoundaryMap(side={self.side.name}, n_modes={self.b_coeffs.size})'


def build_basis(n_modes: int, lam: float = 1.0, grid_size: Optional[int] = None) -> SpectralBasis:
    """
    Args:
        n_modes: number of retained eigenmodes, at least 2
        lam: resolvent parameter, any positive number
        grid_size: pseudo-spectral grid size, defaults to ``2 * n_modes``

    Returns:
        SpectralBasis
    """
    grid_size = 2 * n_modes if grid_size is None else grid_size
    if int(n_modes) != n_modes or n_modes < 2:
        raise ImproperlyConfigured(f'Spectral basis needs at least 2 modes, got {n_modes!r}.')
    if int(grid_size) != grid_size or grid_size < 2 * n_modes:
        raise ImproperlyConfigured(
            f'Grid size {grid_size!r} is smaller than twice the number of modes {n_modes}, transforms would alias.'
        )
    if not np.isfinite(lam) or lam <= 0:
        raise ImproperlyConfigured(f'Resolvent parameter lambda must be positive, got {lam!r}.')
    return SpectralBasis(n_modes, lam, grid_size)


def semigroup_apply(basis: SpectralBasis, t: float, v: np.ndarray) -> np.ndarray:
    return basis.semigroup_factors(t) * np.asarray(v, dtype=float)


def fractional_apply(basis: SpectralBasis, sigma: float, v: np.ndarray) -> np.ndarray:
    return basis.resolvent_symbol ** sigma * np.asarray(v, dtype=float)


def boundary_values(basis: SpectralBasis, side: BoundarySide) -> np.ndarray:
    """Eigenfunction values ``e_k`` at the boundary point of ``side``."""
    return basis.eigenfunctions(0.0 if side == BoundarySide.LEFT else 1.0)


def neumann_map(basis: SpectralBasis, side: BoundarySide) -> BoundaryMap:
    # Integrating (lambda - d'') e_k by parts leaves only the flux term at the boundary.
    sign = -1.0 if side == BoundarySide.LEFT else 1.0
    b_coeffs = sign * boundary_values(basis, side)
    return BoundaryMap(side, b_coeffs / basis.resolvent_symbol, b_coeffs)


def neumann_maps(basis: SpectralBasis) -> Tuple[BoundaryMap, BoundaryMap]:
    return neumann_map(basis, BoundarySide.LEFT), neumann_map(basis, BoundarySide.RIGHT)


def neumann_profile(lam: float, side: BoundarySide, x) -> np.ndarray:
    """
    Explicit Neumann profiles ``d1(x) = -cosh(sqrt(lam)(1-x)) / (sqrt(lam) sinh sqrt(lam))`` and
    ``d2(x) = cosh(sqrt(lam) x) / (sqrt(lam) sinh sqrt(lam))``, written with decaying exponentials.
    """
    x = np.asarray(x, dtype=float)
    a = np.sqrt(lam)
    denominator = a * -np.expm1(-2.0 * a)
    if side == BoundarySide.LEFT:
        return -(np.exp(-a * x) + np.exp(-a * (2.0 - x))) / denominator
    return (np.exp(-a * (1.0 - x)) + np.exp(-a * (1.0 + x))) / denominator


def gauss_legendre_nodes(panels: Optional[int] = None, order: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [0, 1]."""
    panels = panels or getattr(settings, 'SMPLAB_QUADRATURE_PANELS', 2048)
    order = order or getattr(settings, 'SMPLAB_QUADRATURE_ORDER', 8)
    reference_nodes, reference_weights = leggauss(order)
    width = 1.0 / panels
    left_edges = np.arange(panels) * width
    nodes = (left_edges[:, None] + 0.5 * width * (reference_nodes + 1.0)).ravel()
    weights = np.tile(0.5 * width * reference_weights, panels)
    return nodes, weights


def profile_coefficients(basis: SpectralBasis, side: BoundarySide, panels: Optional[int] = None,
                         order: Optional[int] = None) -> np.ndarray:
    """Modal coefficients of the explicit profile by quadrature, independent of the closed form."""
    nodes, weights = gauss_legendre_nodes(panels, order)
    values = neumann_profile(basis.lam, side, nodes) * weights
    return values @ basis.eigenfunctions(nodes)


def smoothing_norm(basis: SpectralBasis, boundary_map: BoundaryMap, t: float) -> float:
    """Norm of ``e^{tA} (lambda - A) D`` on a unit boundary input."""
    if t <= 0:
        raise ValueError(f'Smoothing norm is defined for positive times only, got {t!r}.')
    return float(np.sqrt(np.sum(boundary_map.b_coeffs ** 2 * np.exp(2.0 * basis.eigenvalues * t))))


def smoothing_exponent(basis: SpectralBasis, boundary_map: BoundaryMap, t_min: Optional[float] = None,
                       t_max: float = 1e-1, n_points: int = 25) -> Tuple[LogLogFit, float]:
    """
    Fit the small-time rate of ``smoothing_norm`` on times resolved by the truncation.

    Returns:
        the log-log fit and the effective exponent ``alpha = 1 + slope``
    """
    t_min = t_min if t_min is not None else min(max(1e-6, 1.0 / basis.n_modes ** 2), t_max / 10.0)
    if not 0 < t_min < t_max:
        raise ValueError(f'Invalid fitting window [{t_min!r}, {t_max!r}].')
    times = np.geomspace(t_min, t_max, n_points)
    norms = [smoothing_norm(basis, boundary_map, t) for t in times]
    fit = fit_loglog(times, norms)
    logger.debug('Smoothing exponent of %s: slope %.6f on [%g, %g]', boundary_map, fit.slope, t_min, t_max)
    return fit, 1.0 + fit.slope


def convolution_gain(basis: SpectralBasis, boundary_map: BoundaryMap, t: float) -> float:
    """
    Constant ``K(t) = sum_k b_k^2 psi_k(t)`` of the deterministic boundary convolution estimate
    ``|int_0^t e^{(t-s)A} (lambda - A) D u_s ds|^2 <= K(t) int_0^t |u_s|^2 ds``.
    """
    if t < 0:
        raise ValueError(f'Convolution time must be nonnegative, got {t!r}.')
    return float(np.sum(boundary_map.b_coeffs ** 2 * basis.psi(t)))


def stochastic_convolution_variance(basis: SpectralBasis, boundary_map: BoundaryMap, t: float,
                                    intensity: float = 1.0) -> Tuple[np.ndarray, float]:
    """Per-mode and total variance of the boundary stochastic convolution at time ``t``."""
    if t < 0:
        raise ValueError(f'Convolution time must be nonnegative, got {t!r}.')
    per_mode = intensity ** 2 * boundary_map.b_coeffs ** 2 * basis.psi(t)
    return per_mode, float(per_mode.sum())


def nemytskii_apply(basis: SpectralBasis, f: Callable[[np.ndarray], np.ndarray], v: np.ndarray) -> np.ndarray:
    """Pseudo-spectral evaluation of ``x -> f(v(x))`` truncated back to the basis."""
    values = np.asarray(f(basis.to_grid(v)), dtype=float)
    check_finite_field(basis, values)
    return basis.to_modal(values)


def check_finite_field(basis: SpectralBasis, values: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if bad.any():
        grid_index = int(np.argwhere(bad)[0][-1])
        raise NemytskiiEvaluationError(grid_index, float(basis.grid[grid_index]))


def h_norm(v: np.ndarray) -> np.ndarray:
    """State-space norm of modal vectors (last axis), by Parseval."""
    return np.linalg.norm(np.asarray(v, dtype=float), axis=-1)
