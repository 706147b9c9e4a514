from typing import Optional, Tuple

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from .base import AbstractCoefficient


class LinearCoefficient(AbstractCoefficient):

    name = 'linear'
    slug = 'linear'
    parameters = {'slope': 1.0}

    def __call__(self, y):
        return self.slope * np.asarray(y, dtype=float)

    def derivative(self, y):
        return np.full(np.shape(y), self.slope)

    @property
    def lipschitz_constant(self):
        return abs(self.slope)

    @property
    def derivative_lipschitz_constant(self):
        return 0.0

    @property
    def affine_parts(self):
        return self.slope, 0.0


class AffineCoefficient(LinearCoefficient):

    name = 'affine'
    slug = 'affine'
    parameters = {'slope': 1.0, 'offset': 0.0}

    def __call__(self, y):
        return self.slope * np.asarray(y, dtype=float) + self.offset

    @property
    def affine_parts(self):
        return self.slope, self.offset


class TanhSaturatedCoefficient(AbstractCoefficient):
    """``amplitude * tanh(y / scale)``"""

    name = 'tanh-saturated'
    slug = 'tanh-saturated'
    parameters = {'amplitude': 1.0, 'scale': 1.0}

    def check_parameters(self):
        if self.scale <= 0:
            raise ImproperlyConfigured('Coefficient "tanh-saturated" needs a positive scale')

    def __call__(self, y):
        return self.amplitude * np.tanh(np.asarray(y, dtype=float) / self.scale)

    def derivative(self, y):
        return self.amplitude / self.scale / np.cosh(np.asarray(y, dtype=float) / self.scale) ** 2

    @property
    def lipschitz_constant(self):
        return abs(self.amplitude) / self.scale

    @property
    def derivative_lipschitz_constant(self):
        # max |d/dz sech^2 z| = 4 / (3 sqrt 3)
        return 4.0 * abs(self.amplitude) / (3.0 * np.sqrt(3.0) * self.scale ** 2)


class TruncatedCubicCoefficient(AbstractCoefficient):
    """
    ``gain * (y - y^3 / (3 radius^2))`` on ``|y| <= radius``, continued by its constant boundary values outside,
    so both the function and its derivative are globally Lipschitz.
    """

    name = 'truncated-cubic'
    slug = 'truncated-cubic'
    parameters = {'gain': 1.0, 'radius': 1.0}

    def check_parameters(self):
        if self.radius <= 0:
            raise ImproperlyConfigured('Coefficient "truncated-cubic" needs a positive radius')

    def __call__(self, y):
        z = np.clip(np.asarray(y, dtype=float), -self.radius, self.radius)
        return self.gain * (z - z ** 3 / (3.0 * self.radius ** 2))

    def derivative(self, y):
        z = np.clip(np.asarray(y, dtype=float), -self.radius, self.radius)
        return self.gain * (1.0 - z ** 2 / self.radius ** 2)

    @property
    def lipschitz_constant(self):
        return abs(self.gain)

    @property
    def derivative_lipschitz_constant(self):
        return 2.0 * abs(self.gain) / self.radius


class QuadraticCoefficient(AbstractCoefficient):
    """``gain * y^2``, locally Lipschitz only."""

    name = 'quadratic'
    slug = 'quadratic'
    parameters = {'gain': 1.0}

    def __call__(self, y):
        return self.gain * np.asarray(y, dtype=float) ** 2

    def derivative(self, y):
        return 2.0 * self.gain * np.asarray(y, dtype=float)

    @property
    def lipschitz_constant(self) -> Optional[float]:
        return None

    @property
    def derivative_lipschitz_constant(self) -> Optional[float]:
        return 2.0 * abs(self.gain)

    @property
    def derivative_bound(self) -> Optional[float]:
        return None

    @property
    def affine_parts(self) -> Optional[Tuple[float, float]]:
        return (0.0, 0.0) if self.gain == 0 else None
