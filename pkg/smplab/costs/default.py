import numpy as np
from django.core.exceptions import ImproperlyConfigured

from .base import AbstractCostTerm, control_vector, modal_vector


class QuadraticTrackingCost(AbstractCostTerm):
    """``weight * |x - target|^2`` with a constant target profile."""

    name = 'quadratic tracking'
    slug = 'quadratic-tracking'
    parameters = {'weight': 1.0, 'target': 0.0}
    depends_on_control = False

    def _shifted(self, x):
        x = np.array(x, dtype=float)
        x[..., 0] -= self.target
        return x

    def value(self, basis, x, u):
        return self.weight * np.sum(self._shifted(x) ** 2, axis=-1)

    def state_gradient(self, basis, x, u):
        return 2.0 * self.weight * self._shifted(x)

    def state_gradient_lipschitz_constant(self):
        return 2.0 * abs(self.weight)

    def affine_state_gradient(self, basis):
        offset = np.zeros(basis.n_modes)
        offset[0] = -2.0 * self.weight * self.target
        return np.full(basis.n_modes, 2.0 * self.weight), offset


class LinearCost(AbstractCostTerm):
    """
    ``<c, x> + <a, u>``. The state vector ``c`` is given by its leading modal coefficients ``state`` plus an optional
    tail ``tail_amplitude / k^tail_power`` for ``k >= 1``.
    """

    name = 'linear'
    slug = 'linear'
    parameters = {'state': (0.0,), 'tail_amplitude': 0.0, 'tail_power': 1.0, 'control': (0.0, 0.0)}

    def check_parameters(self):
        self._control = control_vector(self.control, 'Control weight of cost term "linear"')

    def state_vector(self, basis):
        c = modal_vector(basis, self.state)
        if self.tail_amplitude:
            c[1:] += self.tail_amplitude / basis.modes[1:].astype(float) ** self.tail_power
        return c

    @property
    def depends_on_control(self):
        return bool(np.any(self._control != 0))

    def value(self, basis, x, u):
        return np.asarray(x, dtype=float) @ self.state_vector(basis) + np.asarray(u, dtype=float) @ self._control

    def state_gradient(self, basis, x, u):
        return np.broadcast_to(self.state_vector(basis), np.shape(x)).copy()

    def control_gradient(self, basis, x, u):
        return np.broadcast_to(self._control, np.shape(u)).copy()

    def state_gradient_lipschitz_constant(self):
        return 0.0

    def affine_state_gradient(self, basis):
        return np.zeros(basis.n_modes), self.state_vector(basis)


class ControlEnergyCost(AbstractCostTerm):
    """``weight * |u - reference|^2``"""

    name = 'control energy'
    slug = 'control-energy'
    parameters = {'weight': 1.0, 'reference': (0.0, 0.0)}

    def check_parameters(self):
        self._reference = control_vector(self.reference, 'Reference of cost term "control-energy"')

    def value(self, basis, x, u):
        return self.weight * np.sum((np.asarray(u, dtype=float) - self._reference) ** 2, axis=-1)

    def state_gradient(self, basis, x, u):
        return np.zeros(np.shape(x))

    def control_gradient(self, basis, x, u):
        return 2.0 * self.weight * (np.asarray(u, dtype=float) - self._reference)

    def state_gradient_lipschitz_constant(self):
        return 0.0

    def affine_state_gradient(self, basis):
        return np.zeros(basis.n_modes), np.zeros(basis.n_modes)


class LogCoshCost(AbstractCostTerm):
    """
    ``weight * int_0^1 scale^2 log cosh(x(s) / scale) ds``, evaluated pseudo-spectrally. Its gradient is the
    projection of ``weight * scale * tanh(x / scale)``.
    """

    name = 'log-cosh'
    slug = 'log-cosh'
    parameters = {'weight': 1.0, 'scale': 1.0}
    depends_on_control = False

    def check_parameters(self):
        if self.scale <= 0:
            raise ImproperlyConfigured('Cost term "log-cosh" needs a positive scale')

    def value(self, basis, x, u):
        z = basis.to_grid(x) / self.scale
        density = np.logaddexp(z, -z) - np.log(2.0)
        return self.weight * self.scale ** 2 * density.mean(axis=-1)

    def state_gradient(self, basis, x, u):
        return basis.to_modal(self.weight * self.scale * np.tanh(basis.to_grid(x) / self.scale))

    def state_gradient_lipschitz_constant(self):
        return abs(self.weight)
