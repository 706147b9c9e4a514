from typing import TYPE_CHECKING, Any, Dict, Iterable, Optional, Tuple

import numpy as np
from django.core.exceptions import ImproperlyConfigured

from .base import AbstractCostTerm

if TYPE_CHECKING:
    from smplab.spectral import SpectralBasis


def build_cost_term(slug: str, params: Optional[Dict[str, Any]] = None) -> AbstractCostTerm:
    from smplab.loading import cost_register

    if slug not in cost_register:
        raise ImproperlyConfigured('Unknown cost term "{}"'.format(slug))
    return cost_register[slug](**(params or {}))


def _sum_affine(terms: Iterable[AbstractCostTerm], basis: "SpectralBasis"):
    diagonal, offset = np.zeros(basis.n_modes), np.zeros(basis.n_modes)
    for term in terms:
        parts = term.affine_state_gradient(basis)
        if parts is None:
            return None
        diagonal, offset = diagonal + parts[0], offset + parts[1]
    return diagonal, offset


class CostSpec:
    """
    Cost functional ``J(u) = E int_0^T l(X_t, u_t) dt + E h(X_T)`` with ``l`` and ``h`` sums of registered terms.
    """

    def __init__(self, running: Tuple[AbstractCostTerm, ...] = (), terminal: Tuple[AbstractCostTerm, ...] = ()):
        self.running = tuple(running)
        self.terminal = tuple(terminal)
        for term in self.terminal:
            if term.depends_on_control:
                raise ImproperlyConfigured('Terminal cost term "{}" must not depend on the control'.format(term.slug))

    def __repr__(self):
        return 'CostSpec(running={!r}, terminal={!r})'.format(self.running, self.terminal)

    def __eq__(self, other):
        return isinstance(other, CostSpec) and (self.running, self.terminal) == (other.running, other.terminal)

    @property
    def terms(self) -> Tuple[AbstractCostTerm, ...]:
        return self.running + self.terminal

    def running_value(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))
        for term in self.running:
            out = out + term.value(basis, x, u)
        return out

    def running_state_gradient(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.zeros(np.shape(x))
        for term in self.running:
            out = out + term.state_gradient(basis, x, u)
        return out

    def running_control_gradient(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        out = np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]) + (2,))
        for term in self.running:
            out = out + term.control_gradient(basis, x, u)
        return out

    def terminal_value(self, basis: "SpectralBasis", x: np.ndarray) -> np.ndarray:
        u = np.zeros(np.shape(x)[:-1] + (2,))
        out = np.zeros(np.shape(x)[:-1])
        for term in self.terminal:
            out = out + term.value(basis, x, u)
        return out

    def terminal_gradient(self, basis: "SpectralBasis", x: np.ndarray) -> np.ndarray:
        u = np.zeros(np.shape(x)[:-1] + (2,))
        out = np.zeros(np.shape(x))
        for term in self.terminal:
            out = out + term.state_gradient(basis, x, u)
        return out

    def running_affine_state_gradient(self, basis: "SpectralBasis"):
        return _sum_affine(self.running, basis)

    def terminal_affine_gradient(self, basis: "SpectralBasis"):
        return _sum_affine(self.terminal, basis)


__all__ = (
    'AbstractCostTerm', 'CostSpec', 'build_cost_term'
)
