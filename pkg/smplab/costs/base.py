from typing import TYPE_CHECKING, Any, Dict, Optional, Tuple, Union

import numpy as np
from django.core.exceptions import ImproperlyConfigured

if TYPE_CHECKING:
    from smplab.spectral import SpectralBasis


ParameterValue = Union[float, Tuple[float, ...]]


class CostTermMetaclass(type):

    def __new__(mcs, name, bases, attrs):
        from smplab.loading import cost_register

        new_class = super().__new__(mcs, name, bases, attrs)
        if hasattr(new_class, 'slug') and new_class.slug:
            if cost_register.is_registered(new_class.slug):
                raise ImproperlyConfigured('More cost terms with slug {}'.format(new_class.slug))

            cost_register.register(new_class.slug, new_class)
        return new_class

    def __str__(self):
        return str(self.name)


class AbstractCostTerm(metaclass=CostTermMetaclass):
    """
    One additive term ``l(x, u)`` of a running or terminal cost.

    States are modal coefficient arrays ``(..., N)``, controls are ``(..., 2)`` arrays with matching leading axes.
    Tuple parameters are vectors (modal coefficients or control points), scalars are floats.
    """

    name: str
    slug: str
    parameters: Dict[str, ParameterValue] = {}
    depends_on_control: bool = True
    has_state_gradient: bool = True
    has_control_gradient: bool = True

    def __init__(self, **params: Any):
        unknown = set(params) - set(self.parameters)
        if unknown:
            raise ImproperlyConfigured(
                'Unknown parameters {} of cost term "{}"'.format(', '.join(sorted(unknown)), self.slug)
            )
        self.params: Dict[str, ParameterValue] = {}
        for key, default in self.parameters.items():
            value = params.get(key, default)
            if isinstance(default, tuple):
                value = tuple(float(v) for v in np.atleast_1d(value))
            else:
                value = float(value)
            if not np.all(np.isfinite(value)):
                raise ImproperlyConfigured('Parameter {} of cost term "{}" must be finite'.format(key, self.slug))
            self.params[key] = value
            setattr(self, key, value)
        self.check_parameters()

    def __repr__(self):
        params = ', '.join('{}={!r}'.format(key, value) for key, value in self.params.items())
        return '{}({})'.format(self.slug, params)

    def __eq__(self, other):
        return isinstance(other, AbstractCostTerm) and (self.slug, self.params) == (other.slug, other.params)

    def __hash__(self):
        return hash((self.slug, tuple(self.params.items())))

    def check_parameters(self) -> None:
        """Override to reject parameter values the formulas do not support."""

    def value(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_gradient(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def control_gradient(self, basis: "SpectralBasis", x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(u))

    def state_gradient_lipschitz_constant(self) -> Optional[float]:
        """Global Lipschitz constant of ``x -> l_x``, ``None`` when unknown."""
        raise NotImplementedError

    def affine_state_gradient(self, basis: "SpectralBasis") -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """
        ``(K, k)`` with ``l_x(x, u) = K * x + k`` (diagonal ``K``) independent of ``u``, ``None`` otherwise.
        """
        return None


def modal_vector(basis: "SpectralBasis", values: Tuple[float, ...]) -> np.ndarray:
    """Pad or truncate a tuple of modal coefficients to the basis."""
    out = np.zeros(basis.n_modes)
    values = np.asarray(values, dtype=float)[:basis.n_modes]
    out[:values.size] = values
    return out


def control_vector(values: Tuple[float, ...], name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return np.repeat(values, 2)
    if values.size != 2:
        raise ImproperlyConfigured('{} needs one or two components, got {}'.format(name, values.size))
    return values
