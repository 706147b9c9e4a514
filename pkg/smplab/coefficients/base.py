from typing import Any, Dict, Optional, Tuple

import numpy as np
from django.core.exceptions import ImproperlyConfigured


class CoefficientMetaclass(type):

    def __new__(mcs, name, bases, attrs):
        from smplab.loading import coefficient_register

        new_class = super().__new__(mcs, name, bases, attrs)
        if hasattr(new_class, 'slug') and new_class.slug:
            if coefficient_register.is_registered(new_class.slug):
                raise ImproperlyConfigured('More coefficients with slug {}'.format(new_class.slug))

            coefficient_register.register(new_class.slug, new_class)
        return new_class

    def __str__(self):
        return str(self.name)


class AbstractCoefficient(metaclass=CoefficientMetaclass):
    """
    Scalar function lifted to the state space pointwise (reaction term ``f`` or multiplicative noise gain ``g``).

    Subclasses declare default ``parameters`` and the constants used by the hypothesis audit. ``None`` means the
    property does not hold globally (e.g. no global Lipschitz constant).
    """

    name: str
    slug: str
    parameters: Dict[str, float] = {}

    def __init__(self, **params: Any):
        unknown = set(params) - set(self.parameters)
        if unknown:
            raise ImproperlyConfigured(
                'Unknown parameters {} of coefficient "{}"'.format(', '.join(sorted(unknown)), self.slug)
            )
        self.params = {key: float(params.get(key, default)) for key, default in self.parameters.items()}
        for key, value in self.params.items():
            if not np.isfinite(value):
                raise ImproperlyConfigured('Parameter {} of coefficient "{}" must be finite'.format(key, self.slug))
            setattr(self, key, value)
        self.check_parameters()

    def __repr__(self):
        params = ', '.join('{}={!r}'.format(key, value) for key, value in self.params.items())
        return '{}({})'.format(self.slug, params)

    def __eq__(self, other):
        return isinstance(other, AbstractCoefficient) and (self.slug, self.params) == (other.slug, other.params)

    def __hash__(self):
        return hash((self.slug, tuple(self.params.items())))

    def check_parameters(self) -> None:
        """Override to reject parameter values the formulas do not support."""

    def __call__(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def lipschitz_constant(self) -> Optional[float]:
        raise NotImplementedError

    @property
    def derivative_lipschitz_constant(self) -> Optional[float]:
        raise NotImplementedError

    @property
    def derivative_bound(self) -> Optional[float]:
        return self.lipschitz_constant

    @property
    def affine_parts(self) -> Optional[Tuple[float, float]]:
        """``(slope, offset)`` when the function is affine, ``None`` otherwise."""
        return None

    @property
    def is_zero(self) -> bool:
        return self.affine_parts == (0.0, 0.0)
