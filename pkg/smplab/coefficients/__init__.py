from typing import Any, Dict, Optional

from django.core.exceptions import ImproperlyConfigured

from .base import AbstractCoefficient


def build_coefficient(slug: str, params: Optional[Dict[str, Any]] = None) -> AbstractCoefficient:
    from smplab.loading import coefficient_register

    if slug not in coefficient_register:
        raise ImproperlyConfigured('Unknown coefficient "{}"'.format(slug))
    return coefficient_register[slug](**(params or {}))


__all__ = (
    'AbstractCoefficient', 'build_coefficient'
)
