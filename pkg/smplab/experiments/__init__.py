from .base import AbstractExperiment, SummaryLine, check


__all__ = (
    'AbstractExperiment', 'SummaryLine', 'check'
)
