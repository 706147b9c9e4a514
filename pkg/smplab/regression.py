import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np
from django.conf import settings


logger = logging.getLogger(__name__)


class RegressionError(ArithmeticError):
    pass


class RankDeficiencyError(RegressionError):

    def __init__(self, condition_number: float, limit: float):
        self.condition_number = condition_number
        super().__init__(f'Regression features are ill-conditioned: condition number {condition_number:.3e} '
                         f'exceeds {limit:.3e}.')


class InsufficientPathsError(RegressionError):

    def __init__(self, n_features: int, n_paths: int):
        self.n_features = n_features
        self.n_paths = n_paths
        super().__init__(f'{n_features} regression features need at least {10 * n_features} paths, got {n_paths}.')


class RegressionDiagnostics(NamedTuple):

    condition_number: float
    rank: int
    n_features: int


class ConditionalExpectation:
    """
    Least-squares projection onto the span of the features of one time step. Targets of any width are projected with
    the same decomposition.
    """

    def __init__(self, left_vectors: np.ndarray, shrinkage: np.ndarray, diagnostics: RegressionDiagnostics):
        self.left_vectors = left_vectors
        self.shrinkage = shrinkage
        self.diagnostics = diagnostics

    def __call__(self, targets: np.ndarray) -> np.ndarray:
        targets = np.asarray(targets, dtype=float)
        if not np.all(np.isfinite(targets)):
            raise RegressionError('Regression targets are not finite.')
        flat = targets.reshape(targets.shape[0], -1)
        mean = flat.mean(axis=0)
        centered = flat - mean
        fitted = mean + self.left_vectors @ (self.shrinkage[:, None] * (self.left_vectors.T @ centered))
        return fitted.reshape(targets.shape)


class RegressionBasis:
    """
    Affine features in the first ``n_regressors`` modal coefficients, standardized, with a ridge penalty
    ``ridge * n_paths`` on everything but the intercept. Constant columns are dropped.

    Features whose full condition number exceeds ``max_condition_number`` raise ``RankDeficiencyError``. With
    ``truncate`` the directions with singular value below ``rcond`` times the largest are discarded instead and the
    diagnostics keep the condition number of the full spectrum.
    """

    def __init__(self, n_regressors: int = 8, ridge: float = 1e-8, rcond: Optional[float] = None,
                 max_condition_number: Optional[float] = None, truncate: bool = False):
        if n_regressors < 0:
            raise ValueError('Number of regressors must be nonnegative.')
        if ridge < 0:
            raise ValueError('Ridge parameter must be nonnegative.')
        self.n_regressors = int(n_regressors)
        self.ridge = float(ridge)
        self.rcond = rcond if rcond is not None else getattr(settings, 'SMPLAB_REGRESSION_RCOND', 1e-10)
        self.max_condition_number = (
            max_condition_number if max_condition_number is not None
            else getattr(settings, 'SMPLAB_MAX_CONDITION_NUMBER', 1e12)
        )
        self.truncate = truncate

    def __repr__(self):
        return f'RegressionBasis(n_regressors={self.n_regressors}, ridge={self.ridge!r}, truncate={self.truncate})'

    def n_features(self, n_modes: int) -> int:
        return 1 + min(self.n_regressors, n_modes)

    def check_paths(self, n_modes: int, n_paths: int) -> None:
        n_features = self.n_features(n_modes)
        if 10 * n_features > n_paths:
            raise InsufficientPathsError(n_features, n_paths)

    def features(self, states: np.ndarray) -> np.ndarray:
        """Non-intercept feature columns ``(n_paths, n_regressors)``."""
        return np.asarray(states, dtype=float)[:, :self.n_regressors]

    def fit(self, states: np.ndarray) -> ConditionalExpectation:
        columns = self.features(states)
        n_paths = columns.shape[0]
        scale = columns.std(axis=0)
        keep = scale > 1e-12 * np.maximum(1.0, np.abs(columns).max(axis=0, initial=0.0))
        if not keep.any():
            empty = np.zeros((n_paths, 0))
            return ConditionalExpectation(empty, np.zeros(0), RegressionDiagnostics(1.0, 0, 1))
        standardized = (columns[:, keep] - columns[:, keep].mean(axis=0)) / scale[keep]
        left, singular, _ = np.linalg.svd(standardized, full_matrices=False)
        condition_number = float(singular[0] / singular[-1]) if singular[-1] > 0 else float('inf')
        if self.truncate:
            retained = singular > self.rcond * singular[0]
            singular, left = singular[retained], left[:, retained]
        elif condition_number > self.max_condition_number:
            raise RankDeficiencyError(condition_number, self.max_condition_number)
        penalty = self.ridge * n_paths
        shrinkage = singular ** 2 / (singular ** 2 + penalty)
        diagnostics = RegressionDiagnostics(condition_number, len(singular), 1 + int(keep.sum()))
        return ConditionalExpectation(left, shrinkage, diagnostics)


def regress(states: np.ndarray, targets: np.ndarray, basis: Optional[RegressionBasis] = None) -> np.ndarray:
    """Fitted conditional expectation of ``targets`` given the features of ``states`` at the sample points."""
    return (basis or RegressionBasis()).fit(states)(targets)


def residual_means(states: np.ndarray, targets: np.ndarray, basis: RegressionBasis) -> Sequence[float]:
    """Cross-path mean of the regression residual per target column."""
    residual = np.asarray(targets, dtype=float) - basis.fit(states)(targets)
    return residual.reshape(residual.shape[0], -1).mean(axis=0)
