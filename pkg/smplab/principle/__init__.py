from .gradient import FiniteDifference, Gradient, gradient_adjoint, gradient_fd, relative_l2_error
from .hamiltonian import (
    HamiltonianValue, StepGap, ViolationReport, duality_residual, hamiltonian, hamiltonian_table, verify_smp
)
from .optimizers import (
    DivergenceError, IterationRecord, OptimizationResult, optimize_msa, optimize_projected_gradient,
    variational_residual
)
from .spike import RateReport, SpikeAlignmentError, SpikeSpec, spike_control, spike_rate_study, spike_steps


__all__ = (
    'FiniteDifference', 'Gradient', 'gradient_adjoint', 'gradient_fd', 'relative_l2_error',
    'HamiltonianValue', 'StepGap', 'ViolationReport', 'duality_residual', 'hamiltonian', 'hamiltonian_table',
    'verify_smp',
    'DivergenceError', 'IterationRecord', 'OptimizationResult', 'optimize_msa', 'optimize_projected_gradient',
    'variational_residual',
    'RateReport', 'SpikeAlignmentError', 'SpikeSpec', 'spike_control', 'spike_rate_study', 'spike_steps',
)
