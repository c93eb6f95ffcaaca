"""Perturbation analysis of Markov chains with time-varying parameters.

Exact invariant-law derivatives on finite kernel families, V-norm
contraction and ergodicity diagnostics, locally stationary simulation and
local polynomial curve estimation.
"""

__version__ = "0.1.0"

from .measure import (ContractViolation, KernelFamily, NotStochastic, StateSpace, TransitionKernel,
                      WeightFunction, WeightedSignedMeasure, apply_kernel, dobrushin_coeff,
                      ergodicity_bound, kernel_power, vnorm)
from .oracle import (DerivativeBundle, FundamentalMatrix, NonUniqueInvariant, ProductSpaceTooLarge,
                     StencilOutOfDomain, derivative_recursion, fd_derivative_oracle, forward_marginals,
                     invariant_measure, j_dim_derivatives, j_dim_law, local_stationarity_gap,
                     local_stationarity_sweep, taylor_remainder_check, taylor_sweep, zero_mass_resolve)
