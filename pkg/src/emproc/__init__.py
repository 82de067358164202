"""Simulation and quadrature laboratory for the empirical process beta_n.

The package computes the weighted rank process

    beta_n(t) = n^{-1/2} sum_j {G_{t,n}(Y_j(t)) - G_t(Y_j(t))} q_t(Y_j(t)),

the functional empirical process alpha_n, their sum gamma_n, the
time-dependent L-statistic J_n(t), and the closed-form limit covariances of
all of them, and checks the latter against Monte Carlo ensembles.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, InvariantViolation, NumericalError
from .models import ModelSpec, PathSample, TimeGrid, sample_paths
from .weights import WeightSpec, make_weights

__all__ = [
    "ConfigError",
    "DataError",
    "InvariantViolation",
    "ModelSpec",
    "NumericalError",
    "PathSample",
    "TimeGrid",
    "WeightSpec",
    "make_weights",
    "sample_paths",
]
