"""Indirect quadrature measurement of a harmonic oscillator with a qubit.

Modules
-------
fockspace     truncated Fock-space operators and states
measurement   Kraus operators and Monte Carlo measurement trajectories
analytic      closed-form single sums for record probabilities and moments
dephasing     1/f qubit noise, CPMG filtering and noise-averaged states
open_system   Lindblad master equation and the dissipative protocol
cli           batch experiment runner
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigurationError,
    ContractError,
    NumericError,
    PrecisionError,
    QSqueezeError,
    TruncationError,
    UnderflowError,
)
from .fockspace import HilbertConfig  # noqa: E402
from .measurement import InitialState, ProtocolParams, kraus_pair, run_trajectory  # noqa: E402
from .analytic import outcome_distribution, outcome_statistics, variance_approx  # noqa: E402

__all__ = [
    "__version__",
    "ConfigurationError",
    "ContractError",
    "NumericError",
    "PrecisionError",
    "QSqueezeError",
    "TruncationError",
    "UnderflowError",
    "HilbertConfig",
    "InitialState",
    "ProtocolParams",
    "kraus_pair",
    "run_trajectory",
    "outcome_distribution",
    "outcome_statistics",
    "variance_approx",
]
