"""Simulation and analysis toolkit for cascaded entangled-photon-pair sources.

Subpackages:

* ``polarization``: two-qubit states, concurrence, fidelity, validation
* ``model``: closed-form multiphoton/g2/mixing relations and power sweeps
* ``simulate``: pulse-train Monte Carlo click generator with blinking
* ``correlate``: correlation histograms and g2 / eta estimators
* ``tomography``: 36-setting state reconstruction with MLE and error bars
* ``cli``: command-line entry point (``qdcascade``)
"""

from . import correlate, kernels, model, polarization, simulate, tomography
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    EstimationError,
    InvariantError,
    NoPhysicalSolutionError,
)

__version__ = "0.1.0"

__all__ = [
    "correlate",
    "kernels",
    "model",
    "polarization",
    "simulate",
    "tomography",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "EstimationError",
    "InvariantError",
    "NoPhysicalSolutionError",
    "__version__",
]
