"""Output-only modal analysis of under-determined systems.

Pipeline: multichannel vibration record -> lagged covariance tensor ->
variational Bayesian CP factorisation (rank = number of active modes) ->
natural frequencies, damping ratios and mode shapes.
"""

from ._backend import BACKEND
from .bcpf import BcpfHyperparams, CpPosterior, FitTrace, fit
from .covariance import (CovarianceTensorSpec, SignalBlock,
                         build_covariance_tensor, lagged_covariance)
from .modal_extraction import (MacMatrix, ModalEstimate, capacity,
                               extract_modes, fit_damped_cosine, mac,
                               pair_modes, poles_to_modal)
from .simulator import (ChainSystem, GroundTruthModes, SimConfig,
                        analytic_modes, benchmark_nonuniform,
                        benchmark_uniform, select_sensors, simulate)
from .tensor_core import Tensor3, cp_reconstruct, frobenius_norm, khatri_rao, unfold

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BcpfHyperparams",
    "ChainSystem",
    "CovarianceTensorSpec",
    "CpPosterior",
    "FitTrace",
    "GroundTruthModes",
    "MacMatrix",
    "ModalEstimate",
    "SignalBlock",
    "SimConfig",
    "Tensor3",
    "analytic_modes",
    "benchmark_nonuniform",
    "benchmark_uniform",
    "build_covariance_tensor",
    "capacity",
    "cp_reconstruct",
    "extract_modes",
    "fit",
    "fit_damped_cosine",
    "frobenius_norm",
    "khatri_rao",
    "lagged_covariance",
    "mac",
    "pair_modes",
    "poles_to_modal",
    "select_sensors",
    "simulate",
    "unfold",
]
