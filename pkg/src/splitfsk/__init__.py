"""Simultaneous power and data transfer over a two-coil resonant link.

Modules: :mod:`.circuit` (frequency-domain analysis), :mod:`.channel`
(equivalent discrete-time channel), :mod:`.modem` (FSK / rectified FSK),
:mod:`.transient` (time-domain solver) and :mod:`.experiments` (Monte Carlo
harness behind the ``splitfsk`` command).
"""

from .circuit import (CircuitParams, PeakAnalysis, PolePairs, SteadyState, TransferFunction,
                      analyze_peaks, coupling_from_peaks, derive_transfer_function,
                      efficiency_curve, eval_H, find_k_split, find_poles,
                      orthogonal_couplings, peak_frequencies_approx, peak_frequencies_exact,
                      reference_params, solve_steady_state)
from .channel import (FirChannel, ImpulseResponse, NoiseModel, apply_channel,
                      bilinear_discretize, fir_taps, impulse_response_idft,
                      impulse_response_partial_fractions)
from .errors import SplitFSKError
from .modem import (ModemConfig, WaveformKind, coherent_demod, design_filterbank, modulate,
                    noncoherent_demod, rectify, theoretical_ber)
from .transient import (StateVector, TransientResult, derivatives, integrate,
                        steady_state_settle, transient_efficiency)

__all__ = [
    "CircuitParams",
    "PeakAnalysis",
    "PolePairs",
    "SteadyState",
    "TransferFunction",
    "analyze_peaks",
    "coupling_from_peaks",
    "derive_transfer_function",
    "efficiency_curve",
    "eval_H",
    "find_k_split",
    "find_poles",
    "orthogonal_couplings",
    "peak_frequencies_approx",
    "peak_frequencies_exact",
    "reference_params",
    "solve_steady_state",
    "FirChannel",
    "ImpulseResponse",
    "NoiseModel",
    "apply_channel",
    "bilinear_discretize",
    "fir_taps",
    "impulse_response_idft",
    "impulse_response_partial_fractions",
    "SplitFSKError",
    "ModemConfig",
    "WaveformKind",
    "coherent_demod",
    "design_filterbank",
    "modulate",
    "noncoherent_demod",
    "rectify",
    "theoretical_ber",
    "StateVector",
    "TransientResult",
    "derivatives",
    "integrate",
    "steady_state_settle",
    "transient_efficiency",
]

__version__ = "0.1.0"
