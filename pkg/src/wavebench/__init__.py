"""Link-level comparison of multicarrier, single-carrier and faster-than-Nyquist waveforms.

The package synthesizes lattice waveforms, passes them through doubly
selective fading channels, equalizes them with exact observation models and
reports achievable spectral efficiency (ASE) with confidence intervals.
"""

__version__ = "0.1.0"

from .ase import (AseCurve, AsePoint, LinkScenario, estimate_ase, estimate_ase_gaussian_inputs, gaussian_information,
                  mismatched_information, paired_difference, spectral_efficiency)
from .channel import ChannelProfile, ChannelRealization, awgn_profile, channel_matrix, etu, make_mimo_channels, \
    realize_channel
from .config import Check, ConfigError, FrameConfig, Scheme
from .constellation import Constellation, pam, qam
from .mimo import (EffectiveChannel, UplinkEqualizer, UplinkScenario, average_curves, effective_channels,
                   interference_power, simulate_uplink, uplink_ase)
from .pulses import PrototypePulse, PulseKind, ambiguity, check_orthogonality, make_pulse
from .receiver import EqualizerKind, ObservationModel, build_observation, equalize, make_equalizer
from .waveform import SymbolGrid, apply_evm, map_symbols, random_grid, synthesize_block, synthesize_frame

__all__ = [
    "AseCurve", "AsePoint", "Check", "ChannelProfile", "ChannelRealization", "ConfigError", "Constellation",
    "EffectiveChannel", "EqualizerKind", "FrameConfig", "LinkScenario", "ObservationModel", "PrototypePulse",
    "PulseKind", "Scheme", "SymbolGrid", "UplinkEqualizer", "UplinkScenario", "ambiguity", "apply_evm",
    "average_curves", "awgn_profile", "build_observation", "channel_matrix", "check_orthogonality",
    "effective_channels", "equalize", "estimate_ase", "estimate_ase_gaussian_inputs", "etu", "gaussian_information",
    "interference_power", "make_equalizer", "make_mimo_channels", "make_pulse", "map_symbols",
    "mismatched_information", "paired_difference", "pam", "qam", "random_grid", "realize_channel",
    "simulate_uplink", "spectral_efficiency", "synthesize_block", "synthesize_frame", "uplink_ase",
]
