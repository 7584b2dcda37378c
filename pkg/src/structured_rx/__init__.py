"""Simulator for structured optical receivers.

Two receivers are modelled.  The active one turns BPSK Hadamard codewords
into PPM pulses with switched polarization delay modules.  The passive one
collapses phase-polarization pulse patterns into a single pulse.  Both
feed a photon-counting link model.
"""

from .active import (
    ActiveChain,
    ActiveModuleSpec,
    ConcentrationFailure,
    RegionOverlap,
    apply_active_module,
    propagate_active,
    synthesize_schedules,
    verify_concentration,
)
from .channel import ChannelParams, DecodeFrame, DecodeOutcome, DetectionRecord, DetectorMode, apply_channel, decode, detect
from .field import (
    WAVEPLATE,
    FieldState,
    PolTransform,
    SwitchSchedule,
    apply_pol_delay,
    apply_schedule,
    apply_uniform,
    overlap,
    shift,
    total_energy,
)
from .hadamard import Codeword, NotASymbol, codeword_signs, decode_position, encode_bpsk
from .link import LinkReport, Scheme, SchemeConfig, analytic_ppm_mi, compare_par, run_trials
from .passive import (
    FrameConfig,
    PassiveChain,
    PatternSymbol,
    build_passive_chain,
    build_symbol_alphabet,
    derive_pattern,
    peak_to_average,
    propagate_passive,
)

__version__ = "0.1.0"
