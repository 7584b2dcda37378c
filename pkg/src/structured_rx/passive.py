"""Passive receiver and the phase-polarization patterns it collapses to a single pulse.

Each module is an H delay of ``T`` followed by the waveplate; there is no
switching.  Transmit patterns are found by running the chain backwards
from a single output pulse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import jsonschema
import numpy as np

from .field import (
    POL_NAMES,
    WAVEPLATE,
    FieldState,
    PolTransform,
    apply_pol_advance,
    apply_pol_delay,
    apply_uniform,
    normalize_window,
    pol_index,
    shift,
    total_energy,
)
from .hadamard import MAX_M


@dataclass(frozen=True)
class PassiveModuleSpec:
    delay_T: int
    wave_transform: PolTransform = field(default=WAVEPLATE, compare=False)
    delay_phase_error: float = 0.0


@dataclass(frozen=True)
class PassiveChain:
    m: int
    modules: tuple[PassiveModuleSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))
        if len(self.modules) != self.m:
            raise ValueError(f"chain for m={self.m} needs {self.m} modules, got {len(self.modules)}")

    @property
    def output_bin(self) -> int:
        """Output bin of a pattern whose first pulse arrives in bin 0."""
        return sum(mod.delay_T for mod in self.modules)

    def with_phase_errors(self, errors: Sequence[float]) -> "PassiveChain":
        if len(errors) != self.m:
            raise ValueError(f"expected {self.m} delay phase errors, got {len(errors)}")
        return replace(self, modules=tuple(replace(mod, delay_phase_error=float(e)) for mod, e in zip(self.modules, errors)))


def build_passive_chain(m: int) -> PassiveChain:
    if not 1 <= m <= MAX_M:
        raise ValueError(f"m must lie in [1, {MAX_M}], got {m}")
    return PassiveChain(m, tuple(PassiveModuleSpec(1 << k) for k in reversed(range(m))))


def propagate_passive(state: FieldState, chain: PassiveChain) -> FieldState:
    for mod in chain.modules:
        state = apply_pol_delay(state, mod.delay_T, mod.delay_phase_error)
        state = apply_uniform(state, mod.wave_transform)
    return state


@dataclass(frozen=True)
class PatternSymbol:
    pattern: FieldState
    arrival_offset: int
    output_pol: str
    predicted_output_bin: int
    m: int

    def shifted(self, k: int) -> "PatternSymbol":
        return PatternSymbol(
            shift(self.pattern, k), self.arrival_offset + k, self.output_pol, self.predicted_output_bin + k, self.m
        )


def derive_pattern(m: int, output_pol: str, alpha_total: complex = 1.0) -> PatternSymbol:
    """Inject one pulse at the output and undo the modules in reverse order."""
    chain = build_passive_chain(m)
    pol = POL_NAMES[pol_index(output_pol)]
    out_bin = chain.output_bin
    state = FieldState.pulse(out_bin, pol, alpha_total)
    for mod in reversed(chain.modules):
        state = apply_uniform(state, mod.wave_transform.inverse)
        state = apply_pol_advance(state, mod.delay_T, -mod.delay_phase_error)
    cropped = FieldState(0, state.window(0, 1 << m))
    assert abs(total_energy(cropped) - total_energy(state)) <= 1e-12 * max(total_energy(state), 1.0)
    state = cropped
    return PatternSymbol(state, 0, pol, out_bin, m)


@dataclass(frozen=True)
class FrameConfig:
    M: int
    guard_bins: int
    use_polarization_doubling: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"PPM order M must be >= 2, got {self.M}")
        if self.guard_bins < 0:
            raise ValueError("guard_bins must be non-negative")

    @classmethod
    def default(cls, M: int, m: int, use_polarization_doubling: bool = False) -> "FrameConfig":
        return cls(M, max(M, 1 << m), use_polarization_doubling)

    @property
    def frame_length(self) -> int:
        return self.M + self.guard_bins

    @property
    def n_symbols(self) -> int:
        return 2 * self.M if self.use_polarization_doubling else self.M

    def check_pattern_fits(self, m: int) -> None:
        if self.guard_bins < (1 << m):
            raise ValueError(f"guard of {self.guard_bins} bins is shorter than the {1 << m}-bin pattern")


def build_symbol_alphabet(m: int, frame: FrameConfig, alpha_total: complex = 1.0) -> list[PatternSymbol]:
    frame.check_pattern_fits(m)
    base = derive_pattern(m, "H", alpha_total)
    symbols = [base.shifted(k) for k in range(frame.M)]
    if frame.use_polarization_doubling:
        other = derive_pattern(m, "V", alpha_total)
        symbols += [other.shifted(k) for k in range(frame.M)]
    return symbols


def power_usage_factor(m: int, frame: FrameConfig) -> float:
    """Fraction of the frame during which the transmitter beam is unblocked."""
    return (1 << m) / frame.frame_length


def peak_to_average(state: FieldState, frame_len_bins: int) -> float:
    e = total_energy(state)
    if e <= 0:
        raise ValueError("peak-to-average ratio is undefined for a zero-energy field")
    return float(np.max(state.bin_energies())) / (e / frame_len_bins)


PATTERN_SCHEMA = {
    "type": "object",
    "required": ["m", "output_pol", "bins"],
    "additionalProperties": False,
    "properties": {
        "m": {"type": "integer", "minimum": 1, "maximum": MAX_M},
        "output_pol": {"enum": ["H", "V"]},
        "bins": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "pol", "re", "im"],
                "additionalProperties": False,
                "properties": {
                    "t": {"type": "integer"},
                    "pol": {"enum": ["H", "V"]},
                    "re": {"type": "number"},
                    "im": {"type": "number"},
                },
            },
        },
    },
}


def pattern_to_dict(sym: PatternSymbol) -> dict:
    bins = []
    p = sym.pattern
    for i in range(p.n_bins):
        for j, name in enumerate(POL_NAMES):
            a = p.amps[i, j]
            if a != 0:
                bins.append({"t": p.start_bin + i, "pol": name, "re": float(a.real), "im": float(a.imag)})
    return {"m": sym.m, "output_pol": sym.output_pol, "bins": bins}


def pattern_to_json(sym: PatternSymbol) -> str:
    return json.dumps(pattern_to_dict(sym), indent=1)


def pattern_from_dict(d: Mapping) -> PatternSymbol:
    jsonschema.validate(d, PATTERN_SCHEMA)
    comps = {(b["t"], b["pol"]): complex(b["re"], b["im"]) for b in d["bins"]}
    pattern = normalize_window(FieldState.from_components(comps))
    m = d["m"]
    return PatternSymbol(pattern, pattern.start_bin, d["output_pol"], pattern.start_bin + (1 << m) - 1, m)


@dataclass
class RoundTripReport:
    m: int
    max_leakage: float
    max_power_deviation: float


def verify_round_trip(m: int, alpha_total: complex = 1.0) -> RoundTripReport:
    """Forward-propagate both derived patterns and measure how well each collapses."""
    chain = build_passive_chain(m)
    target = abs(alpha_total) ** 2 / (1 << m)
    leak, dev = 0.0, 0.0
    for pol in POL_NAMES:
        sym = derive_pattern(m, pol, alpha_total)
        dev = max(dev, float(np.max(np.abs(sym.pattern.bin_energies() - target))))
        out = propagate_passive(sym.pattern, chain)
        cells = np.abs(out.amps) ** 2
        leak = max(leak, 1.0 - float(cells.max()) / float(cells.sum()))
    return RoundTripReport(m, leak, dev)
