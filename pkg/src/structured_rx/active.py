"""Active receiver: Hadamard codewords to PPM via switched polarization delay modules.

Each module with delay ``T`` applies, in order: a per-bin polarization
switch, an H delay of ``T``, the fixed waveplate, and a second H delay of
``T``.  ``m`` modules with delays ``2**(m-1), ..., 2, 1`` bring the whole
codeword energy into the single bin ``position_offset + bits``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .field import (
    H,
    V,
    WAVEPLATE,
    FieldState,
    PolTransform,
    SwitchSchedule,
    apply_pol_delay,
    apply_schedule,
    apply_uniform,
)
from .hadamard import MAX_M, Codeword, all_codewords, encode_bpsk


class RegionOverlap(RuntimeError):
    """Regions tracked for distinct bit prefixes intersect during schedule synthesis."""


class ConcentrationFailure(AssertionError):
    def __init__(self, msg: str, report: "ConcentrationReport"):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class ActiveModuleSpec:
    delay_T: int
    schedule: SwitchSchedule
    wave_transform: PolTransform = field(default=WAVEPLATE, compare=False)
    delay_phase_error_1: float = 0.0
    delay_phase_error_2: float = 0.0

    def __post_init__(self):
        T = self.delay_T
        if T < 1 or T & (T - 1):
            raise ValueError(f"module delay must be a power of two, got {T}")


@dataclass(frozen=True)
class ActiveChain:
    m: int
    modules: tuple[ActiveModuleSpec, ...]
    position_offset: int

    def __post_init__(self):
        object.__setattr__(self, "modules", tuple(self.modules))
        if len(self.modules) != self.m:
            raise ValueError(f"chain for m={self.m} needs {self.m} modules, got {len(self.modules)}")
        delays = [mod.delay_T for mod in self.modules]
        if delays != [1 << k for k in reversed(range(self.m))]:
            raise ValueError(f"module delays must halve from 2**(m-1) to 1, got {delays}")

    def with_phase_errors(self, errors: Sequence[float]) -> "ActiveChain":
        """Attach delay-line phase errors, two per module in propagation order."""
        if len(errors) != 2 * self.m:
            raise ValueError(f"expected {2 * self.m} delay phase errors, got {len(errors)}")
        mods = tuple(
            replace(mod, delay_phase_error_1=float(errors[2 * i]), delay_phase_error_2=float(errors[2 * i + 1]))
            for i, mod in enumerate(self.modules)
        )
        return replace(self, modules=mods)

    def output_window(self) -> tuple[int, int]:
        """Bins that can receive light from a codeword, whatever the phase errors."""
        n = 1 << self.m
        return 0, n + 2 * sum(mod.delay_T for mod in self.modules)


def apply_active_module(state: FieldState, spec: ActiveModuleSpec) -> FieldState:
    state = apply_schedule(state, spec.schedule)
    state = apply_pol_delay(state, spec.delay_T, spec.delay_phase_error_1)
    state = apply_uniform(state, spec.wave_transform)
    return apply_pol_delay(state, spec.delay_T, spec.delay_phase_error_2)


def run_active_chain(state: FieldState, chain: ActiveChain) -> FieldState:
    for spec in chain.modules:
        state = apply_active_module(state, spec)
    return state


def _diagonal_output_pol(sign: int) -> int:
    # which rectilinear component the waveplate sends the (1, sign) diagonal to
    out = WAVEPLATE.u @ np.array([1.0, sign])
    return H if abs(out[H]) > abs(out[V]) else V


@dataclass
class _Region:
    start: int
    length: int
    pol: int


def synthesize_schedules(m: int) -> ActiveChain:
    """Build the switch schedules by tracking the occupied region of every bit prefix.

    Before the module with delay ``T`` each live region spans ``2T`` bins
    with a single polarization.  Its earlier half must enter the delay as H
    and its later half as V; the schedule swaps whichever bins disagree.
    """
    if not 1 <= m <= MAX_M:
        raise ValueError(f"m must lie in [1, {MAX_M}], got {m}")
    regions = [_Region(0, 1 << m, V)]
    modules = []
    for k in reversed(range(m)):
        T = 1 << k
        swaps: set[int] = set()
        spans = sorted((r.start, r.start + r.length) for r in regions)
        for (_, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise RegionOverlap(f"regions overlap before module T={T}: bins {s1}..{e0 - 1}")
        for r in regions:
            if r.length != 2 * T:
                raise RegionOverlap(f"region at {r.start} has length {r.length}, expected {2 * T}")
            if r.pol != H:
                swaps.update(range(r.start, r.start + T))
            if r.pol != V:
                swaps.update(range(r.start + T, r.start + 2 * T))
        modules.append(ActiveModuleSpec(T, SwitchSchedule(frozenset(swaps))))
        # after the module: equal halves (b=0) give +45 -> pol_plus, opposite halves give -45
        # -> pol_minus; whatever lands in H is pushed a further T bins by the second delay
        nxt = []
        for r in regions:
            for b, sign in ((0, 1), (1, -1)):
                pol = _diagonal_output_pol(sign)
                start = r.start + T + (T if pol == H else 0)
                nxt.append(_Region(start, T, pol))
        regions = nxt
    # regions are generated in bit order b_{m-1} ... b_0 (MSB first), i.e. index == bits
    starts = [r.start for r in regions]
    offset = starts[0]
    if starts != list(range(offset, offset + (1 << m))):
        raise RegionOverlap(f"final positions are not consecutive: {starts[:8]}...")
    return ActiveChain(m, tuple(modules), offset)


def propagate_active(c: Codeword, alpha: complex, chain: ActiveChain) -> FieldState:
    if chain.m != c.m:
        raise ValueError(f"chain built for m={chain.m}, codeword has m={c.m}")
    return run_active_chain(encode_bpsk(c, alpha), chain)


@dataclass
class ConcentrationReport:
    m: int
    position_offset: int
    max_leakage: float
    positions: list[int]
    leakages: list[float]

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "position_offset": self.position_offset,
            "n_modules": self.m,
            "max_leakage": self.max_leakage,
            "positions": self.positions,
        }


def _codeword_leakage(c: Codeword, chain: ActiveChain) -> tuple[int, float]:
    out = propagate_active(c, 1.0, chain)
    e = out.bin_energies()
    total = float(e.sum())
    predicted = chain.position_offset + c.bits
    i = predicted - out.start_bin
    inside = float(e[i]) if 0 <= i < out.n_bins else 0.0
    position = out.start_bin + int(np.argmax(e))
    return position, (total - inside) / total


def verify_concentration(chain: ActiveChain, tolerance: float = 1e-10, workers: int = 1) -> ConcentrationReport:
    """Propagate every codeword and check it lands, whole, in bin ``offset + bits``."""
    words = all_codewords(chain.m)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda c: _codeword_leakage(c, chain), words))
    else:
        results = [_codeword_leakage(c, chain) for c in words]
    positions = [p for p, _ in results]
    leakages = [lk for _, lk in results]
    report = ConcentrationReport(chain.m, chain.position_offset, max(leakages), positions, leakages)
    if report.max_leakage > tolerance:
        raise ConcentrationFailure(
            f"m={chain.m}: max leakage {report.max_leakage:.3g} exceeds {tolerance:.3g}", report
        )
    base = positions[0]
    if len(set(positions)) != len(positions) or positions != list(range(base, base + len(positions))):
        raise ConcentrationFailure(f"m={chain.m}: position map is not bits -> c + bits", report)
    return report


def chain_to_dict(chain: ActiveChain) -> dict:
    return {
        "m": chain.m,
        "position_offset": chain.position_offset,
        "modules": [{"delay_T": mod.delay_T, "swap_bins": mod.schedule.sorted_bins()} for mod in chain.modules],
    }


def chain_to_json(chain: ActiveChain) -> str:
    return json.dumps(chain_to_dict(chain), sort_keys=True, separators=(",", ":"))


def chain_from_dict(d: dict) -> ActiveChain:
    mods = tuple(ActiveModuleSpec(int(x["delay_T"]), SwitchSchedule(frozenset(x["swap_bins"]))) for x in d["modules"])
    return ActiveChain(int(d["m"]), mods, int(d["position_offset"]))
