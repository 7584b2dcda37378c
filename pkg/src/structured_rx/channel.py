"""Channel impairments, photon-counting detection and PPM decoding.

Randomness always comes from an explicit ``numpy.random.Generator``.  Per
trial streams come from :func:`trial_rng`, a Philox generator keyed by the
master seed whose counter's high word is the trial index, so a trial draws
the same numbers no matter which worker runs it.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping

import numpy as np

from .field import POL_NAMES, FieldState

U64 = (1 << 64) - 1


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    if not 0 <= master_seed <= U64:
        raise ValueError("master seed must be an unsigned 64-bit integer")
    return np.random.Generator(np.random.Philox(key=master_seed, counter=[0, 0, 0, trial_index]))


@dataclass(frozen=True)
class ChannelParams:
    transmissivity: float = 1.0
    phase_noise_sigma: float = 0.0
    visibility: float = 1.0
    dark_mean: float = 0.0
    delay_phase_errors: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "delay_phase_errors", tuple(float(x) for x in self.delay_phase_errors))
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValueError(f"transmissivity must lie in [0, 1], got {self.transmissivity}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")
        if self.phase_noise_sigma < 0:
            raise ValueError("phase_noise_sigma must be >= 0")
        if self.dark_mean < 0:
            raise ValueError("dark_mean must be >= 0")


class DetectorMode(enum.Enum):
    SUMMED = "A"  # one detector, polarizations added
    RESOLVED = "B"  # polarizing beam splitter and two detectors


def apply_channel(state: FieldState, params: ChannelParams, rng: np.random.Generator | None = None) -> FieldState:
    amps = state.amps * np.sqrt(params.transmissivity)
    if params.phase_noise_sigma > 0 and state.n_bins:
        if rng is None:
            raise ValueError("phase noise needs a random generator")
        phi = rng.normal(0.0, params.phase_noise_sigma, state.n_bins)
        amps = amps * np.exp(1j * phi)[:, None]
    return FieldState(state.start_bin, amps)


def cell_means(
    amps: np.ndarray, params: ChannelParams, mode: DetectorMode, span: slice | None = None
) -> np.ndarray:
    """Mean counts per detector cell for window amplitudes ``amps`` of shape (n, 2).

    A fraction ``1 - visibility`` of the signal is spread evenly over the
    ``span`` bins instead of following the field.
    """
    mu = np.abs(amps) ** 2
    v = params.visibility
    if v < 1.0:
        total = mu.sum()
        mu = v * mu
        span = span if span is not None else slice(0, mu.shape[0])
        n_span = len(range(*span.indices(mu.shape[0])))
        if n_span and total > 0:
            mu[span] += (1.0 - v) * total / (2 * n_span)
    if mode is DetectorMode.SUMMED:
        mu = mu.sum(axis=1)
    if params.dark_mean:
        mu = mu + params.dark_mean
    return mu


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    start_bin: int
    counts: np.ndarray  # (n,) for SUMMED, (n, 2) for RESOLVED
    mode: DetectorMode

    def count(self, cell: Hashable) -> int:
        if self.mode is DetectorMode.SUMMED:
            i = cell - self.start_bin
            return int(self.counts[i]) if 0 <= i < self.counts.shape[0] else 0
        t, pol = cell
        i = t - self.start_bin
        return int(self.counts[i, pol]) if 0 <= i < self.counts.shape[0] else 0

    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (
            isinstance(other, DetectionRecord)
            and self.start_bin == other.start_bin
            and self.mode is other.mode
            and np.array_equal(self.counts, other.counts)
        )


def detect(
    state: FieldState,
    params: ChannelParams,
    mode: DetectorMode,
    rng: np.random.Generator,
    window: tuple[int, int] | None = None,
    span: tuple[int, int] | None = None,
) -> DetectionRecord:
    """Poisson photocounts over the detector gate ``window`` (defaults to the field's own window)."""
    lo, hi = window if window is not None else (state.start_bin, state.stop_bin)
    s_lo, s_hi = span if span is not None else (lo, hi)
    mu = cell_means(state.window(lo, hi), params, mode, slice(s_lo - lo, s_hi - lo))
    return DetectionRecord(lo, rng.poisson(mu), mode)


class OutcomeKind(enum.Enum):
    SYMBOL = "symbol"
    ERASURE = "erasure"
    INVALID = "invalid"


@dataclass(frozen=True)
class DecodeOutcome:
    kind: OutcomeKind
    index: int | None = None

    @classmethod
    def symbol(cls, i: int) -> "DecodeOutcome":
        return cls(OutcomeKind.SYMBOL, int(i))


ERASURE = DecodeOutcome(OutcomeKind.ERASURE)
INVALID = DecodeOutcome(OutcomeKind.INVALID)


@dataclass(frozen=True)
class DecodeFrame:
    """Detector gate, leakage span and the cell-to-symbol map of one scheme.

    Cells are bin indices for a summing detector and ``(bin, pol)`` pairs for
    a polarization-resolving one.
    """

    window: tuple[int, int]
    span: tuple[int, int]
    position_map: Mapping[Hashable, int]
    mode: DetectorMode
    _lookup: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = list(self.position_map.values())
        if len(set(values)) != len(values) and self.mode is DetectorMode.SUMMED:
            raise ValueError("position map must be injective")
        lo, hi = self.window
        shape = (hi - lo,) if self.mode is DetectorMode.SUMMED else (hi - lo, 2)
        lookup = np.full(shape, -1, dtype=np.int64)
        for cell, sym in self.position_map.items():
            idx = cell - lo if self.mode is DetectorMode.SUMMED else (cell[0] - lo, cell[1])
            lookup[idx] = sym
        object.__setattr__(self, "_lookup", lookup.ravel())

    @property
    def n_symbols(self) -> int:
        return len(set(self.position_map.values()))

    def lookup_flat(self) -> np.ndarray:
        return self._lookup


def decode_counts(flat_counts: np.ndarray, lookup: np.ndarray, rng: np.random.Generator) -> int:
    """Decode a flattened count vector; returns a symbol index, -1 for erasure, -2 for invalid."""
    peak = flat_counts.max(initial=0)
    if peak == 0:
        return -1
    hits = np.flatnonzero(flat_counts == peak)
    cell = hits[0] if hits.size == 1 else hits[rng.integers(hits.size)]
    sym = lookup[cell]
    return int(sym) if sym >= 0 else -2


def decode(record: DetectionRecord, frame: DecodeFrame, rng: np.random.Generator) -> DecodeOutcome:
    if record.mode is not frame.mode:
        raise ValueError("record and frame use different detector modes")
    if record.start_bin != frame.window[0] or record.counts.shape[0] != frame.window[1] - frame.window[0]:
        raise ValueError("record does not cover the frame's detector window")
    code = decode_counts(record.counts.ravel(), frame.lookup_flat(), rng)
    if code == -1:
        return ERASURE
    if code == -2:
        return INVALID
    return DecodeOutcome.symbol(code)


def records_to_csv(records: Iterable[tuple[int, DetectionRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["trial", "bin", "pol", "count"])
    for trial, rec in records:
        for i in range(rec.counts.shape[0]):
            t = rec.start_bin + i
            if rec.mode is DetectorMode.SUMMED:
                w.writerow([trial, t, "HV", int(rec.counts[i])])
            else:
                for p, name in enumerate(POL_NAMES):
                    w.writerow([trial, t, name, int(rec.counts[i, p])])
    return buf.getvalue()
