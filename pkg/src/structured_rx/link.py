"""Monte Carlo link simulation and analytic baselines.

Every trial draws a uniform input symbol, sends it through the channel,
the receiver and the detector, and decodes it.  Outcomes accumulate in a
joint count table over inputs and output letters (symbols, then erasure,
then invalid), from which rates and the plug-in mutual information follow.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .active import ActiveChain, run_active_chain, synthesize_schedules
from .channel import (
    ChannelParams,
    DecodeFrame,
    DetectorMode,
    apply_channel,
    cell_means,
    decode,
    decode_counts,
    detect,
    trial_rng,
)
from .field import H, V, FieldState
from .hadamard import Codeword, encode_bpsk
from .passive import (
    FrameConfig,
    PassiveChain,
    build_passive_chain,
    build_symbol_alphabet,
    peak_to_average,
    propagate_passive,
)

CHUNK = 4096
CSV_HEADER = ["scheme", "m", "M", "N_s", "n_trials", "ser", "erasure", "invalid", "mi_bits", "pie", "par", "seed"]


class Scheme(enum.Enum):
    ACTIVE_HADAMARD = "ACTIVE_HADAMARD"
    PASSIVE_PATTERN = "PASSIVE_PATTERN"
    REFERENCE_PPM = "REFERENCE_PPM"


@dataclass(frozen=True)
class SchemeConfig:
    """One link configuration.

    ``n_s`` is the mean number of photons per symbol reaching the receiver;
    the transmitter emits ``n_s / transmissivity``.
    """

    scheme: Scheme
    n_s: float
    m: int | None = None
    M: int | None = None
    frame: FrameConfig | None = None
    channel: ChannelParams = field(default_factory=ChannelParams)
    mode: DetectorMode = DetectorMode.SUMMED

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "mode", DetectorMode(self.mode))
        if self.n_s < 0 or not math.isfinite(self.n_s):
            raise ValueError(f"n_s must be finite and >= 0, got {self.n_s}")
        if self.n_s > 0 and self.channel.transmissivity == 0:
            raise ValueError("n_s > 0 is unreachable with zero transmissivity")
        s = self.scheme
        if s is Scheme.ACTIVE_HADAMARD:
            if self.m is None:
                raise ValueError("ACTIVE_HADAMARD needs m")
            if self.M is not None and self.M != 1 << self.m:
                raise ValueError(f"ACTIVE_HADAMARD with m={self.m} has M={1 << self.m}, got M={self.M}")
            object.__setattr__(self, "M", 1 << self.m)
            n_err = 2 * self.m
        elif s is Scheme.REFERENCE_PPM:
            if self.M is None or self.M < 2:
                raise ValueError("REFERENCE_PPM needs M >= 2")
            n_err = 0
        else:
            if self.m is None or self.M is None:
                raise ValueError("PASSIVE_PATTERN needs m and M")
            frame = self.frame or FrameConfig.default(self.M, self.m)
            if frame.M != self.M:
                raise ValueError(f"frame M={frame.M} disagrees with M={self.M}")
            frame.check_pattern_fits(self.m)
            if frame.use_polarization_doubling and self.mode is not DetectorMode.RESOLVED:
                raise ValueError("polarization doubling needs the polarization-resolving detector (mode B)")
            object.__setattr__(self, "frame", frame)
            n_err = self.m
        errs = self.channel.delay_phase_errors
        if errs and len(errs) != n_err:
            raise ValueError(f"{s.value} needs {n_err} delay phase errors, got {len(errs)}")

    @property
    def tx_energy(self) -> float:
        return self.n_s / self.channel.transmissivity if self.n_s else 0.0

    @property
    def alphabet_size(self) -> int:
        if self.scheme is Scheme.PASSIVE_PATTERN:
            return self.frame.n_symbols
        return self.M

    @property
    def slot_count(self) -> int:
        return self.M

    @property
    def frame_length(self) -> int:
        if self.scheme is Scheme.PASSIVE_PATTERN:
            return self.frame.frame_length
        return self.M


class SchemePlan:
    """Transmit alphabet, receiver and decoding frame for a :class:`SchemeConfig`."""

    def __init__(self, cfg: SchemeConfig):
        self.cfg = cfg
        self.symbols = self._tx_symbols(math.sqrt(cfg.tx_energy))
        self.receiver, self.in_window, self.frame = self._receiver()

    def _tx_symbols(self, amp: float) -> list[FieldState]:
        cfg = self.cfg
        if cfg.scheme is Scheme.ACTIVE_HADAMARD:
            alpha = amp / math.sqrt(1 << cfg.m)
            return [encode_bpsk(Codeword(cfg.m, b), alpha) for b in range(cfg.M)]
        if cfg.scheme is Scheme.REFERENCE_PPM:
            return [FieldState.pulse(k, V, amp) if amp else FieldState.empty() for k in range(cfg.M)]
        return [sym.pattern for sym in build_symbol_alphabet(cfg.m, cfg.frame, amp)]

    def unit_symbol(self) -> FieldState:
        """Symbol 0 at unit energy, for power statistics that do not depend on ``n_s``."""
        return self._tx_symbols(1.0)[0]

    def _receiver(self) -> tuple[Callable[[FieldState], FieldState], tuple[int, int], DecodeFrame]:
        cfg = self.cfg
        errs = cfg.channel.delay_phase_errors
        mode = cfg.mode
        if cfg.scheme is Scheme.ACTIVE_HADAMARD:
            chain: ActiveChain = synthesize_schedules(cfg.m)
            if errs:
                chain = chain.with_phase_errors(errs)
            c = chain.position_offset
            positions = {c + b: b for b in range(cfg.M)}
            return (
                lambda s: run_active_chain(s, chain),
                (0, cfg.M),
                _frame(chain.output_window(), (c, c + cfg.M), positions, mode),
            )
        if cfg.scheme is Scheme.REFERENCE_PPM:
            positions = {k: k for k in range(cfg.M)}
            return (lambda s: s), (0, cfg.M), _frame((0, cfg.M), (0, cfg.M), positions, mode)
        pchain: PassiveChain = build_passive_chain(cfg.m)
        if errs:
            pchain = pchain.with_phase_errors(errs)
        n = 1 << cfg.m
        out0 = pchain.output_bin
        in_window = (0, cfg.M + n - 1)
        out_window = (0, in_window[1] + pchain.output_bin)
        span = (out0, out0 + cfg.M)
        if cfg.frame.use_polarization_doubling:
            frame = DecodeFrame(
                out_window,
                span,
                {**{(out0 + k, H): k for k in range(cfg.M)}, **{(out0 + k, V): cfg.M + k for k in range(cfg.M)}},
                mode,
            )
        else:
            frame = _frame(out_window, span, {out0 + k: k for k in range(cfg.M)}, mode)
        return (lambda s: propagate_passive(s, pchain)), in_window, frame

    @cached_property
    def transfer_matrix(self) -> np.ndarray:
        """Receiver as a matrix from flattened input-window to output-window amplitudes."""
        lo, hi = self.in_window
        olo, ohi = self.frame.window
        n_in = hi - lo
        G = np.zeros(((ohi - olo) * 2, n_in * 2), dtype=complex)
        for j in range(n_in * 2):
            out = self.receiver(FieldState.pulse(lo + j // 2, j % 2))
            G[:, j] = out.window(olo, ohi).ravel()
        return G

    @cached_property
    def ideal_means(self) -> list[np.ndarray]:
        """Flattened per-cell count means for each symbol when the channel adds no phase noise."""
        ch = self.cfg.channel
        span = self._span_slice()
        out = []
        for s in self.symbols:
            amps = self.receive_amps(s.amps * math.sqrt(ch.transmissivity), s.start_bin)
            out.append(cell_means(amps, ch, self.cfg.mode, span).ravel())
        return out

    def _span_slice(self) -> slice:
        lo = self.frame.window[0]
        return slice(self.frame.span[0] - lo, self.frame.span[1] - lo)

    def receive_amps(self, amps: np.ndarray, start_bin: int) -> np.ndarray:
        lo, hi = self.in_window
        x = np.zeros((hi - lo, 2), dtype=complex)
        x[start_bin - lo:start_bin - lo + amps.shape[0]] = amps
        olo, ohi = self.frame.window
        return (self.transfer_matrix @ x.ravel()).reshape(ohi - olo, 2)

    def run_trial(self, rng: np.random.Generator) -> tuple[int, int]:
        """One trial on the precomputed receiver; returns ``(input, output letter code)``."""
        S = len(self.symbols)
        x = int(rng.integers(S))
        ch = self.cfg.channel
        if ch.phase_noise_sigma > 0 and self.symbols[x].n_bins:
            s = self.symbols[x]
            phi = rng.normal(0.0, ch.phase_noise_sigma, s.n_bins)
            amps = s.amps * math.sqrt(ch.transmissivity) * np.exp(1j * phi)[:, None]
            mu = cell_means(self.receive_amps(amps, s.start_bin), ch, self.cfg.mode, self._span_slice()).ravel()
        else:
            mu = self.ideal_means[x]
        counts = rng.poisson(mu)
        return x, decode_counts(counts, self.frame.lookup_flat(), rng)

    def run_trial_direct(self, rng: np.random.Generator) -> tuple[int, int]:
        """The same trial built from the field-level operations; slower, used as a cross-check."""
        S = len(self.symbols)
        x = int(rng.integers(S))
        ch = self.cfg.channel
        state = self.receiver(apply_channel(self.symbols[x], ch, rng))
        rec = detect(state, ch, self.cfg.mode, rng, self.frame.window, self.frame.span)
        out = decode(rec, self.frame, rng)
        code = {"erasure": -1, "invalid": -2}.get(out.kind.value, out.index)
        return x, code


def _frame(window, span, bin_map: dict[int, int], mode: DetectorMode) -> DecodeFrame:
    if mode is DetectorMode.SUMMED:
        return DecodeFrame(window, span, bin_map, mode)
    return DecodeFrame(window, span, {(t, p): k for t, k in bin_map.items() for p in (H, V)}, mode)


@dataclass
class LinkReport:
    scheme: Scheme
    m: int | None
    M: int
    n_s: float
    n_trials: int
    seed: int
    joint: np.ndarray  # (S, S + 2) counts: symbols, erasure, invalid
    par: float

    @property
    def alphabet_size(self) -> int:
        return self.joint.shape[0]

    def _rate(self, count: int) -> float:
        return count / self.n_trials

    @property
    def n_correct(self) -> int:
        return int(np.trace(self.joint[:, : self.alphabet_size]))

    @property
    def n_erasure(self) -> int:
        return int(self.joint[:, -2].sum())

    @property
    def n_invalid(self) -> int:
        return int(self.joint[:, -1].sum())

    @property
    def n_error(self) -> int:
        return self.n_trials - self.n_correct - self.n_erasure - self.n_invalid

    @property
    def symbol_error_rate(self) -> float:
        return self._rate(self.n_error)

    @property
    def erasure_rate(self) -> float:
        return self._rate(self.n_erasure)

    @property
    def invalid_rate(self) -> float:
        return self._rate(self.n_invalid)

    @property
    def correct_rate(self) -> float:
        return self._rate(self.n_correct)

    def standard_error(self, rate: float) -> float:
        return math.sqrt(rate * (1.0 - rate) / self.n_trials)

    @property
    def mi_bits_per_symbol(self) -> float:
        return plugin_mutual_information(self.joint)

    @property
    def pie_bits_per_photon(self) -> float:
        return self.mi_bits_per_symbol / self.n_s if self.n_s > 0 else float("nan")

    def csv_row(self) -> list[str]:
        return [
            self.scheme.value,
            "" if self.m is None else str(self.m),
            str(self.M),
            _fmt(self.n_s),
            str(self.n_trials),
            _fmt(self.symbol_error_rate),
            _fmt(self.erasure_rate),
            _fmt(self.invalid_rate),
            _fmt(self.mi_bits_per_symbol),
            _fmt(self.pie_bits_per_photon),
            _fmt(self.par),
            str(self.seed),
        ]

    def to_dict(self) -> dict:
        pie = self.pie_bits_per_photon
        return {
            "scheme": self.scheme.value,
            "m": self.m,
            "M": self.M,
            "N_s": self.n_s,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "ser": self.symbol_error_rate,
            "erasure": self.erasure_rate,
            "invalid": self.invalid_rate,
            "correct": self.correct_rate,
            "mi_bits": self.mi_bits_per_symbol,
            "pie": None if math.isnan(pie) else pie,
            "par": self.par,
            "stderr": {
                "ser": self.standard_error(self.symbol_error_rate),
                "erasure": self.standard_error(self.erasure_rate),
                "invalid": self.standard_error(self.invalid_rate),
                "correct": self.standard_error(self.correct_rate),
            },
        }


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def plugin_mutual_information(joint: np.ndarray) -> float:
    """Maximum-likelihood (plug-in) mutual information, in bits, of a count table."""
    n = joint.sum()
    if n == 0:
        return 0.0
    p = joint / n
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(max(np.sum(p[nz] * np.log2(p[nz] / (px @ py)[nz])), 0.0))


def _run_chunk(plan: SchemePlan, seed: int, lo: int, hi: int) -> np.ndarray:
    S = len(plan.symbols)
    joint = np.zeros((S, S + 2), dtype=np.int64)
    for i in range(lo, hi):
        x, y = plan.run_trial(trial_rng(seed, i))
        joint[x, y if y >= 0 else S + (-y - 1)] += 1
    return joint


def run_trials(cfg: SchemeConfig, n_trials: int, master_seed: int, workers: int = 1) -> LinkReport:
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    plan = SchemePlan(cfg)
    _ = plan.ideal_means  # build shared tables before any worker starts
    bounds = [(lo, min(lo + CHUNK, n_trials)) for lo in range(0, n_trials, CHUNK)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda b: _run_chunk(plan, master_seed, *b), bounds))
    else:
        parts = [_run_chunk(plan, master_seed, *b) for b in bounds]
    joint = np.sum(parts, axis=0)
    par = peak_to_average(plan.unit_symbol(), cfg.frame_length)
    return LinkReport(cfg.scheme, cfg.m, cfg.M, cfg.n_s, n_trials, master_seed, joint, par)


def analytic_ppm_mi(M: int, n_s: float) -> float:
    """Mutual information of ideal M-ary PPM with direct detection: an erasure channel."""
    if M < 2 or n_s < 0:
        raise ValueError("need M >= 2 and n_s >= 0")
    return -math.expm1(-n_s) * math.log2(M)


def compare_par(cfgs: Sequence[SchemeConfig], frame_len: int | None = None) -> list[dict]:
    """Peak-to-average power of each transmitted symbol over one common frame.

    The default frame is the largest slot count among the configurations, so
    a 16-ary PPM frame hosts the other schemes' symbols.
    """
    if not cfgs:
        raise ValueError("need at least one configuration")
    L = frame_len or max(c.slot_count for c in cfgs)
    rows = []
    for c in cfgs:
        sym = SchemePlan(c).unit_symbol()
        rows.append({"scheme": c.scheme.value, "m": c.m, "M": c.M, "frame_len": L, "par": peak_to_average(sym, L)})
    return rows


def channel_equivalence_pvalue(a: LinkReport, b: LinkReport) -> float:
    """Two-sample chi-square test that two reports share per-input output distributions."""
    if a.joint.shape != b.joint.shape:
        raise ValueError("reports have different alphabets")
    stat, dof = 0.0, 0
    for x in range(a.joint.shape[0]):
        table = np.vstack([a.joint[x], b.joint[x]])
        table = table[:, table.sum(axis=0) > 0]
        if table.shape[1] < 2:
            continue
        res = stats.chi2_contingency(table, correction=False)
        stat += res.statistic
        dof += res.dof
    return 1.0 if dof == 0 else float(stats.chi2.sf(stat, dof))


def reports_to_csv(reports: Sequence[LinkReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def reports_to_json(reports: Sequence[LinkReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=1, sort_keys=True)
