"""Time-binned, dual-polarization coherent field amplitudes.

A field is stored densely over a window of bins starting at ``start_bin``.
Column 0 holds the horizontal (H) amplitude and column 1 the vertical (V)
amplitude, both in units of sqrt(photons).  The bin spacing is normalized
to one, so every delay is an integer number of bins.

All operations return new states; inputs are never modified.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

H = 0
V = 1
POL_NAMES = ("H", "V")

UNITARY_ATOL = 1e-12


def pol_index(pol: str | int) -> int:
    if isinstance(pol, str):
        try:
            return POL_NAMES.index(pol.upper())
        except ValueError:
            raise ValueError(f"unknown polarization {pol!r}, expected 'H' or 'V'") from None
    if pol not in (H, V):
        raise ValueError(f"unknown polarization index {pol!r}")
    return int(pol)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FieldState:
    start_bin: int
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex, copy=True)
        if amps.size == 0:
            amps = amps.reshape(0, 2)
        if amps.ndim != 2 or amps.shape[1] != 2:
            raise ValueError(f"amps must have shape (n_bins, 2), got {amps.shape}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        object.__setattr__(self, "start_bin", int(self.start_bin))
        object.__setattr__(self, "amps", _frozen(amps))

    @classmethod
    def empty(cls) -> "FieldState":
        return cls(0, np.zeros((0, 2), dtype=complex))

    @classmethod
    def pulse(cls, t: int, pol: str | int, amplitude: complex = 1.0) -> "FieldState":
        amps = np.zeros((1, 2), dtype=complex)
        amps[0, pol_index(pol)] = amplitude
        return cls(t, amps)

    @classmethod
    def from_components(cls, comps: Mapping[tuple[int, str | int], complex]) -> "FieldState":
        """Build a state from ``{(t, pol): amplitude}``."""
        if not comps:
            return cls.empty()
        ts = [t for t, _ in comps]
        lo, hi = min(ts), max(ts)
        amps = np.zeros((hi - lo + 1, 2), dtype=complex)
        for (t, pol), a in comps.items():
            amps[t - lo, pol_index(pol)] += a
        return cls(lo, amps)

    @property
    def n_bins(self) -> int:
        return self.amps.shape[0]

    @property
    def stop_bin(self) -> int:
        return self.start_bin + self.n_bins

    def bin_energies(self) -> np.ndarray:
        return np.sum(np.abs(self.amps) ** 2, axis=1)

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Dense ``(hi - lo, 2)`` copy of the amplitudes over bins ``[lo, hi)``."""
        out = np.zeros((max(hi - lo, 0), 2), dtype=complex)
        a, b = max(lo, self.start_bin), min(hi, self.stop_bin)
        if a < b:
            out[a - lo:b - lo] = self.amps[a - self.start_bin:b - self.start_bin]
        return out

    def __add__(self, other: "FieldState") -> "FieldState":
        if not isinstance(other, FieldState):
            return NotImplemented
        if self.n_bins == 0:
            return other
        if other.n_bins == 0:
            return self
        lo = min(self.start_bin, other.start_bin)
        hi = max(self.stop_bin, other.stop_bin)
        return FieldState(lo, self.window(lo, hi) + other.window(lo, hi))

    def __mul__(self, c: complex) -> "FieldState":
        return FieldState(self.start_bin, self.amps * c)

    __rmul__ = __mul__

    def __sub__(self, other: "FieldState") -> "FieldState":
        return self + (-1.0) * other

    def __repr__(self) -> str:
        return f"FieldState(start_bin={self.start_bin}, n_bins={self.n_bins}, energy={total_energy(self):.6g})"


def total_energy(state: FieldState) -> float:
    return float(np.sum(np.abs(state.amps) ** 2))


def shift(state: FieldState, delta: int) -> FieldState:
    return FieldState(state.start_bin + int(delta), state.amps)


def overlap(a: FieldState, b: FieldState) -> complex:
    """Inner product sum(conj(a) * b) over aligned bins."""
    lo, hi = max(a.start_bin, b.start_bin), min(a.stop_bin, b.stop_bin)
    if lo >= hi:
        return 0j
    return complex(np.vdot(a.window(lo, hi), b.window(lo, hi)))


def normalize_window(state: FieldState, atol: float = 0.0) -> FieldState:
    """Trim leading and trailing bins whose energy is <= ``atol``."""
    e = state.bin_energies()
    nz = np.flatnonzero(e > atol)
    if nz.size == 0:
        return FieldState.empty()
    return FieldState(state.start_bin + nz[0], state.amps[nz[0]:nz[-1] + 1])


def max_abs_diff(a: FieldState, b: FieldState) -> float:
    lo = min(a.start_bin, b.start_bin)
    hi = max(a.stop_bin, b.stop_bin)
    if lo >= hi:
        return 0.0
    return float(np.max(np.abs(a.window(lo, hi) - b.window(lo, hi)), initial=0.0))


@dataclass(frozen=True, eq=False)
class PolTransform:
    """A unitary 2x2 matrix acting on (H, V) amplitude pairs."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=complex, copy=True)
        if u.shape != (2, 2):
            raise ValueError(f"polarization transform must be 2x2, got {u.shape}")
        if not np.allclose(u.conj().T @ u, np.eye(2), rtol=0.0, atol=UNITARY_ATOL):
            raise ValueError("polarization transform is not unitary")
        object.__setattr__(self, "u", _frozen(u))

    @property
    def inverse(self) -> "PolTransform":
        return PolTransform(self.u.conj().T)


IDENTITY = PolTransform(np.eye(2))
# Maps the +45 diagonal (1, 1) onto V and the -45 diagonal (1, -1) onto H.
WAVEPLATE = PolTransform(np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0))


class SwitchAction(enum.Enum):
    IDENTITY = "IDENTITY"
    SWAP = "SWAP"


@dataclass(frozen=True)
class SwitchSchedule:
    """Per-bin H<->V swaps; bins not listed are left alone."""

    swap_bins: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "swap_bins", frozenset(int(t) for t in self.swap_bins))

    @classmethod
    def from_mapping(cls, actions: Mapping[int, SwitchAction | str]) -> "SwitchSchedule":
        return cls(frozenset(t for t, a in actions.items() if SwitchAction(a) is SwitchAction.SWAP))

    def action(self, t: int) -> SwitchAction:
        return SwitchAction.SWAP if t in self.swap_bins else SwitchAction.IDENTITY

    def shifted(self, delta: int) -> "SwitchSchedule":
        return SwitchSchedule(frozenset(t + delta for t in self.swap_bins))

    def sorted_bins(self) -> list[int]:
        return sorted(self.swap_bins)


def apply_uniform(state: FieldState, t: PolTransform) -> FieldState:
    if not isinstance(t, PolTransform):
        t = PolTransform(t)
    return FieldState(state.start_bin, state.amps @ t.u.T)


def apply_schedule(state: FieldState, s: SwitchSchedule) -> FieldState:
    if not s.swap_bins or state.n_bins == 0:
        return state
    idx = np.fromiter(s.swap_bins, dtype=np.int64, count=len(s.swap_bins)) - state.start_bin
    idx = idx[(idx >= 0) & (idx < state.n_bins)]
    amps = state.amps.copy()
    amps[idx] = amps[idx][:, ::-1]
    return FieldState(state.start_bin, amps)


def _move_pol(state: FieldState, pol: int, offset: int, phase: float) -> FieldState:
    if state.n_bins == 0:
        return state
    lo = min(state.start_bin, state.start_bin + offset)
    hi = max(state.stop_bin, state.stop_bin + offset)
    amps = np.zeros((hi - lo, 2), dtype=complex)
    keep = 1 - pol
    s0 = state.start_bin - lo
    amps[s0:s0 + state.n_bins, keep] = state.amps[:, keep]
    amps[s0 + offset:s0 + offset + state.n_bins, pol] = state.amps[:, pol] * np.exp(1j * phase)
    return FieldState(lo, amps)


def apply_pol_delay(state: FieldState, T_bins: int, phase_error: float = 0.0) -> FieldState:
    """Delay the H component by ``T_bins`` bins, picking up ``exp(i*phase_error)``."""
    if int(T_bins) != T_bins or T_bins < 1:
        raise ValueError(f"delay must be a positive integer number of bins, got {T_bins!r}")
    return _move_pol(state, H, int(T_bins), phase_error)


def apply_pol_advance(state: FieldState, T_bins: int, phase_error: float = 0.0) -> FieldState:
    """Inverse of :func:`apply_pol_delay`: move H earlier by ``T_bins`` with phase ``exp(i*phase_error)``."""
    if int(T_bins) != T_bins or T_bins < 1:
        raise ValueError(f"advance must be a positive integer number of bins, got {T_bins!r}")
    return _move_pol(state, H, -int(T_bins), phase_error)


def state_to_dict(state: FieldState) -> dict:
    bins = []
    for i, (h, v) in enumerate(state.amps):
        if h != 0 or v != 0:
            bins.append({
                "t": state.start_bin + i,
                "h": [float(h.real), float(h.imag)],
                "v": [float(v.real), float(v.imag)],
            })
    return {"start_bin": state.start_bin, "bins": bins}


def state_from_dict(d: Mapping) -> FieldState:
    comps: dict[tuple[int, int], complex] = {}
    for b in d["bins"]:
        comps[(int(b["t"]), H)] = complex(*b["h"])
        comps[(int(b["t"]), V)] = complex(*b["v"])
    if not comps:
        return FieldState.empty()
    st = FieldState.from_components(comps)
    # keep the recorded start when it precedes the first nonzero bin
    start = int(d.get("start_bin", st.start_bin))
    if start < st.start_bin:
        return FieldState(start, st.window(start, st.stop_bin))
    return st


def state_to_json(state: FieldState) -> str:
    return json.dumps(state_to_dict(state), sort_keys=True)


def state_from_json(text: str) -> FieldState:
    return state_from_dict(json.loads(text))

