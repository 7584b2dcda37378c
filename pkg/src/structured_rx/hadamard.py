"""Hadamard codewords over the BPSK constellation.

A codeword of length ``2**m`` is labelled by an ``m``-bit string
``b_{m-1} ... b_1 b_0``.  Bit ``b_k = 1`` flips the sign between the two
halves of every block of length ``2**(k+1)``, so entry ``t`` of the row is
``(-1) ** popcount(bits & t)``; this is the Sylvester-ordered Hadamard row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import V, FieldState

MAX_M = 16


class NotASymbol(ValueError):
    """A detection position that does not correspond to any codeword."""


@dataclass(frozen=True, order=True)
class Codeword:
    m: int
    bits: int

    def __post_init__(self):
        if not 1 <= self.m <= MAX_M:
            raise ValueError(f"m must lie in [1, {MAX_M}], got {self.m}")
        if not 0 <= self.bits < (1 << self.m):
            raise ValueError(f"bits={self.bits} out of range for m={self.m}")

    @property
    def length(self) -> int:
        return 1 << self.m

    def bit(self, k: int) -> int:
        return (self.bits >> k) & 1

    def __str__(self) -> str:
        return format(self.bits, f"0{self.m}b")

    @classmethod
    def parse(cls, s: str) -> "Codeword":
        """Parse an MSB-first binary string such as ``"101"``."""
        return cls(len(s), int(s, 2))


def all_codewords(m: int) -> list[Codeword]:
    return [Codeword(m, b) for b in range(1 << m)]


def codeword_signs(c: Codeword) -> np.ndarray:
    t = np.arange(c.length, dtype=np.uint32)
    parity = np.bitwise_count(t & np.uint32(c.bits)) & 1
    return (1 - 2 * parity.astype(np.int8)).astype(np.int8)


def encode_bpsk(c: Codeword, alpha: complex) -> FieldState:
    """V-polarized pulse train with amplitude ``sign_t * alpha`` in bins ``0 .. 2**m - 1``."""
    if alpha == 0:
        return FieldState.empty()
    amps = np.zeros((c.length, 2), dtype=complex)
    amps[:, V] = codeword_signs(c) * complex(alpha)
    return FieldState(0, amps)


def decode_position(bin: int, m: int, offset: int) -> Codeword:
    bits = bin - offset
    if not 0 <= bits < (1 << m):
        raise NotASymbol(f"bin {bin} is outside the symbol range [{offset}, {offset + (1 << m)})")
    return Codeword(m, bits)
