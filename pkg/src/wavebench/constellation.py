"""Gray-mapped unit-power PAM and square QAM alphabets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _gray_inverse(g: np.ndarray) -> np.ndarray:
    i = g.copy()
    shift = g >> 1
    while np.any(shift):
        i ^= shift
        shift >>= 1
    return i


def _bits_to_int(bits: np.ndarray, width: int) -> np.ndarray:
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width) @ weights


@dataclass(frozen=True)
class Constellation:
    """Ordered symbol alphabet; ``points[i]`` carries the bit label ``i`` (MSB first)."""

    points: np.ndarray
    real: bool

    @property
    def order(self) -> int:
        return len(self.points)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))

    def map(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64).ravel()
        if bits.size % self.bits_per_symbol:
            raise ValueError(
                f"bit count {bits.size} is not a multiple of {self.bits_per_symbol} bits/symbol"
            )
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0/1")
        return self.points[_bits_to_int(bits, self.bits_per_symbol)]


@lru_cache(maxsize=None)
def pam(order: int) -> Constellation:
    if order < 2 or order & (order - 1):
        raise ValueError(f"PAM order must be a power of two, got {order}")
    labels = np.arange(order)
    level = _gray_inverse(labels)
    amp = 2.0 * level - (order - 1)
    amp /= math.sqrt((order**2 - 1) / 3.0)
    return Constellation(amp.astype(float), real=True)


@lru_cache(maxsize=None)
def qam(order: int) -> Constellation:
    bits = int(round(math.log2(order))) if order > 0 else 0
    if order < 4 or 2**bits != order or bits % 2:
        raise ValueError(f"square QAM order must be a power of 4, got {order}")
    side = pam(2**(bits // 2)).points
    # first half of the label drives the in-phase rail
    pts = (side[:, None] + 1j * side[None, :]).ravel() / math.sqrt(2.0)
    return Constellation(pts, real=False)
