"""Symbol mapping and discrete-time synthesis for all waveform families.

Block ``l`` of a packet is the ``Q``-sample vector

    s_l[n] = p[n] / sqrt(N) * sum_k d~_{k,l} exp(j 2 pi k M_grid n / Q)

and the packet is the overlap-add of the blocks at a stride of ``N_s``
samples, scaled by ``sqrt(P * N_s)``.  With unit-energy pulses and
unit-power symbols each block carries unit energy, so the average sample
power is ``P`` (the total signal power, for any ``N``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, FrameConfig, Scheme
from .constellation import Constellation, pam, qam
from .pulses import PrototypePulse


def constellation_for(config: FrameConfig) -> Constellation:
    """QAM alphabet, or its sqrt(M)-PAM rail for OQAM schemes."""
    M = config.constellation_order
    if config.scheme.is_oqam:
        side = int(round(np.sqrt(M)))
        if side * side != M:
            raise ConfigError(f"OQAM needs a square constellation order, got {M}")
        return pam(side)
    return qam(M)


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """Data symbols ``a``, transmitted symbols ``d`` and rotated symbols ``d_rot``.

    Arrays are ``N x (2G+1)``; column ``j`` is slot ``l = j - G``.
    """

    a: np.ndarray
    d: np.ndarray
    d_rot: np.ndarray
    config: FrameConfig

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.a.shape[1]) - self.config.G

    @property
    def data_columns(self) -> np.ndarray:
        """Columns that carry fresh data (everything except an SCM cyclic prefix)."""
        cols = np.arange(self.a.shape[1])
        if self.config.scheme is Scheme.SCM:
            return cols[self.config.G_cp:]
        return cols

    def with_transmitted(self, d: np.ndarray) -> "SymbolGrid":
        return replace(self, d=d, d_rot=d * rotation(self.config, self.d.shape))


def oqam_phase(shape, G: int) -> np.ndarray:
    """``j**(k + l)`` on an ``N x (2G+1)`` grid."""
    k = np.arange(shape[0])[:, None]
    l = np.arange(shape[1])[None, :] - G
    return (1j) ** ((k + l) % 4)


def rotation(config: FrameConfig, shape) -> np.ndarray:
    """``exp(j 2 pi delta_f delta_t k l)``; identically 1 when the density is an integer."""
    k = np.arange(shape[0])[:, None]
    l = np.arange(shape[1])[None, :] - config.G
    return np.exp(2j * np.pi * ((config.density * k * l) % 1.0))


def data_bit_count(config: FrameConfig) -> int:
    cols = config.n_slots - (config.G_cp if config.scheme is Scheme.SCM else 0)
    return config.N * cols * config.bits_per_symbol


def map_symbols(bits, config: FrameConfig) -> SymbolGrid:
    """Gray-map a bit stream onto the lattice.

    Bits fill the data columns subcarrier-first.  For SCM the first ``G_cp``
    columns are a cyclic prefix copying the last ``G_cp`` columns.
    """
    alphabet = constellation_for(config)
    bits = np.asarray(bits).ravel()
    need = data_bit_count(config)
    if bits.size != need:
        raise ValueError(f"expected {need} bits for this frame, got {bits.size}")
    sym = alphabet.map(bits)
    N, S = config.N, config.n_slots
    a = np.zeros((N, S), dtype=float if alphabet.real else complex)
    if config.scheme is Scheme.SCM and config.G_cp:
        a[:, config.G_cp:] = sym.reshape(S - config.G_cp, N).T
        a[:, :config.G_cp] = a[:, S - config.G_cp:]
    else:
        a[:] = sym.reshape(S, N).T
    d = a * oqam_phase(a.shape, config.G) if config.scheme.is_oqam else a.astype(complex)
    return SymbolGrid(a=a, d=d, d_rot=d * rotation(config, a.shape), config=config)


def random_grid(config: FrameConfig, rng: np.random.Generator) -> SymbolGrid:
    bits = rng.integers(0, 2, size=data_bit_count(config))
    return map_symbols(bits, config)


def pulse_bank(pulse: PrototypePulse, config: FrameConfig) -> np.ndarray:
    """Time-domain filter bank ``P_t`` (``Q x N``): ``p[n] exp(j 2 pi k M n / Q)``."""
    n = np.arange(config.Q)[:, None]
    k = np.arange(config.N)[None, :]
    return pulse.samples[:, None] * np.exp(2j * np.pi * ((k * config.M_grid * n) % config.Q) / config.Q)


def _check_inputs(pulse: PrototypePulse, config: FrameConfig) -> None:
    if pulse.Q != config.Q:
        raise ValueError(f"pulse length {pulse.Q} does not match Q={config.Q}")
    if abs(pulse.energy - 1.0) > 1e-9:
        raise ValueError(f"pulse energy {pulse.energy:.12g} is not 1")
    if config.N * config.M_grid > config.Q:
        raise ConfigError("N*M_grid exceeds Q: subcarriers do not fit on the DFT grid")


def synthesize_block(d_rot, pulse: PrototypePulse, config: FrameConfig, method: str = "idft") -> np.ndarray:
    """One ``Q``-sample block from the rotated symbols of a slot.

    ``method`` selects the windowed-IDFT route (default), the explicit filter
    bank (``"filterbank"``) or the frequency-domain bank ``F_Q^H P_f``
    (``"frequency"``).  ``d_rot`` may be a length-``N`` vector or an
    ``N x B`` matrix of several slots.
    """
    _check_inputs(pulse, config)
    d_rot = np.asarray(d_rot, dtype=complex)
    if d_rot.shape[0] != config.N:
        raise ValueError(f"expected {config.N} subcarrier symbols, got {d_rot.shape[0]}")
    N, Q, M = config.N, config.Q, config.M_grid
    if method == "idft":
        spec = np.zeros((Q,) + d_rot.shape[1:], dtype=complex)
        spec[np.arange(N) * M] = d_rot
        multicarrier = np.fft.ifft(spec, axis=0) * Q
        p = pulse.samples.reshape((Q,) + (1,) * (d_rot.ndim - 1))
        return p * multicarrier / np.sqrt(N)
    if method == "filterbank":
        return pulse_bank(pulse, config) @ d_rot / np.sqrt(N)
    if method == "frequency":
        P_f = np.fft.fft(pulse_bank(pulse, config), axis=0, norm="ortho")
        return np.fft.ifft(P_f @ d_rot, axis=0, norm="ortho") / np.sqrt(N)
    raise ValueError(f"unknown synthesis method {method!r}")


def frame_amplitude(config: FrameConfig) -> float:
    return float(np.sqrt(config.power * config.N_s))


def overlap_add(blocks: np.ndarray, stride: int) -> np.ndarray:
    """Overlap-add the columns of a ``Q x B`` matrix at the given stride."""
    Q, B = blocks.shape
    R = -(-Q // stride)
    padded = np.zeros((R * stride, B), dtype=blocks.dtype)
    padded[:Q] = blocks
    out = np.zeros((B + R - 1) * stride, dtype=blocks.dtype)
    for r in range(R):
        seg = padded[r * stride:(r + 1) * stride].T.ravel()
        out[r * stride:r * stride + B * stride] += seg
    return out[:(B - 1) * stride + Q]


def synthesize_frame(grid: SymbolGrid, pulse: PrototypePulse, config: FrameConfig | None = None) -> np.ndarray:
    """Transmitted sample stream of ``(2G+1)*N_s + Q - N_s`` samples."""
    config = config or grid.config
    if config.stream_length > config.max_frame_samples:
        raise ConfigError(
            f"frame of {config.stream_length} samples exceeds max_frame_samples={config.max_frame_samples}"
        )
    if grid.d_rot.shape != (config.N, config.n_slots):
        raise ValueError(f"grid shape {grid.d_rot.shape} does not match ({config.N}, {config.n_slots})")
    blocks = synthesize_block(grid.d_rot, pulse, config)
    return frame_amplitude(config) * overlap_add(blocks, config.N_s)


def apply_evm(x, evm_fraction: float, rng_seed=None):
    """Perturb transmitted symbols with circular Gaussian error of RMS ``evm_fraction``.

    A :class:`SymbolGrid` is perturbed on ``d`` relative to the unit symbol
    power of the alphabet; a plain array relative to its own RMS value.
    """
    if evm_fraction < 0:
        raise ValueError(f"evm_fraction must be >= 0, got {evm_fraction}")
    if evm_fraction == 0:
        return x
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if isinstance(x, SymbolGrid):
        e = evm_fraction * _cn(rng, x.d.shape)
        return x.with_transmitted(x.d + e)
    x = np.asarray(x)
    rms = np.sqrt(np.mean(np.abs(x) ** 2))
    return x + evm_fraction * rms * _cn(rng, x.shape)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
