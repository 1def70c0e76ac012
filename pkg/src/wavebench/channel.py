"""Doubly-selective tapped-delay-line channels.

Fading processes use the Zheng-Xiao sum-of-sinusoids generator.  Its random
phases and angles are drawn in a fixed order that does not depend on the
sample period or the duration, so one seed describes one physical channel
that can be sampled on any simulation grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

ETU_DELAYS_NS = (0, 50, 120, 200, 230, 500, 1600, 2300, 5000)
ETU_POWERS_DB = (-1, -1, -1, 0, 0, 0, -3, -5, -7)

N_SINUSOIDS = 16


@dataclass(frozen=True)
class ChannelProfile:
    """Power-delay profile; ``tap_powers`` are normalized to unit sum on construction.

    With ``fading=False`` every tap is the deterministic gain ``sqrt(power)``.
    """

    tap_delays: tuple
    tap_powers: tuple
    doppler_hz: float = 0.0
    sample_period: float = 1.0 / 1.92e6
    fading: bool = True

    def __post_init__(self):
        delays = np.asarray(self.tap_delays, dtype=float).ravel()
        powers = np.asarray(self.tap_powers, dtype=float).ravel()
        if delays.size == 0:
            raise ValueError("channel profile has no taps")
        if delays.size != powers.size:
            raise ValueError(f"{delays.size} delays but {powers.size} powers")
        if np.any(delays < 0) or np.any(np.diff(delays) <= 0):
            raise ValueError("tap delays must be non-negative and strictly increasing")
        if np.any(powers <= 0):
            raise ValueError("tap powers must be positive")
        if self.doppler_hz < 0 or self.sample_period <= 0:
            raise ValueError("doppler_hz must be >= 0 and sample_period > 0")
        object.__setattr__(self, "tap_delays", tuple(delays.tolist()))
        object.__setattr__(self, "tap_powers", tuple((powers / powers.sum()).tolist()))

    @classmethod
    def from_db(cls, delays_ns, powers_db, doppler_hz=0.0, sample_period=1.0 / 1.92e6):
        delays = np.asarray(delays_ns, dtype=float) * 1e-9
        powers = 10.0 ** (np.asarray(powers_db, dtype=float) / 10.0)
        return cls(tuple(delays), tuple(powers), float(doppler_hz), float(sample_period))

    @property
    def delay_indices(self) -> np.ndarray:
        return np.rint(np.asarray(self.tap_delays) / self.sample_period).astype(int)

    @property
    def span_samples(self) -> int:
        return int(self.delay_indices.max()) + 1

    def with_(self, **kw) -> "ChannelProfile":
        return replace(self, **kw)


def etu(doppler_hz: float = 0.0, sample_period: float = 1.0 / 1.92e6) -> ChannelProfile:
    """Extended Typical Urban profile."""
    return ChannelProfile.from_db(ETU_DELAYS_NS, ETU_POWERS_DB, doppler_hz, sample_period)


def awgn_profile(sample_period: float = 1.0 / 1.92e6) -> ChannelProfile:
    """Single unit tap at zero delay."""
    return ChannelProfile((0.0,), (1.0,), 0.0, sample_period, fading=False)


NAMED_PROFILES = {"ETU": etu, "AWGN": lambda doppler_hz=0.0, sample_period=1.0 / 1.92e6: awgn_profile(sample_period)}


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Tap gains ``taps[k, i]`` at sample time ``i`` for delay ``delay_indices[k]``."""

    taps: np.ndarray
    delay_indices: np.ndarray
    profile: ChannelProfile = field(repr=False)

    def __post_init__(self):
        self.taps.setflags(write=False)
        self.delay_indices.setflags(write=False)

    @property
    def span_samples(self) -> int:
        return int(self.delay_indices.max()) + 1

    @property
    def duration(self) -> int:
        return self.taps.shape[1]

    @property
    def static(self) -> bool:
        return self.profile.doppler_hz == 0.0 or not self.profile.fading

    def impulse_response(self, i: int = 0) -> np.ndarray:
        """``h[i, j]`` for ``j = 0..span-1`` at sample time ``i``."""
        col = self._column(i)
        h = np.zeros(self.span_samples, dtype=complex)
        np.add.at(h, self.delay_indices, self.taps[:, col])
        return h

    def _column(self, i):
        if self.static:
            return np.zeros_like(i) if isinstance(i, np.ndarray) else 0
        if np.any(np.asarray(i) < 0) or np.any(np.asarray(i) >= self.duration):
            raise IndexError(f"sample time outside the realization (duration {self.duration})")
        return i

    def apply(self, x) -> np.ndarray:
        """Channel output ``y[n] = sum_k c[k, n] x[n - j_k]`` of length ``len(x) + span - 1``."""
        x = np.asarray(x, dtype=complex)
        n_out = x.size + self.span_samples - 1
        if self.static:
            return fftconvolve(x, self.impulse_response())
        if n_out > self.duration:
            raise ValueError(f"realization covers {self.duration} samples, {n_out} needed")
        y = np.zeros(n_out, dtype=complex)
        for k, j in enumerate(self.delay_indices):
            y[j:j + x.size] += self.taps[k, j:j + x.size] * x
        return y


def _sos_parameters(profile: ChannelProfile, rng: np.random.Generator):
    K, M = len(profile.tap_delays), N_SINUSOIDS
    u = rng.uniform(-np.pi, np.pi, size=(K, 1 + 2 * M))
    return u[:, :1], u[:, 1:1 + M], u[:, 1 + M:]


def _as_generator(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def realize_channel(profile: ChannelProfile, duration_samples: int, rng_seed=None) -> ChannelRealization:
    """Draw one realization covering sample times ``0..duration_samples-1``."""
    if duration_samples <= 0:
        raise ValueError(f"duration_samples must be positive, got {duration_samples}")
    rng = _as_generator(rng_seed)
    if not profile.fading:
        gains = np.sqrt(np.asarray(profile.tap_powers, dtype=complex))[:, None]
        return ChannelRealization(np.repeat(gains, duration_samples, axis=1), profile.delay_indices.copy(), profile)
    theta, phi, varphi = _sos_parameters(profile, rng)
    M = N_SINUSOIDS
    n = np.arange(1, M + 1)[None, :]
    alpha = (2 * np.pi * n - np.pi + theta) / (4 * M)
    wd = 2 * np.pi * profile.doppler_hz
    amp = np.sqrt(np.asarray(profile.tap_powers))[:, None]
    steps = 1 if profile.doppler_hz == 0 else duration_samples
    t = np.arange(steps) * profile.sample_period
    taps = np.empty((len(amp), duration_samples), dtype=complex)
    # chunk over time to bound memory on long frames
    for lo in range(0, steps, 8192):
        tt = t[lo:lo + 8192][None, None, :]
        xc = np.cos(wd * tt * np.cos(alpha)[..., None] + phi[..., None]).sum(axis=1)
        xs = np.cos(wd * tt * np.sin(alpha)[..., None] + varphi[..., None]).sum(axis=1)
        taps[:, lo:lo + tt.shape[-1]] = amp * np.sqrt(1.0 / M) * (xc + 1j * xs)
    if steps == 1:
        taps[:] = taps[:, :1]
    return ChannelRealization(taps, profile.delay_indices.copy(), profile)


def channel_matrix(real: ChannelRealization, block_index: int, Q: int, N_s: int, history: int = 0) -> np.ndarray:
    """Time-domain block matrix ``[H]_{i, j} = h[l*N_s + i, i - j]``.

    Rows cover output samples ``l*N_s .. l*N_s + Q - 1``.  ``history`` extra
    leading columns map the input samples just before the block (column
    ``c`` is input sample ``l*N_s - history + c``); ``history = 0`` gives
    the square ``Q x Q`` matrix.
    """
    start = block_index * N_s
    if block_index < 0 or (not real.static and start + Q > real.duration):
        raise IndexError(f"block {block_index} outside the realization ({real.duration} samples)")
    H = np.zeros((Q, Q + history), dtype=complex)
    rows = np.arange(Q)
    cols_t = real._column(start + rows)
    for k, j in enumerate(real.delay_indices):
        c = rows - j + history
        ok = c >= 0
        np.add.at(H, (rows[ok], c[ok]), real.taps[k, cols_t[ok] if isinstance(cols_t, np.ndarray) else cols_t])
    return H


def make_mimo_channels(U: int, N_BS: int, profile: ChannelProfile, rng_seed=None) -> np.ndarray:
    """``U x N_BS`` object array of independent time-invariant realizations.

    Realizations are drawn in row-major order from one generator, so entry
    ``(0, 0)`` equals ``realize_channel`` with the same seed.
    """
    if U < 1 or N_BS < 1:
        raise ValueError(f"U and N_BS must be >= 1 (got {U}, {N_BS})")
    static = profile.with_(doppler_hz=0.0)
    rng = _as_generator(rng_seed)
    out = np.empty((U, N_BS), dtype=object)
    for u in range(U):
        for n in range(N_BS):
            out[u, n] = realize_channel(static, 1, rng)
    return out
