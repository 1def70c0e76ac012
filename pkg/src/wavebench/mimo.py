"""Massive-MIMO single-carrier (FTN) uplink with matched-filter combining.

User ``u`` sends ``x_u = sqrt(P N_s / N_BS) sum_l d_{u,l} p[n - l N_s]`` with
``N_s = delta_t * N_T`` samples between symbols (``N_T`` samples per Nyquist
time ``T``).  Antenna ``n`` receives ``sum_u x_u * h_{u,n} + w_n``.  The
receiver for user ``u`` correlates every antenna with the received pulse
``z_{u,n} = p * h_{u,n}``, sums over antennas and samples at the symbol
instants.  Outputs are divided by ``sqrt(P N_s / N_BS) * N_BS`` so the
matched-filter peak ``g_u[0]`` is close to one for any array size.

The signal-to-noise ratio is ``P T / N0``, i.e. a per-sample noise
variance of ``P N_T / snr``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve

from .ase import AseCurve, AsePoint, _ci_half_width, gaussian_information, mismatched_information
from .channel import ChannelProfile, etu, make_mimo_channels
from .constellation import qam
from .pulses import PulseKind, make_pulse

TRUNCATION_DB = 60.0


class UplinkEqualizer(str, enum.Enum):
    ONE_TAP = "ONE_TAP"
    FULL_ISI = "FULL_ISI"


@dataclass(frozen=True)
class UplinkScenario:
    name: str = "uplink"
    U: int = 4
    N_BS: int = 128
    pulse: PulseKind = PulseKind.RRC
    rolloff: float = 0.2
    delta_t: float = 1.0
    N_T: int = 12
    span_symbols: int = 16
    constellation_order: int | None = 4
    power: float = 1.0
    symbol_rate: float = 1.92e6
    profile: ChannelProfile = field(default_factory=etu)
    snr_db: tuple = (-10.0, 0.0, 10.0, 20.0)
    n_channels: int = 10
    n_symbols: int = 2000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pulse", PulseKind(self.pulse))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "profile",
                           self.profile.with_(sample_period=1.0 / (self.symbol_rate * self.N_T), doppler_hz=0.0))
        self.validate()

    def validate(self) -> "UplinkScenario":
        if self.U < 1 or self.N_BS < 1:
            raise ValueError(f"U and N_BS must be >= 1 (got {self.U}, {self.N_BS})")
        if not 0 < self.delta_t <= 1:
            raise ValueError(f"delta_t must lie in (0, 1], got {self.delta_t}")
        ns = self.delta_t * self.N_T
        if abs(ns - round(ns)) > 1e-9:
            raise ValueError(f"delta_t * N_T = {ns:g} is not an integer number of samples")
        if self.constellation_order is not None:
            qam(self.constellation_order)
        return self

    @property
    def N_s(self) -> int:
        return int(round(self.delta_t * self.N_T))

    @property
    def gaussian(self) -> bool:
        return self.constellation_order is None

    def make_pulse(self):
        Q = self.span_symbols * self.N_T + 1
        return make_pulse(self.pulse, Q, 1, self.rolloff if self.pulse is PulseKind.RRC else 0.0, period=self.N_T)

    def noise_var(self, snr_db: float) -> float:
        return self.power * self.N_T / 10.0 ** (snr_db / 10.0)

    @property
    def bandwidth_factor(self) -> float:
        """Symbol time times occupied bandwidth, ``delta_t (1 + rolloff)``."""
        ro = self.rolloff if self.pulse is PulseKind.RRC else 0.0
        return self.delta_t * (1.0 + ro)


@dataclass(frozen=True, eq=False)
class EffectiveChannel:
    """Symbol-spaced model of one user after matched-filter combining.

    ``g`` holds the taps ``g_u[m]`` for ``m = -M..M`` (``g[M]`` is the peak),
    ``cross[v]`` the taps from user ``v`` and ``noise_acf`` the noise
    autocorrelation per unit per-sample noise variance on the same lags.
    """

    g: np.ndarray
    cross: np.ndarray
    noise_acf: np.ndarray
    interference_var: float = float("nan")

    @property
    def gamma(self) -> float:
        return float(self.g[len(self.g) // 2].real)

    @property
    def center(self) -> int:
        return len(self.g) // 2


@dataclass(frozen=True, eq=False)
class UplinkRealization:
    """Noiseless components and unit-variance noise of the combined outputs."""

    d: np.ndarray
    y_desired: np.ndarray
    y_interference: np.ndarray
    y_noise: np.ndarray
    channels: tuple
    scenario: UplinkScenario

    def y(self, snr_db: float | None = None) -> np.ndarray:
        """Combined outputs (``U x n``) at ``snr_db``; noiseless when ``None``."""
        out = self.y_desired + self.y_interference
        if snr_db is not None:
            out = out + math.sqrt(self.scenario.noise_var(snr_db)) * self.y_noise
        return out


def _composites(scenario: UplinkScenario, channels, pulse):
    """``K_uv = sum_n z_vn * conj(z_un[::-1])`` and the received pulses ``z_un``."""
    U, N_BS = scenario.U, scenario.N_BS
    z = np.array([[np.convolve(pulse.samples, channels[u, n].impulse_response()) for n in range(N_BS)]
                  for u in range(U)])
    Lz = z.shape[2]
    Zf = np.fft.fft(z, 2 * Lz - 1, axis=2)
    K = np.einsum("vnf,unf->uvf", Zf, Zf.conj())
    # correlation peak of the full-length convolution sits at index Lz - 1
    K = np.fft.ifft(K, axis=2)
    K = np.roll(K, Lz - 1, axis=2)
    return K, z


def _sampled(K: np.ndarray, Lz: int, N_s: int, M: int) -> np.ndarray:
    idx = (Lz - 1) + N_s * np.arange(-M, M + 1)
    out = np.zeros(K.shape[:-1] + (2 * M + 1,), dtype=complex)
    ok = (idx >= 0) & (idx < K.shape[-1])
    out[..., ok] = K[..., idx[ok]]
    return out


def effective_channels(scenario: UplinkScenario, channels, pulse=None) -> list[EffectiveChannel]:
    """Symbol-spaced effective channels of every user, truncated at -60 dB."""
    pulse = pulse or scenario.make_pulse()
    K, z = _composites(scenario, channels, pulse)
    Lz, N_s = z.shape[2], scenario.N_s
    M = (Lz - 1) // N_s
    taps = _sampled(K, Lz, N_s, M) / scenario.N_BS
    amp2 = scenario.power * N_s / scenario.N_BS
    out = []
    for u in range(scenario.U):
        g = taps[u, u]
        keep = np.abs(g) ** 2 >= np.abs(g[M]) ** 2 * 10 ** (-TRUNCATION_DB / 10)
        m = int(np.max(np.abs(np.flatnonzero(keep) - M)))
        sl = slice(M - m, M + m + 1)
        out.append(EffectiveChannel(g[sl].copy(), taps[u, :, sl].copy(), g[sl] / (amp2 * scenario.N_BS)))
    return out


def simulate_uplink(scenario: UplinkScenario, n_symbols: int, rng_seed=None, channels=None) -> UplinkRealization:
    """Transmit ``n_symbols`` per user through the array and combine.

    Returns the desired, inter-user and (unit-variance) noise components of
    the sampled matched-filter outputs for the central ``n_symbols``;
    guard symbols on both sides keep the window free of edge effects.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if channels is None:
        channels = make_mimo_channels(scenario.U, scenario.N_BS, scenario.profile, rng)
    pulse = scenario.make_pulse()
    U, N_BS, N_s = scenario.U, scenario.N_BS, scenario.N_s
    K, z = _composites(scenario, channels, pulse)
    Lz = z.shape[2]
    guard = -(-(2 * Lz) // N_s) + 1
    n_tot = n_symbols + 2 * guard
    if scenario.gaussian:
        d = (rng.standard_normal((U, n_tot)) + 1j * rng.standard_normal((U, n_tot))) / math.sqrt(2.0)
    else:
        alpha = qam(scenario.constellation_order)
        d = alpha.points[rng.integers(0, alpha.order, size=(U, n_tot))]
    up = np.zeros((U, n_tot * N_s), dtype=complex)
    up[:, ::N_s] = d
    # K already contains one pulse, one channel and one matched filter; the
    # transmit amplitude cancels against the output normalization
    sample = (Lz - 1) + N_s * np.arange(guard, guard + n_symbols)
    y_des = np.zeros((U, n_symbols), dtype=complex)
    y_int = np.zeros((U, n_symbols), dtype=complex)
    for u in range(U):
        for v in range(U):
            full = fftconvolve(up[v], K[u, v]) / N_BS
            if u == v:
                y_des[u] = full[sample]
            else:
                y_int[u] += full[sample]
    # per-antenna white noise through each user's matched filters
    L = n_tot * N_s + Lz - 1
    w = (rng.standard_normal((N_BS, L)) + 1j * rng.standard_normal((N_BS, L))) / math.sqrt(2.0)
    nfft = 1 << int(math.ceil(math.log2(L + Lz - 1)))
    Wf = np.fft.fft(w, nfft, axis=1)
    amp = math.sqrt(scenario.power * N_s / N_BS)
    y_noise = np.zeros((U, n_symbols), dtype=complex)
    for u in range(U):
        mf = np.fft.fft(np.conj(z[u, :, ::-1]), nfft, axis=1)
        full = np.fft.ifft(np.sum(Wf * mf, axis=0))
        y_noise[u] = full[sample] / (amp * N_BS)
    return UplinkRealization(d[:, guard:guard + n_symbols], y_des, y_int, y_noise, tuple(channels.ravel()), scenario)


def _full_isi_rate(eff: EffectiveChannel, user: int, noise_var: float, nfft: int = 4096,
                   psd: str = "colored") -> float:
    """Gaussian-input rate of a stationary ISI channel, interference plus noise as Gaussian.

    ``psd="colored"`` uses the actual spectrum of matched-filtered noise and
    inter-user interference; ``"white"`` replaces it by a flat spectrum of
    the same total variance.
    """
    def spectrum(taps):
        c = len(taps) // 2
        buf = np.zeros(nfft, dtype=complex)
        buf[:c + 1] = taps[c:]
        buf[nfft - c:] = taps[:c]
        return np.fft.fft(buf)
    G = spectrum(eff.g).real
    S = noise_var * spectrum(eff.noise_acf).real
    for v, taps in enumerate(eff.cross):
        if v == user:
            continue
        S = S + np.abs(spectrum(taps)) ** 2
    if psd == "white":
        S = np.full(nfft, S.mean())
    elif psd != "colored":
        raise ValueError(f"unknown psd model {psd!r}")
    G = np.maximum(G, 0.0)
    S = np.maximum(S, np.finfo(float).tiny)
    return float(np.mean(np.log2(1.0 + G**2 / S)))


def _user_rates(scenario: UplinkScenario, sim: UplinkRealization, effs, equalizer: UplinkEqualizer,
                remove_interference: bool, psd: str = "colored"):
    """Bits per symbol for every user and SNR of one realization."""
    alpha = None if scenario.gaussian else qam(scenario.constellation_order)
    rates = np.zeros((scenario.U, len(scenario.snr_db)))
    batches = np.zeros((scenario.U, len(scenario.snr_db), 10))
    for u, eff in enumerate(effs):
        gamma = eff.gamma
        for i, snr in enumerate(scenario.snr_db):
            s2 = scenario.noise_var(snr)
            if equalizer is UplinkEqualizer.FULL_ISI:
                if remove_interference:
                    eff_u = replace(eff, cross=np.zeros_like(eff.cross))
                else:
                    eff_u = eff
                rates[u, i] = _full_isi_rate(eff_u, u, s2, psd=psd)
                batches[u, i] = rates[u, i]
                continue
            noise = math.sqrt(s2) * sim.y_noise[u]
            if remove_interference:
                y = gamma * sim.d[u] + noise
            else:
                y = sim.y_desired[u] + sim.y_interference[u] + noise
            eta = y - gamma * sim.d[u]
            N0 = float(np.mean(np.abs(eta) ** 2)) / gamma**2
            if scenario.gaussian:
                info = np.full(y.size, float(gaussian_information(N0)))
            else:
                info = mismatched_information(y / gamma, sim.d[u], alpha, N0)
            rates[u, i] = max(float(info.mean()), 0.0)
            batches[u, i] = [b.mean() for b in np.array_split(info, 10)]
    return rates, batches


def uplink_ase(scenario: UplinkScenario, snr_grid=None, equalizer=UplinkEqualizer.ONE_TAP, rng_seed=None,
               remove_interference: bool = False, n_channels=None, n_symbols=None,
               psd: str = "colored") -> list[AseCurve]:
    """Per-user ASE curves (bits/s/Hz) over independent channel sets.

    ``ONE_TAP`` decodes ``y = gamma d + eta`` with the empirical variance of
    ``eta``; ``FULL_ISI`` (Gaussian inputs only) is the rate of an equalizer
    that handles the user's own ISI optimally and treats inter-user
    interference plus noise as Gaussian noise (``psd`` selects its
    spectral model, see :func:`_full_isi_rate`).  With
    ``remove_interference`` all ISI and inter-user terms are dropped, which
    gives the interference-free bound.
    """
    equalizer = UplinkEqualizer(equalizer)
    if snr_grid is not None:
        scenario = replace(scenario, snr_db=tuple(snr_grid))
    if equalizer is UplinkEqualizer.FULL_ISI and not scenario.gaussian:
        raise ValueError("FULL_ISI rates are defined for Gaussian inputs only")
    R = scenario.n_channels if n_channels is None else int(n_channels)
    S = scenario.n_symbols if n_symbols is None else int(n_symbols)
    seed = scenario.seed if rng_seed is None else int(rng_seed)
    if R < 1:
        raise ValueError("n_channels must be >= 1")
    pulse = scenario.make_pulse()
    per_real = []
    per_batch = None
    for r in range(R):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        channels = make_mimo_channels(scenario.U, scenario.N_BS, scenario.profile, rng)
        effs = effective_channels(scenario, channels, pulse)
        if equalizer is UplinkEqualizer.FULL_ISI:
            sim = None
        else:
            sim = simulate_uplink(scenario, S, rng, channels)
        rates, batches = _user_rates(scenario, sim, effs, equalizer, remove_interference, psd)
        per_real.append(rates)
        per_batch = batches if per_batch is None else per_batch
    per_real = np.array(per_real) / scenario.bandwidth_factor
    per_batch = per_batch / scenario.bandwidth_factor
    curves = []
    for u in range(scenario.U):
        points = []
        for i, snr in enumerate(scenario.snr_db):
            vals = per_real[:, u, i] if R > 1 else per_batch[u, i]
            hw = _ci_half_width(vals) if np.ptp(vals) > 0 else 0.0
            points.append(AsePoint(snr, float(per_real[:, u, i].mean()), hw, S * R, R, tuple(vals.tolist())))
        curves.append(AseCurve(f"{scenario.name}-u{u}", tuple(points), seed,
                               {"equalizer": equalizer.value, "N_BS": scenario.N_BS, "delta_t": scenario.delta_t}))
    return curves


def average_curves(curves: list[AseCurve], name: str | None = None) -> AseCurve:
    """User-averaged curve; per-realization samples are averaged across users."""
    if not curves:
        raise ValueError("no curves to average")
    points = []
    for i, p0 in enumerate(curves[0].points):
        samples = np.mean([c.points[i].samples for c in curves], axis=0)
        ase = float(np.mean([c.points[i].ase for c in curves]))
        hw = _ci_half_width(samples) if samples.size > 1 and np.ptp(samples) > 0 else 0.0
        points.append(AsePoint(p0.snr_db, ase, hw, sum(c.points[i].n_symbols for c in curves),
                               p0.n_channels, tuple(samples.tolist())))
    base = curves[0].scenario_id.rsplit("-u", 1)[0]
    return AseCurve(name or base, tuple(points), curves[0].seed, dict(curves[0].metadata))


def interference_power(scenario: UplinkScenario, n_channels: int = 10, rng_seed=None) -> float:
    """Mean inter-user interference power per symbol at the combiner output.

    Computed from the sampled cross-channel taps (what a noiseless
    simulation measures for unit-power symbols).  The outputs are scaled so
    that ``E[gamma] = 1``, hence this is also the power relative to the
    desired signal; it is not divided by each realization's ``gamma**2``,
    which would add an ``E[1/gamma**2]`` bias for small arrays.
    """
    seed = scenario.seed if rng_seed is None else int(rng_seed)
    pulse = scenario.make_pulse()
    power = []
    for r in range(n_channels):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        channels = make_mimo_channels(scenario.U, scenario.N_BS, scenario.profile, rng)
        for u, eff in enumerate(effective_channels(scenario, channels, pulse)):
            power.append(sum(float(np.sum(np.abs(t) ** 2)) for v, t in enumerate(eff.cross) if v != u))
    return float(np.mean(power))
