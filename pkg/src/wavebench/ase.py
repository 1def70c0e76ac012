"""Closed-form spectral efficiency and simulated achievable spectral efficiency.

The simulated figure is a mismatched-decoding rate: each equalized symbol
is decoded with a Gaussian auxiliary law centred on the transmitted symbol,
whose variance is the residual error variance of that equalizer output.
Because the model is exact and the channel known, that variance is computed
in closed form from the observation matrices rather than estimated.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp
from scipy.stats import t as student_t

from .channel import ChannelProfile, realize_channel
from .config import FrameConfig, Scheme
from .constellation import Constellation
from .pulses import PulseKind, make_pulse
from .receiver import (EqualizerKind, block_window_start, build_observation, equalize, make_equalizer,
                       required_offsets)
from .waveform import apply_evm, constellation_for, random_grid, synthesize_frame

B_REF_HZ = 1.92e6
CSV_COLUMNS = ("scenario_id", "snr_db", "ase_bps_hz", "ci_half_width", "n_symbols", "n_channels", "seed")


# -- closed form ------------------------------------------------------------

def spectral_efficiency(scheme, M: int, R_c: float = 1.0, delta_t: float = 1.0, delta_f: float = 1.0,
                        N: int = 1, G_cp: int = 0, zeta_g: float = 1.0, rolloff: float = 0.0) -> float:
    """Nominal spectral efficiency in bits/s/Hz.

    FBMC values use the lattice density, so they reduce to ``log2(M) R_c``
    on the orthogonal lattices (density 1 for QAM, 1/2 for OQAM).
    """
    scheme = Scheme(scheme)
    if M < 2 or R_c <= 0 or not 0 < zeta_g <= 1:
        raise ValueError("need M >= 2, R_c > 0 and zeta_g in (0, 1]")
    bits = math.log2(M)
    rho = delta_t * delta_f
    if scheme is Scheme.OFDM:
        if N < 1 or G_cp < 0:
            raise ValueError("OFDM needs N >= 1 and G_cp >= 0")
        return R_c * N * zeta_g * bits / (N + G_cp)
    if scheme is Scheme.SCM:
        if N != 1:
            raise ValueError(f"single-carrier modulation has N = 1, got {N}")
        return R_c * zeta_g * bits / (1.0 + rolloff)
    if scheme is Scheme.FBMC_QAM:
        if rho < 1 - 1e-12:
            raise ValueError(f"FBMC-QAM needs delta_t*delta_f >= 1, got {rho:g}; use TFS_QAM")
        return R_c * bits / rho
    if scheme is Scheme.FBMC_OQAM:
        if rho < 0.5 - 1e-12:
            raise ValueError(f"FBMC-OQAM needs delta_t*delta_f >= 0.5, got {rho:g}; use TFS_OQAM")
        return R_c * bits / (2 * rho)
    if scheme is Scheme.TFS_QAM:
        if rho > 1 + 1e-12:
            raise ValueError(f"TFS-QAM needs delta_t*delta_f <= 1, got {rho:g}")
        return R_c * bits / rho
    if rho > 0.5 + 1e-12:
        raise ValueError(f"TFS-OQAM needs delta_t*delta_f <= 0.5, got {rho:g}")
    return R_c * bits / (2 * rho)


# -- per-symbol information -------------------------------------------------

def mismatched_information(est, ref, alphabet: Constellation, N0) -> np.ndarray:
    """Per-symbol ``log2 q(y|d) / q_p(y)`` for the Gaussian auxiliary law.

    ``N0`` is the complex error variance (or the real variance for real
    alphabets) and may be given per symbol.
    """
    est = np.asarray(est).ravel()
    ref = np.asarray(ref).ravel()
    N0 = np.asarray(N0, dtype=float)
    N0 = np.full(est.size, float(N0)) if N0.ndim == 0 else N0.ravel()
    if N0.size != est.size or ref.size != est.size:
        raise ValueError("estimates, references and variances must have matching sizes")
    if np.any(~np.isfinite(N0)) or np.any(N0 <= 0):
        raise ValueError("auxiliary variance must be finite and positive")
    scale = 2.0 * N0 if alphabet.real else N0
    pts = alphabet.points
    out = np.empty(est.size)
    for lo in range(0, est.size, 1 << 15):
        sl = slice(lo, lo + (1 << 15))
        e, r, s = est[sl], ref[sl], scale[sl]
        own = np.abs(e - r) ** 2
        alt = np.abs(e[:, None] - pts[None, :]) ** 2
        out[sl] = math.log2(alphabet.order) - logsumexp(-(alt - own[:, None]) / s[:, None], axis=1) / math.log(2)
    return out


def gaussian_information(N0, real: bool = False) -> np.ndarray:
    """``log2(1 + SINR)`` per complex symbol (half of it for real symbols), unit signal power."""
    r = np.log2(1.0 + 1.0 / np.asarray(N0, dtype=float))
    return 0.5 * r if real else r


# -- results ----------------------------------------------------------------

@dataclass(frozen=True)
class AsePoint:
    """One curve point; ``samples`` holds the per-realization (or per-batch) ASE values."""

    snr_db: float
    ase: float
    half_width: float
    n_symbols: int
    n_channels: int
    samples: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class AseCurve:
    scenario_id: str
    points: tuple
    seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        snr = [p.snr_db for p in self.points]
        if any(b <= a for a, b in zip(snr, snr[1:])):
            raise ValueError("SNR values must be strictly increasing")

    @property
    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    @property
    def ase(self) -> np.ndarray:
        return np.array([p.ase for p in self.points])

    @property
    def half_width(self) -> np.ndarray:
        return np.array([p.half_width for p in self.points])

    def rows(self):
        for p in self.points:
            yield (self.scenario_id, _fmt(p.snr_db), _fmt(p.ase), _fmt(p.half_width),
                   str(p.n_symbols), str(p.n_channels), str(self.seed))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def paired_difference(a: AseCurve, b: AseCurve) -> tuple[np.ndarray, np.ndarray]:
    """Mean and 95% half-width of ``a - b`` per SNR, paired by realization.

    Meaningful when both curves were run with the same seed and realization
    count, so that realization ``r`` of each saw the same physical channel.
    """
    if not np.array_equal(a.snr_db, b.snr_db):
        raise ValueError("curves use different SNR grids")
    diff, hw = [], []
    for pa, pb in zip(a.points, b.points):
        if len(pa.samples) != len(pb.samples) or len(pa.samples) < 2:
            raise ValueError("paired comparison needs matching per-realization samples")
        d = np.asarray(pa.samples) - np.asarray(pb.samples)
        diff.append(float(d.mean()))
        hw.append(_ci_half_width(d))
    return np.array(diff), np.array(hw)


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


# -- link scenario ----------------------------------------------------------

@dataclass(frozen=True)
class LinkScenario:
    """Everything needed to simulate one ASE curve of a single link."""

    name: str
    config: FrameConfig
    pulse: PulseKind
    profile: ChannelProfile
    equalizer: EqualizerKind = EqualizerKind.MMSE
    rolloff: float = 0.0
    pulse_support: int | None = None
    evm: float = 0.0
    snr_db: tuple = (0.0, 10.0, 20.0, 30.0)
    n_channels: int = 100
    n_symbols: int = 2000
    seed: int = 0
    b_ref_hz: float = B_REF_HZ
    bandwidth_factor: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "pulse", PulseKind(self.pulse))
        object.__setattr__(self, "equalizer", EqualizerKind(self.equalizer))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        object.__setattr__(self, "profile", self.profile.with_(sample_period=1.0 / self.config.sample_rate))

    def make_pulse(self):
        c = self.config
        return make_pulse(self.pulse, c.Q, c.M_grid, self.rolloff, period=c.T, support=self.pulse_support)

    @property
    def occupancy(self) -> float:
        """``T_s F_tot`` per block, in units of complex symbols."""
        if self.bandwidth_factor is not None:
            return float(self.bandwidth_factor)
        c = self.config
        if c.scheme is Scheme.SCM:
            return 1.0 + self.rolloff
        return c.N * c.density

    def noise_var(self, snr_db: float) -> float:
        """Noise variance per sample for ``P / P_n`` referenced to ``b_ref_hz``."""
        snr = 10.0 ** (snr_db / 10.0)
        return self.config.power * self.config.sample_rate / (self.b_ref_hz * snr)

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:12]


def _seed(scenario: LinkScenario, seed, r: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(r, stream)))


def _frame_plan(scenario: LinkScenario, n_symbols: int):
    """Frame config, evaluated block indices and frames per realization."""
    cfg = scenario.config
    D = scenario.profile.span_samples - 1
    m_min, m_max = required_offsets(cfg.Q, cfg.N_s, D)
    reach = max(-m_min, m_max)
    n_blocks = max(1, -(-n_symbols // cfg.N))
    if cfg.scheme is Scheme.SCM and cfg.G_cp:
        # the cyclic-prefix packet structure fixes the packet length
        interior = np.arange(-cfg.G - m_min, cfg.G - m_max + 1)
        interior = interior[interior + cfg.G >= cfg.G_cp]
        if interior.size == 0:
            raise ValueError("packet too short for the pulse and channel span")
        frames = -(-n_blocks // interior.size)
        return cfg, interior, frames
    G = max(reach, -(-(n_blocks - 1 + m_max - m_min) // 2))
    cfg = cfg.with_(G=G)
    blocks = np.arange(-G - m_min, G - m_max + 1)[:n_blocks]
    return cfg, blocks, 1


def _windows(y: np.ndarray, cfg: FrameConfig, blocks: np.ndarray) -> np.ndarray:
    starts = (blocks + cfg.G) * cfg.N_s
    view = np.lib.stride_tricks.sliding_window_view(y, cfg.Q)
    return np.fft.fft(view[starts].T, axis=0, norm="ortho")


def _phase_key(cfg: FrameConfig, l: int):
    return (l % 4, round((cfg.density * l) % 1.0, 9))


def _realization(args):
    """Information per symbol at every SNR for one channel realization."""
    scenario, seed, r, n_symbols, gaussian = args
    pulse = scenario.make_pulse()
    cfg, blocks, frames = _frame_plan(scenario, n_symbols)
    alphabet = constellation_for(cfg)
    real = cfg.scheme.is_oqam
    kind = scenario.equalizer
    ch = realize_channel(scenario.profile, cfg.stream_length + scenario.profile.span_samples,
                         _seed(scenario, seed, r, 0))
    snr_vars = [scenario.noise_var(s) for s in scenario.snr_db]
    info = [[] for _ in snr_vars]

    def record(i, est, ref, N0):
        if gaussian:
            info[i].append(gaussian_information(np.broadcast_to(N0, np.shape(ref)), real).ravel())
        else:
            info[i].append(mismatched_information(est, ref, alphabet, np.broadcast_to(N0, np.shape(ref))))

    for f in range(frames):
        rng = _seed(scenario, seed, r, 1 + 3 * f)
        grid = random_grid(cfg, rng)
        ref_all = grid.a
        if not gaussian:
            tx = apply_evm(grid, scenario.evm, _seed(scenario, seed, r, 2 + 3 * f))
            y = ch.apply(synthesize_frame(tx, pulse, cfg))
            w_rng = _seed(scenario, seed, r, 3 + 3 * f)
            w = (w_rng.standard_normal(y.size) + 1j * w_rng.standard_normal(y.size)) / math.sqrt(2.0)
        if ch.static:
            base = build_observation(ch, pulse, cfg, block_index=int(blocks[0]), evm=scenario.evm)
            groups = {}
            for l in blocks:
                groups.setdefault(_phase_key(cfg, int(l)) if real else 0, []).append(int(l))
            for i, s2 in enumerate(snr_vars):
                Yf = None if gaussian else _windows(y + math.sqrt(s2) * w, cfg, blocks)
                for ls in groups.values():
                    model = base.at_block(ls[0], s2)
                    eq = make_equalizer(model, kind)
                    ls = np.asarray(ls)
                    ref = ref_all[:, ls + cfg.G]
                    N0 = eq.noise_var[:, None]
                    if gaussian:
                        record(i, None, ref, N0)
                        continue
                    cols = np.searchsorted(blocks, ls)
                    est = equalize(model, eq, Yf[:, cols], block_index=ls)
                    record(i, est, ref, N0)
        else:
            for l in blocks:
                l = int(l)
                model = build_observation(ch, pulse, cfg, block_index=l, evm=scenario.evm)
                st = block_window_start(l, cfg)
                for i, s2 in enumerate(snr_vars):
                    eq = make_equalizer(model.with_noise(s2), kind)
                    ref = ref_all[:, l + cfg.G]
                    if gaussian:
                        record(i, None, ref, eq.noise_var)
                        continue
                    yf = np.fft.fft(y[st:st + cfg.Q] + math.sqrt(s2) * w[st:st + cfg.Q], norm="ortho")
                    record(i, equalize(model, eq, yf), ref, eq.noise_var)
    return [np.concatenate(v) for v in info]


def _ci_half_width(samples: np.ndarray) -> float:
    n = samples.size
    if n < 2:
        raise ValueError("need at least two batches for a confidence interval")
    sd = float(np.std(samples, ddof=1))
    return float(student_t.ppf(0.975, n - 1) * sd / math.sqrt(n))


def _run(scenario: LinkScenario, snr_grid, n_channels, n_symbols, rng_seed, gaussian, jobs) -> AseCurve:
    if snr_grid is not None:
        scenario = replace(scenario, snr_db=tuple(snr_grid))
    R = scenario.n_channels if n_channels is None else int(n_channels)
    S = scenario.n_symbols if n_symbols is None else int(n_symbols)
    seed = scenario.seed if rng_seed is None else int(rng_seed)
    if R < 1 or S < 1:
        raise ValueError("n_channels and n_symbols must be >= 1")
    if R == 1 and S < 10:
        raise ValueError("a single realization needs at least 10 symbols for batch-means confidence")
    scenario.config.validate()
    args = [(scenario, seed, r, S, gaussian) for r in range(R)]
    if jobs and jobs > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_realization, args))
    else:
        results = [_realization(a) for a in args]

    # bits per block normalized by the block's time-frequency occupancy
    per_symbol = scenario.config.zeta_g * scenario.config.N / scenario.occupancy
    points = []
    for i, snr in enumerate(scenario.snr_db):
        vals = [res[i] for res in results]
        if R > 1:
            per_real = np.array([max(float(v.mean()), 0.0) for v in vals]) * per_symbol
            ase, hw, samples = float(per_real.mean()), _ci_half_width(per_real), per_real
        else:
            v = vals[0]
            batches = np.array([b.mean() for b in np.array_split(v, 10)]) * per_symbol
            ase, hw, samples = max(float(v.mean()), 0.0) * per_symbol, _ci_half_width(batches), batches
        if not math.isfinite(ase):
            raise FloatingPointError(f"divergent ASE estimate at {snr} dB")
        points.append(AsePoint(snr, ase, hw, int(sum(v.size for v in vals)), R, tuple(float(x) for x in samples)))
    meta = {
        "config": scenario.digest(),
        "scheme": scenario.config.scheme.value,
        "equalizer": scenario.equalizer.value,
        "evm": scenario.evm,
        "doppler_hz": scenario.profile.doppler_hz,
        "inputs": "gaussian" if gaussian else f"{scenario.config.constellation_order}-QAM",
    }
    return AseCurve(scenario.name, tuple(points), seed, meta)


def estimate_ase(scenario: LinkScenario, snr_grid=None, n_channels=None, n_symbols=None, rng_seed=None,
                 jobs: int = 1) -> AseCurve:
    """ASE of the configured constellation over ``n_channels`` realizations.

    ``n_symbols`` counts evaluated data symbols per realization (rounded up
    to whole blocks).  Realizations use independent seed streams derived from
    ``rng_seed``; channel draws depend only on the seed and realization
    index, so schemes sharing a seed see the same physical channels.
    """
    return _run(scenario, snr_grid, n_channels, n_symbols, rng_seed, False, jobs)


def estimate_ase_gaussian_inputs(scenario: LinkScenario, snr_grid=None, n_channels=None, n_symbols=None,
                                 rng_seed=None, jobs: int = 1) -> AseCurve:
    """ASE with Gaussian inputs: ``log2(1 + SINR)`` per equalized symbol."""
    return _run(scenario, snr_grid, n_channels, n_symbols, rng_seed, True, jobs)
