"""Prototype pulses and their time-frequency ambiguity.

Pulses are sampled on the simulation grid and normalized so that
``sum(|p[n]|**2) == 1`` (the sampling period is the time unit).  Each pulse
remembers its design period ``T`` in samples, the reference symbol time the
lattice factors ``delta_t`` and ``delta_f`` are measured against.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import FrameConfig, Scheme

# PHYDYAS frequency-sampling coefficients for overlap K = 4
PHYDYAS_K4 = (1.0, 0.971960, math.sqrt(2.0) / 2.0, 0.235147)


class PulseKind(str, enum.Enum):
    RECT = "RECT"
    RRC = "RRC"
    PHYDYAS = "PHYDYAS"
    SINC_TRUNC = "SINC_TRUNC"


@dataclass(frozen=True, eq=False)
class PrototypePulse:
    samples: np.ndarray
    kind: PulseKind
    rolloff: float
    M_grid: int
    period: float

    @property
    def Q(self) -> int:
        return len(self.samples)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2))

    def spectrum(self, nfft: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Magnitude spectrum in dB (0 dB peak) against frequency in units of ``1/T``."""
        nfft = nfft or 1 << int(math.ceil(math.log2(16 * self.Q)))
        P = np.fft.fftshift(np.fft.fft(self.samples, nfft))
        f = np.fft.fftshift(np.fft.fftfreq(nfft)) * self.period
        mag = np.abs(P)
        with np.errstate(divide="ignore"):
            db = 20 * np.log10(mag / mag.max())
        return f, db

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "real", "imag"])
            for n, v in enumerate(np.asarray(self.samples, dtype=complex)):
                w.writerow([n, repr(float(v.real)), repr(float(v.imag))])


def _rrc(t: np.ndarray, beta: float) -> np.ndarray:
    """Unnormalized root-raised-cosine impulse response at ``t`` in symbol units."""
    if beta == 0.0:
        return np.sinc(t)
    out = np.empty_like(t, dtype=float)
    at0 = np.isclose(t, 0.0, atol=1e-12)
    sing = np.isclose(np.abs(4 * beta * t), 1.0, atol=1e-12)
    reg = ~(at0 | sing)
    tr = t[reg]
    out[reg] = (
        np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    ) / (np.pi * tr * (1 - (4 * beta * tr) ** 2))
    out[at0] = 1.0 + beta * (4.0 / np.pi - 1.0)
    out[sing] = (beta / math.sqrt(2.0)) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * beta))
    )
    return out


def _centre(Q: int, T: float) -> int:
    """Integer sample near Q/2 on the T/2 raster when T/2 is integral.

    Carrier phases are referenced to sample 0 of the window, so OQAM
    orthogonality needs the pulse centre on a multiple of T/2.
    """
    half_T = T / 2
    if abs(half_T - round(half_T)) < 1e-9 and half_T >= 1:
        h = int(round(half_T))
        c = int(round((Q - 1) / 2 / h)) * h
        if 0 <= c < Q:
            return c
    return (Q - 1) // 2


def make_pulse(
    kind,
    Q: int,
    M_grid: int = 1,
    rolloff: float = 0.0,
    *,
    period: float | None = None,
    support: int | None = None,
    overlap: int = 4,
) -> PrototypePulse:
    """Sample a unit-energy prototype pulse of ``Q`` samples.

    ``period`` is the design symbol time ``T`` in samples and defaults to
    ``Q / M_grid``.  ``support`` restricts the nonzero part (the rest is
    zero padding).  ``RECT`` starts at sample 0; the other kinds are
    symmetric about a centre sample chosen by :func:`_centre`.  The PHYDYAS pulse uses the
    frequency-sampling design with overlap factor ``overlap`` (only ``4`` has
    tabulated coefficients) and occupies ``overlap * T`` samples.
    """
    kind = PulseKind(kind)
    if Q <= 0 or M_grid <= 0:
        raise ValueError(f"Q and M_grid must be positive (Q={Q}, M_grid={M_grid})")
    if not 0.0 <= rolloff <= 1.0:
        raise ValueError(f"rolloff must lie in [0, 1], got {rolloff}")
    T = float(period) if period is not None else Q / M_grid
    if T <= 0:
        raise ValueError("period must be positive")
    p = np.zeros(Q)

    if kind is PulseKind.RECT:
        L = support or Q
        if not 0 < L <= Q:
            raise ValueError(f"rect support {L} outside (0, Q]")
        p[:L] = 1.0
    elif kind in (PulseKind.RRC, PulseKind.SINC_TRUNC):
        if kind is PulseKind.SINC_TRUNC and rolloff:
            raise ValueError("SINC_TRUNC has no rolloff")
        c = _centre(Q, T)
        half = min(c, Q - 1 - c)
        if support is not None:
            if not 0 < support <= Q:
                raise ValueError(f"support {support} outside (0, Q]")
            half = min(half, (support - 1) // 2)
        n = np.arange(c - half, c + half + 1)
        beta = rolloff if kind is PulseKind.RRC else 0.0
        p[n] = _rrc((n - c) / T, beta)
    elif kind is PulseKind.PHYDYAS:
        if overlap != 4:
            raise ValueError("PHYDYAS coefficients are tabulated for overlap K=4 only")
        KT = overlap * T
        if abs(KT - round(KT)) > 1e-9 or int(round(KT)) % 2:
            raise ValueError(f"overlap*T = {KT} must be an even number of samples")
        KT = int(round(KT))
        if KT - 1 > Q:
            raise ValueError(f"PHYDYAS support {KT - 1} exceeds Q={Q}")
        n = np.arange(KT - 1)
        h = np.full(KT - 1, PHYDYAS_K4[0])
        for k in range(1, overlap):
            h += 2 * (-1) ** k * PHYDYAS_K4[k] * np.cos(2 * np.pi * k * (n + 1) / KT)
        # symmetric about index KT/2 - 1
        off = _centre(Q, T) - (KT // 2 - 1)
        off = min(max(off, 0), Q - (KT - 1))
        p[off:off + KT - 1] = h
    if not np.any(p):
        raise ValueError("degenerate pulse")
    p /= np.linalg.norm(p)
    return PrototypePulse(p, kind, float(rolloff), int(M_grid), T)


def ambiguity(pulse, tau: int, nu: float, other=None) -> complex:
    """Discrete (cross-)ambiguity ``sum_n p[n] q*[n - tau] exp(-j 2 pi nu n)``.

    ``nu`` is in cycles per sample; ``other`` defaults to the pulse itself.
    """
    p = pulse.samples if isinstance(pulse, PrototypePulse) else np.asarray(pulse)
    q = p if other is None else (other.samples if isinstance(other, PrototypePulse) else np.asarray(other))
    Q = len(p)
    tau = int(tau)
    if abs(tau) >= max(Q, len(q)):
        raise ValueError(f"|tau|={abs(tau)} must be below the pulse length {Q}")
    n = np.arange(Q)
    m = n - tau
    ok = (m >= 0) & (m < len(q))
    return complex(np.sum(p[ok] * np.conj(q[m[ok]]) * np.exp(-2j * np.pi * nu * n[ok])))


@dataclass(frozen=True)
class OrthogonalityReport:
    max_abs: float
    interference_db: float
    oqam_max: float | None
    oqam_interference_db: float | None
    n_points: int

    @property
    def residual(self) -> float:
        return self.oqam_max if self.oqam_max is not None else self.max_abs


def cp_removal_window(config: FrameConfig) -> np.ndarray:
    """Indicator of the useful (post-CP) part of an OFDM symbol."""
    w = np.zeros(config.Q)
    w[config.G_cp:config.N_s] = 1.0
    return w


def check_orthogonality(pulse: PrototypePulse, config: FrameConfig, receive=None, max_k: int = 16) -> OrthogonalityReport:
    """Ambiguity residuals at the nonzero lattice points ``(l*N_s, k*delta_f*delta_t/N_s)``.

    For CP-OFDM the default receive filter removes the cyclic prefix.  OQAM
    schemes additionally report the residual after real-part detection,
    ``Re(j**(k+l) * conj(A))``.
    """
    if receive is None and config.scheme is Scheme.OFDM and config.G_cp:
        receive = cp_removal_window(config)
    q = receive if receive is not None else pulse.samples
    q = q.samples if isinstance(q, PrototypePulse) else np.asarray(q)
    norm = ambiguity(pulse, 0, 0.0, q)
    beta = config.bin_frequency()
    lmax = (pulse.Q - 1) // config.N_s
    kmax = min(config.N - 1, max_k)
    vals, oq = [], []
    for l in range(-lmax, lmax + 1):
        for k in range(-kmax, kmax + 1):
            if k == 0 and l == 0:
                continue
            a = ambiguity(pulse, l * config.N_s, k * beta, q) / norm
            vals.append(abs(a))
            if config.scheme.is_oqam:
                oq.append(((1j) ** ((k + l) % 4) * np.conj(a)).real)
    vals = np.asarray(vals)
    def _db(x):
        e = float(np.sum(np.square(x)))
        return 10 * math.log10(e) if e > 0 else -math.inf
    oq_arr = np.abs(np.asarray(oq)) if oq else None
    return OrthogonalityReport(
        max_abs=float(vals.max()) if vals.size else 0.0,
        interference_db=_db(vals),
        oqam_max=float(oq_arr.max()) if oq_arr is not None and oq_arr.size else None,
        oqam_interference_db=_db(oq_arr) if oq_arr is not None else None,
        n_points=len(vals),
    )
