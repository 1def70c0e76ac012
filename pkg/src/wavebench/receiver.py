"""Block observation model and linear frequency-domain equalizers.

The receive window of block ``l`` is the ``Q`` channel-output samples
starting where block ``l`` starts.  It sees the blocks ``l + m`` for every
offset ``m`` whose samples (plus the channel memory) reach into the window,
so the linear model

    y_f = H_tot_f d~ + n_f

is exact.  All matrices include the transmit amplitude ``sqrt(P N_s / N)``
so an equalizer with unit desired-symbol gain returns the symbols
themselves.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import ChannelRealization
from .config import FrameConfig, Scheme
from .pulses import PrototypePulse
from .waveform import frame_amplitude, pulse_bank

LS_RCOND = 1e-10


class EqualizerKind(str, enum.Enum):
    MF = "MF"
    LS = "LS"
    MMSE = "MMSE"
    OQAM_MF_MMSE = "OQAM_MF_MMSE"


def required_offsets(Q: int, N_s: int, memory: int = 0) -> tuple[int, int]:
    """Smallest ``(m_min, m_max)`` that makes the window model exact."""
    return -((Q - 1 + memory) // N_s), (Q - 1) // N_s


def shift_matrix(m: int, Q: int, N_s: int) -> np.ndarray:
    """``C_m = F_Q Z^{m N_s} F_Q^H`` with ``Z`` the one-sample delay (zero fill)."""
    Z = np.eye(Q, k=-m * N_s)
    F = np.fft.fft(np.eye(Q), norm="ortho")
    return F @ Z @ F.conj().T


def block_window_start(block_index: int, config: FrameConfig) -> int:
    """Stream sample at which block ``l`` starts (slot ``-G`` starts at 0)."""
    return (block_index + config.G) * config.N_s


@dataclass(eq=False)
class ObservationModel:
    """Exact linear model of one receive window.

    ``H_tot_t`` has ``N`` columns per offset in ``offsets``; columns act on
    the rotated symbols ``d~`` of block ``l + m``.
    """

    H_tot_t: np.ndarray
    offsets: np.ndarray
    config: FrameConfig
    block_index: int
    noise_var: float
    evm: float = 0.0

    @cached_property
    def H_tot_f(self) -> np.ndarray:
        return np.fft.fft(self.H_tot_t, axis=0, norm="ortho")

    @property
    def desired(self) -> slice:
        i = int(np.flatnonzero(self.offsets == 0)[0])
        N = self.config.N
        return slice(i * N, (i + 1) * N)

    @property
    def H_l_f(self) -> np.ndarray:
        return self.H_tot_f[:, self.desired]

    @cached_property
    def gram(self) -> np.ndarray:
        """``H_tot_f H_tot_f^H``, shared by every noise level."""
        return self.H_tot_f @ self.H_tot_f.conj().T

    @cached_property
    def mf_cross(self) -> np.ndarray:
        """``H_l^H H_tot_f``: matched-filter output per transmitted symbol."""
        return self.H_l_f.conj().T @ self.H_tot_f

    def at_block(self, block_index: int, noise_var: float | None = None) -> "ObservationModel":
        """Same channel matrices relabelled for another block or noise level.

        Only valid when the channel is time-invariant, where the window model
        does not depend on the block.
        """
        out = ObservationModel(
            self.H_tot_t, self.offsets, self.config, int(block_index),
            self.noise_var if noise_var is None else float(noise_var), self.evm,
        )
        for name in ("H_tot_f", "gram", "mf_cross"):
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        return out

    def with_noise(self, noise_var: float) -> "ObservationModel":
        return self.at_block(self.block_index, noise_var)

    def C(self, m: int) -> np.ndarray:
        return shift_matrix(m, self.config.Q, self.config.N_s)

    def predict(self, d_rot_window) -> np.ndarray:
        """Noiseless ``y_f`` for the stacked rotated symbols of all offsets (``N x n_offsets``)."""
        d = np.asarray(d_rot_window, dtype=complex)
        return self.H_tot_f @ d.T.ravel()


def _input_matrix(pulse: PrototypePulse, config: FrameConfig, offsets, memory: int) -> np.ndarray:
    """Scaled block waveforms placed on the extended window ``[-memory, Q)``."""
    Q, N, N_s = config.Q, config.N, config.N_s
    bank = pulse_bank(pulse, config) * (frame_amplitude(config) / np.sqrt(N))
    S = np.zeros((Q + memory, N * len(offsets)), dtype=complex)
    for b, m in enumerate(offsets):
        lo = max(m * N_s, -memory)
        hi = min(m * N_s + Q, Q)
        if hi > lo:
            S[lo + memory:hi + memory, b * N:(b + 1) * N] = bank[lo - m * N_s:hi - m * N_s]
    return S


def _apply_taps(channel: ChannelRealization, start: int, S: np.ndarray, Q: int) -> np.ndarray:
    """Banded time-varying channel applied to every column of ``S``."""
    D = S.shape[0] - Q
    out = np.zeros((Q, S.shape[1]), dtype=complex)
    rows = np.arange(Q)
    col = channel._column(start + rows)
    for k, j in enumerate(channel.delay_indices):
        c = channel.taps[k, col]
        c = c[:, None] if np.ndim(c) else c
        out += c * S[D - j:D - j + Q]
    return out


def build_observation(
    channel,
    pulse: PrototypePulse,
    config: FrameConfig,
    L: int | None = None,
    *,
    block_index: int = 0,
    noise_var: float = 0.0,
    evm: float = 0.0,
) -> ObservationModel:
    """Assemble the observation model of block ``block_index``.

    ``channel`` is a :class:`ChannelRealization` (time zero is the first
    stream sample) or an explicit ``Q x (Q + D)`` time-domain matrix whose
    first ``D`` columns act on the samples preceding the window.  ``L`` is
    the interference half-width in blocks; by default the smallest exact
    window is used and a smaller ``L`` is refused.
    """
    Q, N_s = config.Q, config.N_s
    if pulse.Q != Q:
        raise ValueError(f"pulse length {pulse.Q} does not match Q={Q}")
    if isinstance(channel, ChannelRealization):
        memory = channel.span_samples - 1
        H_ext = None
    else:
        H_ext = np.asarray(channel, dtype=complex)
        if H_ext.ndim != 2 or H_ext.shape[0] != Q or H_ext.shape[1] < Q:
            raise ValueError(f"channel matrix must be Q x (Q + D), got {H_ext.shape}")
        memory = H_ext.shape[1] - Q
    m_min, m_max = required_offsets(Q, N_s, memory)
    if L is not None:
        if L < max(-m_min, m_max):
            raise ValueError(
                f"interference window L={L} is too small: the pulse plus channel span "
                f"needs block offsets {m_min}..{m_max}"
            )
        m_min, m_max = -L, L
    offsets = np.arange(m_min, m_max + 1)
    S = _input_matrix(pulse, config, offsets, memory)
    if H_ext is None:
        H_t = _apply_taps(channel, block_window_start(block_index, config), S, Q)
    else:
        H_t = H_ext @ S
    return ObservationModel(H_t, offsets, config, block_index, float(noise_var), float(evm))


def phase_compensation(config: FrameConfig, block_index) -> np.ndarray:
    """``exp(-j 2 pi delta_t delta_f k l)`` for ``k = 0..N-1``.

    An array of block indices gives one column per block.
    """
    k = np.arange(config.N)
    l = np.asarray(block_index)
    kl = k * l if l.ndim == 0 else k[:, None] * l[None, :]
    return np.exp(-2j * np.pi * ((config.density * kl) % 1.0))


@dataclass(frozen=True, eq=False)
class Equalizer:
    """Linear equalizer for one block.

    ``G`` (``N x Q``) is the raw equalizer in the frequency domain, ``gain``
    the resulting desired-symbol gain per row and ``noise_var`` the variance
    of the residual (interference, EVM and noise) after dividing by ``gain``.
    For ``OQAM_MF_MMSE``, ``G`` is the matched filter and ``W`` the real
    ``2N x N`` MMSE stage acting on ``[Re z; Im z]``, already scaled to unit
    gain and with the OQAM phases folded in.
    """

    kind: EqualizerKind
    G: np.ndarray
    phase_comp: np.ndarray
    gain: np.ndarray
    noise_var: np.ndarray
    block_index: int
    W: np.ndarray | None = None
    rank: int | None = None


def _hermitian_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    try:
        return cho_solve(cho_factor(A, lower=False, check_finite=False), B, check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.solve(A, B)


def _residual_variance(T: np.ndarray, G: np.ndarray, desired: slice, evm: float, noise_var: float):
    N = T.shape[0]
    t = T[np.arange(N), np.arange(N) + desired.start]
    total = np.sum(np.abs(T) ** 2, axis=1)
    var = (total - np.abs(t) ** 2) + evm**2 * total + noise_var * np.sum(np.abs(G) ** 2, axis=1)
    return t, var / np.maximum(np.abs(t) ** 2, np.finfo(float).tiny)


def _oqam_columns(model: ObservationModel, B: np.ndarray) -> np.ndarray:
    """Fold ``j**(k+l+m) exp(j 2 pi rho k (l+m))`` into the columns of ``B``."""
    cfg = model.config
    N = cfg.N
    k = np.tile(np.arange(N), len(model.offsets))
    lm = np.repeat(model.offsets + model.block_index, N)
    ph = (1j) ** ((k + lm) % 4) * np.exp(2j * np.pi * ((cfg.density * k * lm) % 1.0))
    return B * ph[None, :]


def _real_cov(C: np.ndarray) -> np.ndarray:
    """Covariance of ``[Re v; Im v]`` for circular ``v`` with covariance ``C``."""
    return 0.5 * np.block([[C.real, -C.imag], [C.imag, C.real]])


def make_equalizer(model: ObservationModel, kind, *, oqam_stage: str = "per_subcarrier") -> Equalizer:
    """Build the equalizer of ``kind`` for the model's block and noise level.

    For ``OQAM_MF_MMSE`` the matched filter is followed by a second stage
    chosen by ``oqam_stage``: ``"per_subcarrier"`` (one MMSE tap per
    matched-filter output, the default), ``"block"`` (complex ``N x N`` MMSE
    across the block's outputs) or ``"widely_linear"`` (real ``2N x 2N`` MMSE
    on ``[Re z; Im z]``).  All three take the real part as the PAM estimate.
    """
    kind = EqualizerKind(kind)
    cfg = model.config
    H = model.H_tot_f
    H_l = model.H_l_f
    evm, s2 = model.evm, model.noise_var
    eps = phase_compensation(cfg, model.block_index)
    if kind is EqualizerKind.OQAM_MF_MMSE and not cfg.scheme.is_oqam:
        raise ValueError("OQAM_MF_MMSE requires an OQAM scheme")

    if kind is EqualizerKind.OQAM_MF_MMSE:
        G = H_l.conj().T
        B = _oqam_columns(model, model.mf_cross)
        N = cfg.N
        k = np.arange(N)
        if oqam_stage == "per_subcarrier":
            # one complex MMSE tap per matched-filter output, then the real part
            b_kk = B[k, model.desired.start + k]
            p_z = np.sum(np.abs(B) ** 2, axis=1)
            c_v = evm**2 * p_z + s2 * np.sum(np.abs(G) ** 2, axis=1)
            c = b_kk.conj() / (p_z + c_v)
            u = np.stack([c.real, -c.imag])
            # second moments of [Re z_k, Im z_k] (real symbols plus circular noise)
            rr = np.sum(B.real**2, axis=1) + 0.5 * c_v
            ii = np.sum(B.imag**2, axis=1) + 0.5 * c_v
            ri = np.sum(B.real * B.imag, axis=1)
            t = u[0] * b_kk.real + u[1] * b_kk.imag
            var = (u[0] ** 2 * rr + 2 * u[0] * u[1] * ri + u[1] ** 2 * ii) / t**2 - 1.0
            W = np.zeros((2 * N, N))
            W[k, k] = u[0] / t
            W[N + k, k] = u[1] / t
        else:
            Br = np.vstack([B.real, B.imag])
            # circular EVM and noise seen through the matched filter
            C_v = evm**2 * (B @ B.conj().T) + s2 * (G @ G.conj().T)
            cov = Br @ Br.T + _real_cov(C_v)
            cov = 0.5 * (cov + cov.T)
            want = Br[:, model.desired]
            if oqam_stage == "widely_linear":
                W = _hermitian_solve(cov, want)
            elif oqam_stage == "block":
                # complex N x N MMSE on the matched-filter outputs, then the real
                # part: Re(c z) = [Re c, -Im c] [Re z; Im z]
                C = (B @ B.conj().T) + C_v
                c = _hermitian_solve(0.5 * (C + C.conj().T), B[:, model.desired]).conj().T
                W = np.vstack([c.real.T, -c.imag.T])
            else:
                raise ValueError(f"unknown OQAM stage {oqam_stage!r}")
            t = np.sum(W * want, axis=0)
            W = W / t
            var = np.einsum("ik,ij,jk->k", W, cov, W) - 1.0
        return Equalizer(kind, G, np.ones(N, dtype=complex), np.ones(N), np.maximum(var, 0.0),
                         model.block_index, W=W)

    rank = None
    if kind is EqualizerKind.MF:
        G = H_l.conj().T
    elif kind is EqualizerKind.LS:
        u, sv, vh = np.linalg.svd(H, full_matrices=False)
        keep = sv > LS_RCOND * sv[0] if sv.size and sv[0] > 0 else np.zeros(sv.shape, bool)
        rank = int(keep.sum())
        G = (vh[keep].conj().T / sv[keep]) @ u[:, keep].conj().T
        G = G[model.desired]
    else:
        if s2 <= 0 and evm <= 0:
            raise ValueError("MMSE needs noise_var > 0 (or a nonzero EVM)")
        R = (1.0 + evm**2) * model.gram + s2 * np.eye(cfg.Q)
        G = _hermitian_solve(R, H_l).conj().T
    T = G @ H
    t, var = _residual_variance(T, G, model.desired, evm, s2)
    if kind is EqualizerKind.LS and np.any(np.abs(t) < 1e-6):
        bad = np.flatnonzero(np.abs(t) < 1e-6)
        raise np.linalg.LinAlgError(
            f"rank-deficient system (rank {rank} of {H.shape[1]}): subcarriers {bad.tolist()} unobservable"
        )
    return Equalizer(kind, G, eps, t, var, model.block_index, rank=rank)


def equalize(model: ObservationModel | None, eq: Equalizer, y_f, block_index: int | None = None,
             normalize: bool = True) -> np.ndarray:
    """Soft estimates ``diag(eps_l) G y_f`` for one window (or ``Q x B`` windows).

    With ``normalize`` each row is divided by its desired-symbol gain.  OQAM
    equalizers return the real PAM estimates.  ``block_index`` overrides the
    equalizer's block for the phase compensation, which lets a time-invariant
    equalizer serve every block.
    """
    y_f = np.asarray(y_f)
    Q = eq.G.shape[1]
    if y_f.shape[0] != Q:
        raise ValueError(f"received vector has {y_f.shape[0]} samples, expected {Q}")
    z = eq.G @ y_f
    if eq.kind is EqualizerKind.OQAM_MF_MMSE:
        zr = np.concatenate([z.real, z.imag], axis=0)
        return eq.W.T @ zr
    if block_index is None:
        eps = eq.phase_comp
    elif model is None:
        raise ValueError("block_index override needs the observation model")
    else:
        eps = phase_compensation(model.config, block_index)
    if z.ndim == 2 and eps.ndim == 1:
        eps = eps[:, None]
    out = eps * z
    if normalize:
        out = out / (eq.gain[:, None] if out.ndim == 2 else eq.gain)
    return out
