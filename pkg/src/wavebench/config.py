"""Frame parameterization shared by every waveform family.

A :class:`FrameConfig` fixes the lattice (``delta_t``, ``delta_f``), the
discrete-time grid (``N_s`` samples per symbol period, ``Q`` pulse/window
length, ``M_grid`` bin divisor) and the packet geometry.  All discrete-time
quantities use the sampling period ``T_c = T_s / N_s`` as time unit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace


class Scheme(str, enum.Enum):
    OFDM = "OFDM"
    FBMC_QAM = "FBMC_QAM"
    FBMC_OQAM = "FBMC_OQAM"
    SCM = "SCM"
    TFS_QAM = "TFS_QAM"
    TFS_OQAM = "TFS_OQAM"

    @property
    def is_oqam(self) -> bool:
        return self in (Scheme.FBMC_OQAM, Scheme.TFS_OQAM)


class ConfigError(ValueError):
    """A frame or scenario parameter violates a modulation constraint."""


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


_REL = 1e-12


@dataclass(frozen=True)
class FrameConfig:
    scheme: Scheme
    N: int
    delta_t: float
    delta_f: float
    N_s: int
    M_grid: int
    Q: int
    G: int = 8
    G_cp: int = 0
    constellation_order: int = 4
    power: float = 1.0
    T_s: float = 1.0 / 15e3
    zeta_g: float = 1.0
    max_frame_samples: int = 1 << 24

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    # -- derived quantities -------------------------------------------------
    @property
    def density(self) -> float:
        """Lattice density relative to OFDM, ``delta_t * delta_f``."""
        return self.delta_t * self.delta_f

    @property
    def n_slots(self) -> int:
        return 2 * self.G + 1

    @property
    def T(self) -> float:
        """Reference (Nyquist) symbol time in samples, ``N_s / delta_t``."""
        return self.N_s / self.delta_t

    @property
    def sample_rate(self) -> float:
        return self.N_s / self.T_s

    @property
    def stream_length(self) -> int:
        return self.n_slots * self.N_s + self.Q - self.N_s

    @property
    def bits_per_symbol(self) -> int:
        bits = int(round(math.log2(self.constellation_order)))
        return bits // 2 if self.scheme.is_oqam else bits

    def bin_frequency(self) -> float:
        """Subcarrier spacing in cycles per sample (``M_grid / Q`` on an aligned grid)."""
        return self.density / self.N_s

    # -- validation ---------------------------------------------------------
    def checks(self) -> list[Check]:
        s, d = self.scheme, self.density
        out = [
            Check("N >= 1", self.N >= 1, f"N={self.N}"),
            Check("N_s >= 1", self.N_s >= 1, f"N_s={self.N_s}"),
            Check("Q >= 1", self.Q >= 1, f"Q={self.Q}"),
            Check("M_grid >= 1", self.M_grid >= 1, f"M_grid={self.M_grid}"),
            Check("G >= 0", self.G >= 0, f"G={self.G}"),
            Check("0 < zeta_g <= 1", 0.0 < self.zeta_g <= 1.0, f"zeta_g={self.zeta_g}"),
            Check("power > 0", self.power > 0, f"P={self.power}"),
        ]
        lhs = self.Q * d
        rhs = self.M_grid * self.N_s
        out.append(Check(
            "Q*delta_f*delta_t = M_grid*N_s",
            math.isclose(lhs, rhs, rel_tol=1e-9),
            f"Q*delta_f*delta_t = {self.Q}*{self.delta_f:g}*{self.delta_t:g} = {lhs:.12g}; "
            f"M_grid*N_s = {self.M_grid}*{self.N_s} = {rhs}",
        ))
        out.append(Check(
            "N*M_grid <= Q", self.N * self.M_grid <= self.Q,
            f"{self.N}*{self.M_grid} vs Q={self.Q}",
        ))
        order_ok = _valid_order(self.constellation_order)
        out.append(Check(
            "constellation order valid",
            order_ok,
            f"M={self.constellation_order}" + (" (square QAM required)" if not order_ok else ""),
        ))
        tol = 1e-12
        if s is Scheme.FBMC_QAM:
            out += [Check("N > 1", self.N > 1), Check("delta_t*delta_f >= 1", d >= 1 - tol, f"{d:g}")]
        elif s is Scheme.FBMC_OQAM:
            out += [Check("N > 1", self.N > 1), Check("delta_t*delta_f >= 0.5", d >= 0.5 - tol, f"{d:g}")]
        elif s is Scheme.TFS_QAM:
            out += [Check("N > 1", self.N > 1), Check("delta_t*delta_f < 1", d < 1 - tol, f"{d:g}")]
        elif s is Scheme.TFS_OQAM:
            out += [Check("N > 1", self.N > 1), Check("delta_t*delta_f < 0.5", d < 0.5 - tol, f"{d:g}")]
        elif s is Scheme.SCM:
            out += [
                Check("N = 1", self.N == 1, f"N={self.N}"),
                Check("delta_t*delta_f >= 1", d >= 1 - tol, f"{d:g}"),
                Check("G_cp <= 2G+1", 0 <= self.G_cp <= self.n_slots, f"G_cp={self.G_cp}"),
            ]
        elif s is Scheme.OFDM:
            useful = self.N_s - self.G_cp
            expect = self.N_s / useful if useful > 0 else math.inf
            out += [
                Check("delta_f = 1", math.isclose(self.delta_f, 1.0, rel_tol=_REL), f"{self.delta_f:g}"),
                Check(
                    "delta_t = 1 + T_cp/T",
                    useful > 0 and math.isclose(self.delta_t, expect, rel_tol=1e-9),
                    f"delta_t={self.delta_t:.12g}, 1+T_cp/T={expect:.12g}",
                ),
            ]
        out.append(Check(
            "frame length <= max_frame_samples",
            self.stream_length <= self.max_frame_samples,
            f"{self.stream_length} samples",
        ))
        return out

    def validate(self) -> "FrameConfig":
        bad = [c for c in self.checks() if not c.ok]
        if bad:
            msg = "; ".join(f"{c.name} violated ({c.detail})" if c.detail else f"{c.name} violated" for c in bad)
            raise ConfigError(msg)
        return self

    def with_(self, **kw) -> "FrameConfig":
        return replace(self, **kw)


def _valid_order(order: int) -> bool:
    if order < 2 or order & (order - 1):
        return False
    # square QAM only, so OQAM always has a sqrt(M)-PAM counterpart
    return int(math.log2(order)) % 2 == 0
