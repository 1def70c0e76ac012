"""Experiment manifests: parsing, validation and execution.

A manifest is a TOML file with an optional top-level ``seed`` and a list of
``[[scenario]]`` tables.  Link scenarios (``kind = "link"``, the default)
describe one waveform over a fading link; uplink scenarios
(``kind = "uplink"``) describe the massive-MIMO single-carrier uplink and
may list several antenna counts and compression factors, each of which
becomes its own job and CSV file.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .ase import LinkScenario, estimate_ase, estimate_ase_gaussian_inputs
from .channel import NAMED_PROFILES, ChannelProfile
from .config import Check, ConfigError, FrameConfig, Scheme
from .mimo import UplinkEqualizer, UplinkScenario, average_curves, uplink_ase
from .pulses import PulseKind
from .receiver import EqualizerKind


class ManifestError(ValueError):
    """The manifest cannot be parsed or has malformed fields."""


_FRAME_KEYS = {f.name for f in fields(FrameConfig)}
_LINK_KEYS = {"name", "kind", "frame", "pulse", "channel", "equalizer", "evm_fraction", "snr_db", "monte_carlo",
              "seed", "output", "inputs", "bandwidth_factor", "b_ref_hz"}
_UPLINK_KEYS = {"name", "kind", "U", "N_BS", "delta_t", "N_T", "pulse", "inputs", "constellation_order", "power",
                "symbol_rate", "channel", "equalizer", "remove_interference", "psd", "snr_db", "monte_carlo", "seed",
                "output"}
_PULSE_KEYS = {"kind", "rolloff", "support", "span_symbols"}
_CHANNEL_KEYS = {"profile", "doppler_hz", "delays_ns", "powers_db"}
_MC_KEYS = {"n_channels", "n_symbols"}


@dataclass(frozen=True)
class Job:
    """One CSV worth of work."""

    name: str
    scenario: object
    gaussian: bool = False
    equalizer: UplinkEqualizer | None = None
    remove_interference: bool = False
    psd: str = "colored"
    output: str | None = None

    @property
    def kind(self) -> str:
        return "uplink" if isinstance(self.scenario, UplinkScenario) else "link"


@dataclass
class Manifest:
    path: str
    seed: int
    jobs: list = field(default_factory=list)


def _check_keys(table: dict, allowed: set, where: str) -> None:
    if not isinstance(table, dict):
        raise ManifestError(f"{where}: expected a table")
    extra = sorted(set(table) - allowed)
    if extra:
        raise ManifestError(f"{where}: unknown field(s) {', '.join(extra)}")


def _get(table: dict, key: str, kind, where: str, default=None, required=False):
    if key not in table:
        if required:
            raise ManifestError(f"{where}.{key}: required field missing")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind in (int, float):
        raise ManifestError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _float_list(table, key, where, default=None):
    value = table.get(key, default)
    if value is None:
        raise ManifestError(f"{where}.{key}: required field missing")
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                              for v in value):
        raise ManifestError(f"{where}.{key}: expected a number or a list of numbers")
    return [float(v) for v in value]


def _enum(cls, value, where):
    try:
        return cls(value)
    except ValueError:
        names = ", ".join(m.value for m in cls)
        raise ManifestError(f"{where}: {value!r} is not one of {names}") from None


def _profile(table: dict, where: str) -> ChannelProfile:
    _check_keys(table, _CHANNEL_KEYS, where)
    doppler = _get(table, "doppler_hz", float, where, 0.0)
    if "delays_ns" in table or "powers_db" in table:
        if "profile" in table:
            raise ManifestError(f"{where}: give either profile or delays_ns/powers_db")
        try:
            return ChannelProfile.from_db(_float_list(table, "delays_ns", where), _float_list(table, "powers_db", where),
                                          doppler)
        except ValueError as exc:
            raise ManifestError(f"{where}: {exc}") from None
    name = _get(table, "profile", str, where, "ETU")
    if name.upper() not in NAMED_PROFILES:
        raise ManifestError(f"{where}.profile: unknown profile {name!r} (known: {', '.join(NAMED_PROFILES)})")
    try:
        return NAMED_PROFILES[name.upper()](doppler_hz=doppler)
    except ValueError as exc:
        raise ManifestError(f"{where}: {exc}") from None


def _monte_carlo(table: dict, where: str):
    table = table or {}
    _check_keys(table, _MC_KEYS, where)
    return _get(table, "n_channels", int, where, 20), _get(table, "n_symbols", int, where, 2000)


def _inputs(sc: dict, where: str) -> bool:
    inputs = _get(sc, "inputs", str, where, "constellation")
    if inputs not in ("constellation", "gaussian"):
        raise ManifestError(f"{where}.inputs: expected 'constellation' or 'gaussian', got {inputs!r}")
    return inputs == "gaussian"


def _link_jobs(sc: dict, where: str, seed: int) -> list[Job]:
    _check_keys(sc, _LINK_KEYS, where)
    frame = _get(sc, "frame", dict, where, required=True)
    _check_keys(frame, _FRAME_KEYS, f"{where}.frame")
    kw = dict(frame)
    if "scheme" not in kw:
        raise ManifestError(f"{where}.frame.scheme: required field missing")
    kw["scheme"] = _enum(Scheme, kw["scheme"], f"{where}.frame.scheme")
    try:
        config = FrameConfig(**kw)
    except TypeError as exc:
        raise ManifestError(f"{where}.frame: {exc}") from None
    pulse = _get(sc, "pulse", dict, where, {})
    _check_keys(pulse, _PULSE_KEYS - {"span_symbols"}, f"{where}.pulse")
    mc_channels, mc_symbols = _monte_carlo(_get(sc, "monte_carlo", dict, where), f"{where}.monte_carlo")
    scenario = LinkScenario(
        name=_get(sc, "name", str, where, required=True),
        config=config,
        pulse=_enum(PulseKind, pulse.get("kind", "RECT"), f"{where}.pulse.kind"),
        profile=_profile(_get(sc, "channel", dict, where, {}), f"{where}.channel"),
        equalizer=_enum(EqualizerKind, sc.get("equalizer", "MMSE"), f"{where}.equalizer"),
        rolloff=_get(pulse, "rolloff", float, f"{where}.pulse", 0.0),
        pulse_support=_get(pulse, "support", int, f"{where}.pulse"),
        evm=_get(sc, "evm_fraction", float, where, 0.0),
        snr_db=tuple(_float_list(sc, "snr_db", where)),
        n_channels=mc_channels,
        n_symbols=mc_symbols,
        seed=_get(sc, "seed", int, where, seed),
        b_ref_hz=_get(sc, "b_ref_hz", float, where, 1.92e6),
        bandwidth_factor=_get(sc, "bandwidth_factor", float, where),
    )
    return [Job(scenario.name, scenario, gaussian=_inputs(sc, where), output=_get(sc, "output", str, where))]


def _uplink_jobs(sc: dict, where: str, seed: int) -> list[Job]:
    _check_keys(sc, _UPLINK_KEYS, where)
    name = _get(sc, "name", str, where, required=True)
    pulse = _get(sc, "pulse", dict, where, {})
    _check_keys(pulse, {"kind", "rolloff", "span_symbols"}, f"{where}.pulse")
    gaussian = _inputs(sc, where)
    order = _get(sc, "constellation_order", int, where, 4)
    mc_channels, mc_symbols = _monte_carlo(_get(sc, "monte_carlo", dict, where), f"{where}.monte_carlo")
    antennas = [int(v) for v in _float_list(sc, "N_BS", where)]
    compressions = _float_list(sc, "delta_t", where, [1.0])
    equalizer = _enum(UplinkEqualizer, sc.get("equalizer", "ONE_TAP"), f"{where}.equalizer")
    output = _get(sc, "output", str, where)
    if output and len(antennas) * len(compressions) > 1:
        raise ManifestError(f"{where}.output: a single output name cannot hold several N_BS/delta_t jobs")
    jobs = []
    for n_bs in antennas:
        for dt in compressions:
            job_name = name
            if len(antennas) > 1:
                job_name += f"-nbs{n_bs}"
            if len(compressions) > 1:
                job_name += f"-dt{dt:.4g}"
            try:
                scenario = UplinkScenario(
                    name=job_name,
                    U=_get(sc, "U", int, where, 4),
                    N_BS=n_bs,
                    pulse=_enum(PulseKind, pulse.get("kind", "RRC"), f"{where}.pulse.kind"),
                    rolloff=_get(pulse, "rolloff", float, f"{where}.pulse", 0.2),
                    delta_t=dt,
                    N_T=_get(sc, "N_T", int, where, 12),
                    span_symbols=_get(pulse, "span_symbols", int, f"{where}.pulse", 16),
                    constellation_order=None if gaussian else order,
                    power=_get(sc, "power", float, where, 1.0),
                    symbol_rate=_get(sc, "symbol_rate", float, where, 1.92e6),
                    profile=_profile(_get(sc, "channel", dict, where, {}), f"{where}.channel"),
                    snr_db=tuple(_float_list(sc, "snr_db", where)),
                    n_channels=mc_channels,
                    n_symbols=mc_symbols,
                    seed=_get(sc, "seed", int, where, seed),
                )
            except ValueError as exc:
                raise ConfigError(f"{where} ({job_name}): {exc}") from None
            jobs.append(Job(job_name, scenario, gaussian, equalizer,
                            bool(_get(sc, "remove_interference", bool, where, False)),
                            _get(sc, "psd", str, where, "colored"), output))
    return jobs


def parse_manifest(text: str, path: str = "<string>") -> Manifest:
    """Parse manifest text into jobs; raises :class:`ManifestError` on malformed input.

    Constraint violations of otherwise well-formed scenarios are reported
    by :func:`validate_jobs`, not raised here.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    _check_keys(data, {"seed", "scenario"}, "manifest")
    seed = _get(data, "seed", int, "manifest", 0)
    scenarios = _get(data, "scenario", list, "manifest", [])
    manifest = Manifest(path, seed)
    for i, sc in enumerate(scenarios):
        where = f"scenario[{i}]"
        if not isinstance(sc, dict):
            raise ManifestError(f"{where}: expected a table")
        kind = sc.get("kind", "link")
        if kind == "link":
            manifest.jobs += _link_jobs(sc, where, seed)
        elif kind == "uplink":
            manifest.jobs += _uplink_jobs(sc, where, seed)
        else:
            raise ManifestError(f"{where}.kind: expected 'link' or 'uplink', got {kind!r}")
    seen = set()
    for job in manifest.jobs:
        if job.name in seen:
            raise ManifestError(f"scenario name {job.name!r} is not unique")
        seen.add(job.name)
    return manifest


def load_manifest(path) -> Manifest:
    path = Path(path)
    return parse_manifest(path.read_text(), str(path))


def job_checks(job: Job) -> list[Check]:
    """Every constraint checked for ``job``, passing or not."""
    sc = job.scenario
    snr = list(sc.snr_db)
    out = [Check("snr_db strictly increasing", all(b > a for a, b in zip(snr, snr[1:])) and bool(snr),
                 f"{snr}")]
    out.append(Check("n_channels >= 1", sc.n_channels >= 1, f"{sc.n_channels}"))
    out.append(Check("n_symbols >= 10", sc.n_symbols >= 10, f"{sc.n_symbols}"))
    if job.kind == "uplink":
        if job.equalizer is UplinkEqualizer.FULL_ISI:
            out.append(Check("FULL_ISI requires gaussian inputs", job.gaussian))
        out.append(Check("psd in {colored, white}", job.psd in ("colored", "white"), job.psd))
        return out
    cfg = sc.config
    out += cfg.checks()
    out.append(Check("0 <= evm_fraction", sc.evm >= 0, f"{sc.evm}"))
    oqam_eq = sc.equalizer is EqualizerKind.OQAM_MF_MMSE
    out.append(Check("OQAM_MF_MMSE only for OQAM schemes", cfg.scheme.is_oqam or not oqam_eq, sc.equalizer.value))
    try:
        sc.make_pulse()
        out.append(Check("pulse constructible on the grid", True, f"{sc.pulse.value}, Q={cfg.Q}"))
    except ValueError as exc:
        out.append(Check("pulse constructible on the grid", False, str(exc)))
    return out


def validate_jobs(manifest: Manifest) -> dict:
    """``{job name: [Check, ...]}`` for every job."""
    return {job.name: job_checks(job) for job in manifest.jobs}


def with_overrides(manifest: Manifest, seed=None, n_channels=None, n_symbols=None) -> Manifest:
    """Copy of ``manifest`` with the seed or Monte-Carlo sizes replaced in every job."""
    kw = {}
    if seed is not None:
        kw["seed"] = int(seed)
    if n_channels is not None:
        kw["n_channels"] = int(n_channels)
    if n_symbols is not None:
        kw["n_symbols"] = int(n_symbols)
    if not kw:
        return manifest
    jobs = [replace(j, scenario=replace(j.scenario, **kw)) for j in manifest.jobs]
    return replace(manifest, seed=kw.get("seed", manifest.seed), jobs=jobs)


def run_job(job: Job, jobs: int = 1):
    """The :class:`AseCurve` of one job."""
    sc = job.scenario
    if job.kind == "link":
        fn = estimate_ase_gaussian_inputs if job.gaussian else estimate_ase
        return fn(sc, jobs=jobs)
    curves = uplink_ase(sc, equalizer=job.equalizer, remove_interference=job.remove_interference, psd=job.psd)
    curve = average_curves(curves, job.name)
    meta = dict(curve.metadata, inputs="gaussian" if job.gaussian else f"{sc.constellation_order}-QAM",
                remove_interference=job.remove_interference)
    return replace(curve, metadata=meta)


def versions() -> dict:
    from . import __version__
    return {"wavebench": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run_manifest(manifest: Manifest, out_dir, jobs: int = 1, log=print) -> dict:
    """Run every job, writing one CSV each plus ``run_summary.json``; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {"manifest": manifest.path, "seed": manifest.seed, "versions": versions(), "scenarios": []}
    t0 = time.perf_counter()
    for job in manifest.jobs:
        t = time.perf_counter()
        curve = run_job(job, jobs)
        target = out_dir / (job.output or f"{job.name}.csv")
        curve.to_csv(target)
        wall = time.perf_counter() - t
        log(f"{job.name}: {len(curve.points)} points -> {target} ({wall:.1f} s)")
        summary["scenarios"].append({"name": job.name, "kind": job.kind, "seed": job.scenario.seed,
                                     "n_channels": job.scenario.n_channels, "n_symbols": job.scenario.n_symbols,
                                     "csv": target.name, "wall_time_s": round(wall, 3)})
    summary["wall_time_s"] = round(time.perf_counter() - t0, 3)
    (out_dir / "run_summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    return summary


def recipe_names() -> list[str]:
    files = resources.files("wavebench") / "recipes"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".toml"))


def recipe_text(name: str) -> str:
    if name not in recipe_names():
        raise KeyError(f"unknown recipe {name!r} (available: {', '.join(recipe_names())})")
    return (resources.files("wavebench") / "recipes" / f"{name}.toml").read_text()
