"""Run configuration: flat ``key = value`` files with command-line overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .ensemble import MIN_K1, MIN_K2
from .localization import lattice_c0_min, radial_c0_min, temporal_c0_min


class ConfigError(ValueError):
    pass


IC_KINDS = ("random", "taylor_green", "zero")


@dataclass(frozen=True)
class RunConfig:
    n: int = 48
    L: float = 1.6
    R0: float = 0.2
    T: float = 0.05
    steps: int = 300
    snapshot_every: int = 1
    nu: float = 1.0
    dealias: bool = True
    nonlinear: bool = True
    cfl: float = 0.5
    ic: str = "random"
    ic_kmin: float = 2.0
    ic_kmax: float = 6.0
    ic_energy: float = 20.0
    ic_amplitude: float = 1.0
    seed: int = 0
    C0: float = 60.0
    rho: float = 0.75
    K1: float = 64.0
    K2: float = 8.0
    beta: float = 0.5
    q: float = 4.0
    M: float = 1.0
    C3: float | None = None
    C1: float | None = None
    coherence_samples: int = 512
    coherence_snapshots: int = 8
    morrey_center_stride: int = 1
    verify_scales: str = "0.1,0.05"
    verify_trials: int = 100
    output: str = "run"

    @property
    def dt(self) -> float:
        return self.T / self.steps if self.T > 0 else 1.0

    @property
    def outer_radius(self) -> float:
        return 2.0 * self.R0 + self.R0 ** (2.0 / 3.0)

    def refinement_scales(self) -> list[float]:
        return [float(s) for s in self.verify_scales.split(",") if s.strip()]

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        """Raise :class:`ConfigError` naming the first violated constraint."""
        if self.n < 8 or self.n % 2:
            raise ConfigError(f"n={self.n}: grid size must be an even integer >= 8")
        if not self.L > 0:
            raise ConfigError(f"L={self.L}: box length must be positive")
        if not (0 < self.R0 < 1):
            raise ConfigError(f"R0={self.R0}: need 0 < R0 < 1")
        if not self.outer_radius < 0.5 * self.L:
            raise ConfigError(
                f"ball B(0, 2R0 + R0^(2/3)) of radius {self.outer_radius:.4f} must lie strictly inside "
                f"the half-box L/2={0.5 * self.L:.4f}"
            )
        if self.T < 0 or (self.T > 0 and not self.T > self.R0**2):
            raise ConfigError(f"T={self.T}: need T > R0^2 = {self.R0**2:.4g} (or T = 0 for initial data only)")
        if self.steps < 1:
            raise ConfigError(f"steps={self.steps}: need at least one step")
        if self.snapshot_every < 1:
            raise ConfigError(f"snapshot_every={self.snapshot_every}: must be >= 1")
        if not self.nu > 0:
            raise ConfigError(f"nu={self.nu}: viscosity must be positive")
        if self.ic not in IC_KINDS:
            raise ConfigError(f"ic={self.ic!r}: expected one of {', '.join(IC_KINDS)}")
        if self.ic == "random":
            if not (0 < self.ic_kmin <= self.ic_kmax):
                raise ConfigError(f"ic band [{self.ic_kmin}, {self.ic_kmax}] must satisfy 0 < kmin <= kmax")
            if not self.ic_kmax < self.n / 3.0:
                raise ConfigError(f"ic_kmax={self.ic_kmax} must lie below the dealias cutoff n/3={self.n / 3:.3f}")
            if self.ic_energy < 0:
                raise ConfigError("ic_energy must be non-negative")
        if not (0.5 <= self.rho < 1):
            raise ConfigError(f"rho={self.rho}: need 1/2 <= rho < 1")
        cmin = max(radial_c0_min(self.rho), lattice_c0_min(self.rho), temporal_c0_min(self.rho))
        if self.C0 < cmin:
            raise ConfigError(f"C0={self.C0} below the certified cutoff constant {cmin:.4f} for rho={self.rho}")
        if self.K1 < MIN_K1:
            raise ConfigError(f"K1={self.K1}: the lattice construction needs K1 >= {MIN_K1}")
        if self.K2 < MIN_K2:
            raise ConfigError(f"K2={self.K2}: the lattice construction needs K2 >= {MIN_K2}")
        if not (0 < self.beta < 1):
            raise ConfigError(f"beta={self.beta}: need 0 < beta < 1")
        if not self.q > 2:
            raise ConfigError(f"q={self.q}: Morrey exponent must exceed 2")
        if not self.M > 0:
            raise ConfigError(f"M={self.M}: gradient threshold must be positive")
        if self.C3 is not None and not self.C3 > 0:
            raise ConfigError("C3 must be positive when supplied")
        if self.C1 is not None and not self.C1 > 0:
            raise ConfigError("C1 must be positive when supplied")
        try:
            scales = self.refinement_scales()
        except ValueError:
            raise ConfigError(f"verify_scales={self.verify_scales!r}: expected comma-separated numbers")
        prev = self.R0
        for s in scales:
            if not (0 < s < prev):
                raise ConfigError(f"refinement scale R'={s} must satisfy 0 < R' < R={prev}")
            prev = s
        if self.verify_trials < 1:
            raise ConfigError("verify_trials must be >= 1")
        return self


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    typ = str(_TYPES[key])
    s = raw.strip()
    if "None" in typ and s.lower() in ("", "none"):
        return None
    try:
        if typ.startswith("bool"):
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ.startswith("int"):
            return int(s)
        if typ.startswith("float"):
            v = float(s)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"{key}={raw!r}: cannot parse as {typ}") from None
    return s


def parse_lines(lines) -> dict:
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        k = k.strip()
        out[k] = _coerce(k, v)
    return out


def load_config(path=None, overrides=(), base: RunConfig | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``key=value`` overrides; validated."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_lines(text.splitlines()))
    values.update(parse_lines(overrides))
    cfg = dataclasses.replace(base or RunConfig(), **values)
    return cfg.validate()


def from_dict(d: dict) -> RunConfig:
    known = {k: v for k, v in d.items() if k in _TYPES}
    return RunConfig(**known).validate()


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
