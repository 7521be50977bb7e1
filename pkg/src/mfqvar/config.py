"""Run configuration (YAML).

Schema, version 1::

    version: 1
    target: gdp                 # quarterly series nowcast by the model
    quarter_anchor: third       # month of the quarter carried by quarterly dates
    series:
      - {id: ip, frequency: monthly, transformation: logdiff100}
      - {id: gdp, frequency: quarterly, transformation: logdiff400}
    model:
      p: 2
      tau: [0.1, 0.5, 0.9]      # one fit per entry; a scalar applies to every series
    prior:                      # all optional
      beta_var: 100.0           # Omega_beta = beta_var * I
      sigma_df: null            # default n + 2
      sigma_scale: 1.0          # Phi_0 = sigma_scale * I
    sampler:
      draws: 1000
      burn_in: 500
      thin: 1
      chains: 2
      seed: 20240101
      slice_width: 0.5
      sigma_sweeps: 1
      store_w: false
    report:
      credible_mass: 0.68
      forecast_paths: 200       # simulated paths per draw for Forecast rows
    counterfactual:             # defaults for the counterfactual command
      series: nfci              # monthly series to shock
      window: 3                 # number of final released months shocked
      shock_size: 1.0           # in in-sample standard deviations
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .data import QUARTER_ANCHORS, SeriesSpec
from .errors import SettingsError, SpecError

CONFIG_VERSION = 1


@dataclass(frozen=True)
class SamplerConfig:
    draws: int = 1000
    burn_in: int = 500
    thin: int = 1
    chains: int = 2
    seed: int = 20240101
    slice_width: float = 0.5
    sigma_sweeps: int = 1
    store_w: bool = False


@dataclass(frozen=True)
class PriorConfig:
    beta_var: float = 100.0
    sigma_df: Optional[float] = None
    sigma_scale: float = 1.0


@dataclass(frozen=True)
class CounterfactualConfig:
    series: Optional[str] = None
    window: int = 3
    shock_size: float = 1.0


@dataclass(frozen=True)
class RunSettings:
    series: tuple
    target: str
    p: int = 2
    taus: tuple = (0.1, 0.5, 0.9)
    quarter_anchor: str = "third"
    prior: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    credible_mass: float = 0.68
    forecast_paths: int = 200
    counterfactual: CounterfactualConfig = field(default_factory=CounterfactualConfig)

    @property
    def n(self):
        return len(self.series)

    def tau_vector(self, tau):
        """Expand one ``taus`` entry to a per-series vector."""
        if isinstance(tau, (list, tuple)):
            if len(tau) != self.n:
                raise SettingsError(f"tau vector {tau} needs {self.n} entries")
            return [float(t) for t in tau]
        return [float(tau)] * self.n

    def to_dict(self):
        d = asdict(self)
        d["series"] = [asdict(s) for s in self.series]
        d["taus"] = [list(t) if isinstance(t, (list, tuple)) else t for t in self.taus]
        d["version"] = CONFIG_VERSION
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, taus=None, draws=None, burn_in=None, chains=None):
        sampler = self.sampler
        changes = {k: v for k, v in
                   (("seed", seed), ("draws", draws), ("burn_in", burn_in), ("chains", chains))
                   if v is not None}
        if changes:
            sampler = replace(sampler, **changes)
            _check_sampler(sampler)
        out = replace(self, sampler=sampler)
        if taus is not None:
            out = replace(out, taus=tuple(taus))
            _check_taus(out)
        return out


def _check_sampler(s: SamplerConfig):
    if not isinstance(s.draws, int) or s.draws <= 0:
        raise SettingsError(f"draws must be a positive integer, got {s.draws!r}")
    if not isinstance(s.burn_in, int) or s.burn_in < 0:
        raise SettingsError(f"burn_in must be a non-negative integer, got {s.burn_in!r}")
    if not isinstance(s.thin, int) or s.thin < 1:
        raise SettingsError(f"thin must be >= 1, got {s.thin!r}")
    if not isinstance(s.chains, int) or s.chains < 1:
        raise SettingsError(f"chains must be >= 1, got {s.chains!r}")
    if not isinstance(s.seed, int) or not 0 <= s.seed < 2**64:
        raise SettingsError(f"seed must be a 64-bit unsigned integer, got {s.seed!r}")
    if not s.slice_width > 0:
        raise SettingsError("slice_width must be positive")
    if not isinstance(s.sigma_sweeps, int) or s.sigma_sweeps < 1:
        raise SettingsError("sigma_sweeps must be >= 1")


def _check_taus(settings: RunSettings):
    if not settings.taus:
        raise SettingsError("at least one tau is required")
    for tau in settings.taus:
        for t in settings.tau_vector(tau):
            if not 0.0 < t < 1.0:
                raise SettingsError(f"tau {t} is outside (0, 1)")


def _section(raw, key, cls):
    body = raw.get(key) or {}
    if not isinstance(body, dict):
        raise SettingsError(f"section {key!r} must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(body) - allowed
    if unknown:
        raise SettingsError(f"unknown key(s) in {key!r}: {', '.join(sorted(unknown))}")
    return cls(**body)


def parse_config(raw: dict) -> RunSettings:
    if not isinstance(raw, dict):
        raise SettingsError("configuration must be a mapping")
    version = raw.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise SettingsError(f"unsupported config version {version}")
    unknown = set(raw) - {"version", "target", "quarter_anchor", "series", "model", "prior",
                          "sampler", "report", "counterfactual"}
    if unknown:
        raise SettingsError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    entries = raw.get("series")
    if not entries:
        raise SettingsError("configuration declares no series")
    try:
        series = tuple(SeriesSpec(**e) for e in entries)
    except TypeError as exc:
        raise SettingsError(f"bad series entry: {exc}") from exc
    ids = [s.id for s in series]
    if len(set(ids)) != len(ids):
        raise SpecError("series ids must be unique")
    target = raw.get("target")
    if target not in ids:
        raise SpecError(f"target {target!r} is not a declared series")
    anchor = raw.get("quarter_anchor", "third")
    if anchor not in QUARTER_ANCHORS:
        raise SettingsError(f"quarter_anchor must be one of {sorted(QUARTER_ANCHORS)}")
    model = raw.get("model") or {}
    p = model.get("p", 2)
    if not isinstance(p, int) or p < 1:
        raise SettingsError(f"lag order p must be a positive integer, got {p!r}")
    taus = model.get("tau", [0.1, 0.5, 0.9])
    if not isinstance(taus, list):
        taus = [taus]
    report = raw.get("report") or {}
    unknown = set(report) - {"credible_mass", "forecast_paths"}
    if unknown:
        raise SettingsError(f"unknown key(s) in 'report': {', '.join(sorted(unknown))}")
    mass = float(report.get("credible_mass", 0.68))
    if not 0 < mass < 1:
        raise SettingsError("credible_mass must be in (0, 1)")
    paths = report.get("forecast_paths", 200)
    if not isinstance(paths, int) or paths < 1:
        raise SettingsError(f"forecast_paths must be a positive integer, got {paths!r}")
    cf = _section(raw, "counterfactual", CounterfactualConfig)
    if cf.series is not None and cf.series not in ids:
        raise SpecError(f"counterfactual series {cf.series!r} is not a declared series")
    settings = RunSettings(
        series=series, target=target, p=p, taus=tuple(tuple(t) if isinstance(t, list) else t for t in taus),
        quarter_anchor=anchor, prior=_section(raw, "prior", PriorConfig),
        sampler=_section(raw, "sampler", SamplerConfig), credible_mass=mass,
        forecast_paths=paths, counterfactual=cf,
    )
    _check_sampler(settings.sampler)
    _check_taus(settings)
    return settings


def load_config(path) -> RunSettings:
    path = Path(path)
    if not path.exists():
        raise SettingsError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise SettingsError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw)
