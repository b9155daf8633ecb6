"""Scenario configuration: a plain ``key = value`` file over baseline defaults.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma-separated,
AP position lists separate points with ``;``. Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError

_CHOICES = {
    "rcs_model": ("swerling2", "weibull"),
    "rcs_correlation": ("common", "independent"),
    "precoder": ("proposed", "noncoord", "both"),
    "dl_mask": ("on", "off", "both"),
    "average_domain": ("linear", "db"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Every physical and run parameter; defaults are the baseline scenario."""

    m_v: int = 12
    m_h: int = 12
    fc: float = 15e9  # Hz
    beta_g_db: float = -90.0
    p_max_dbm: float = 30.0
    gamma_req_db: float = 3.0
    r: float = 250.0  # m, hexagon inner radius
    sigma_rcs_dbsm: float = -10.0
    z: float = 10.0  # m, volume centre altitude
    noise_dbm: float = -60.0
    d: float = 2.0  # m, voxel pitch
    volume: tuple = (6.0, 2.0, 2.0)  # m
    # Layout
    n_aps: int = 3
    ap_height: float = 10.0
    volume_center_xy: tuple | None = None  # default: centroid of AP_1, AP_2, AP_rx
    ap_positions: tuple | None = None  # illuminators, ((x, y, z), ...)
    rx_position: tuple | None = None
    exclude_endpoints: bool = False
    # User model; distances default to the cell-edge picture around r
    ue_serving_distance: float | None = None
    ue_interferer_distances: tuple | None = None
    # Target model
    rcs_model: str = "swerling2"
    weibull_shape: float = 2.0
    weibull_scale: float | None = None  # default: matched mean power
    rcs_correlation: str = "common"
    # Run selection
    dl_mask: str = "both"
    precoder: str = "both"
    average_domain: str = "linear"
    trials: int = 100_000
    cdf_trials: int = 100_000
    roc_trials: int = 1_000_000
    seed: int = 1
    sweep_pmax_start_dbm: float = -5.0
    sweep_pmax_stop_dbm: float = 30.0
    sweep_pmax_step_db: float = 0.5
    sweep_gamma_req_db: tuple = (2.0, 3.0)
    altitudes: tuple = (1.0, 10.0)
    roc_pmax_dbm: tuple = (20.0, 25.0, 30.0)
    roc_pfa_min: float = 1e-4
    voxel_index: int = 0
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        _validate(self)

    def replace(self, **changes) -> ScenarioConfig:
        return dataclasses.replace(self, **changes)

    # Derived quantities
    @property
    def default_center_xy(self) -> tuple:
        return (-self.r, -self.r / math.sqrt(3.0))

    @property
    def center_xy(self) -> tuple:
        return self.volume_center_xy if self.volume_center_xy is not None else self.default_center_xy

    @property
    def serving_distance(self) -> float:
        return self.ue_serving_distance if self.ue_serving_distance is not None else 2 * self.r / math.sqrt(3.0)

    @property
    def interferer_distances(self) -> tuple:
        if self.ue_interferer_distances is not None:
            return self.ue_interferer_distances
        return (4 * self.r / math.sqrt(3.0),) * min(2, self.n_aps - 1)

    @property
    def sweep_pmax(self) -> list:
        n = int(math.floor((self.sweep_pmax_stop_dbm - self.sweep_pmax_start_dbm) / self.sweep_pmax_step_db + 1e-9))
        return [round(self.sweep_pmax_start_dbm + k * self.sweep_pmax_step_db, 10) for k in range(n + 1)]

    def to_text(self) -> str:
        lines = ["# resolved scenario configuration"]
        for f in dataclasses.fields(self):
            if f.name == "source":
                continue
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig) if f.name != "source"}
_INT = {"m_v", "m_h", "n_aps", "trials", "cdf_trials", "roc_trials", "seed", "voxel_index"}
_BOOL = {"exclude_endpoints"}
_TUPLE = {"volume", "volume_center_xy", "sweep_gamma_req_db", "altitudes", "roc_pmax_dbm", "rx_position",
          "ue_interferer_distances"}
_POINTS = {"ap_positions"}
_OPTIONAL = {"volume_center_xy", "ap_positions", "rx_position", "ue_serving_distance",
             "ue_interferer_distances", "weibull_scale"}


def _format(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(", ".join(repr(float(c)) for c in p) for p in v)
        return ", ".join(repr(float(c)) for c in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(key: str, raw: str, line: int | None):
    raw = raw.strip()
    if key in _OPTIONAL and raw.lower() in ("auto", "none", ""):
        return None
    try:
        if key in _INT:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if key in _BOOL:
            low = raw.lower()
            if low in ("true", "on", "yes", "1"):
                return True
            if low in ("false", "off", "no", "0"):
                return False
            raise ValueError
        if key in _POINTS:
            return tuple(tuple(float(c) for c in p.split(",")) for p in raw.split(";") if p.strip())
        if key in _TUPLE:
            return tuple(float(c) for c in raw.split(",") if c.strip())
        if key in _CHOICES:
            low = raw.lower()
            if low not in _CHOICES[key]:
                raise ConfigError(f"expected one of {', '.join(_CHOICES[key])}, got {raw!r}", key=key, line=line)
            return low
        return float(raw)
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r}", key=key, line=line) from None


def _validate(c: ScenarioConfig):
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(msg, key=key, line=c.source.get(key))

    need(c.m_v >= 1, "m_v", "must be >= 1")
    need(c.m_h >= 1, "m_h", "must be >= 1")
    need(c.m_v == c.m_h, "m_h", "panels are square: m_v must equal m_h")
    for key in ("fc", "r", "d", "weibull_shape"):
        need(getattr(c, key) > 0, key, "must be > 0")
    need(c.z >= 0, "z", "must be >= 0")
    need(c.ap_height >= 0, "ap_height", "must be >= 0")
    need(len(c.volume) == 3 and min(c.volume) > 0, "volume", "needs three positive lengths")
    need(c.n_aps >= 1, "n_aps", "must be >= 1")
    need(c.trials >= 2, "trials", "must be >= 2")
    need(c.cdf_trials >= 1, "cdf_trials", "must be >= 1")
    need(c.roc_trials >= 2, "roc_trials", "must be >= 2")
    need(c.seed >= 0, "seed", "must be >= 0")
    need(c.voxel_index >= 0, "voxel_index", "must be >= 0")
    need(c.sweep_pmax_step_db > 0, "sweep_pmax_step_db", "must be > 0")
    need(c.sweep_pmax_stop_dbm >= c.sweep_pmax_start_dbm, "sweep_pmax_stop_dbm", "sweep range must be ordered")
    need(0 < c.roc_pfa_min < 1, "roc_pfa_min", "must lie in (0, 1)")
    need(len(c.altitudes) >= 1 and min(c.altitudes) >= 0, "altitudes", "needs non-negative altitudes")
    need(len(c.roc_pmax_dbm) >= 1, "roc_pmax_dbm", "needs at least one value")
    need(len(c.sweep_gamma_req_db) >= 1, "sweep_gamma_req_db", "needs at least one value")
    if c.volume_center_xy is not None:
        need(len(c.volume_center_xy) == 2, "volume_center_xy", "needs x, y")
    if c.ap_positions is not None:
        need(all(len(p) == 3 for p in c.ap_positions), "ap_positions", "each position needs x, y, z")
        need(len(c.ap_positions) == c.n_aps, "ap_positions", "count must equal n_aps")
    if c.rx_position is not None:
        need(len(c.rx_position) == 3, "rx_position", "needs x, y, z")
    if c.ue_serving_distance is not None:
        need(c.ue_serving_distance > 0, "ue_serving_distance", "must be > 0")
    if c.ue_interferer_distances is not None:
        need(all(x > 0 for x in c.ue_interferer_distances), "ue_interferer_distances", "must be > 0")
        need(len(c.ue_interferer_distances) <= c.n_aps - 1, "ue_interferer_distances",
             "at most n_aps - 1 interferers")
    if c.weibull_scale is not None:
        need(c.weibull_scale > 0, "weibull_scale", "must be > 0")
    for key, options in _CHOICES.items():
        need(getattr(c, key) in options, key, f"expected one of {', '.join(options)}")


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values, lines = {}, {}
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=n)
        key, raw = (s.strip() for s in body.split("=", 1))
        key = key.lower()
        if key not in _FIELDS:
            raise ConfigError("unknown key", key=key, line=n)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=n)
        values[key] = _parse_value(key, raw, n)
        lines[key] = n
    base = base or ScenarioConfig()
    return dataclasses.replace(base, source=lines, **values)


def load_config(path: str | Path | None) -> ScenarioConfig:
    """Read a configuration file; ``None`` gives the defaults."""
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
