"""Experiment configuration: schema, validation and canonical serialisation.

Documents are YAML (JSON is accepted as a subset).  Angular frequencies are
written in Hz with an ``_over_2pi`` suffix; everything else is SI with the
unit in the key name.  Unknown keys are rejected with their full path.
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
import typing
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .doppler import VaporSpec, RB87_MASS
from .errors import ConfigurationError
from .levels import (
    DEFAULT_DIPOLES,
    DEFAULT_FREQUENCIES,
    FIELD_LABELS,
    TWO_PI,
    DriveField,
    LevelScheme,
    close_loop,
    rb87_scheme,
)
from .metrics import DetectorSpec

MANIFEST_VERSION = 1
AUX_LABELS = ("A1", "A2", "A3", "A4")


@dataclass
class SchemeConfig:
    frequencies_hz: dict = field(default_factory=lambda: {
        k: v for k, v in DEFAULT_FREQUENCIES.items() if k != "S"})
    dipoles_cm: dict = field(default_factory=lambda: dict(DEFAULT_DIPOLES))
    gamma_intermediate_over_2pi: float = 6e6
    gamma_rydberg_over_2pi: float = 10e3
    gamma_collision_over_2pi: float = 1e6


@dataclass
class VaporConfig:
    temperature_k: float = 393.0
    mass_kg: float = RB87_MASS
    density_m3: float = 4.6e18


@dataclass
class FieldConfig:
    rabi_over_2pi: float = 0.0
    detuning_over_2pi: float = 0.0
    phase_rad: float = 0.0
    direction: list = field(default_factory=lambda: [0.0, 0.0, 1.0])


def _default_fields():
    return {
        "A1": FieldConfig(5e6, -5.2e6),
        "A2": FieldConfig(3e6),
        "A3": FieldConfig(10e6),
        "A4": FieldConfig(10e6),
        "T": FieldConfig(0.0),
    }


@dataclass
class GeometryConfig:
    length_m: float = 5e-3
    loss_s_per_m: float = 0.0
    loss_t_per_m: float = 0.0


@dataclass
class DopplerConfig:
    method: str = "exact"
    n_nodes: int = 64


@dataclass
class DetectorConfig:
    eta_qe: float = 0.043
    eta_loss: float = 0.11
    dark_rate_hz: float = 2000.0
    dead_time_s: float = 32e-9
    s_eff_m2: float = 1e-6
    integration_time_s: float = 1.0


@dataclass
class SweepConfig:
    variable: str = "T"
    start_over_2pi: float = -200e6
    stop_over_2pi: float = 200e6
    points: int = 201


@dataclass
class ResponseConfig:
    rabi_t_min_over_2pi: float = 1e3
    rabi_t_max_over_2pi: float = 1e8
    points: int = 21


@dataclass
class BandwidthConfig:
    rabi_a1_over_2pi: list = field(default_factory=lambda: list(np.geomspace(1e6, 100e6, 10)))


@dataclass
class MetricsConfig:
    synthetic_eta0: float = 0.043
    synthetic_r_t_sat_hz: float = 2e7
    synthetic_decades_below: float = 9.0
    synthetic_decades_above: float = 2.0
    synthetic_points: int = 2000


@dataclass
class PhotonConfig:
    source: str = "thermal"
    rate_hz: float = 1e7
    tau_c_s: float = 1e-6
    duration_s: float = 0.1
    eta: float = 1.0
    dark_rate_hz: float = 0.0
    dead_time_s: float = 0.0
    bin_width_s: float = 5e-8
    tau_max_s: float = 3e-6
    resolutions_s: list = field(default_factory=lambda: [16e-9, 64e-9, 128e-9, 1e-6])
    autocorr_dead_time_s: float = 32e-9


@dataclass
class ExperimentConfig:
    seed: int = 0
    threads: int = 1
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    vapor: VaporConfig = field(default_factory=VaporConfig)
    fields: dict = field(default_factory=_default_fields)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    doppler: DopplerConfig = field(default_factory=DopplerConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    response: ResponseConfig = field(default_factory=ResponseConfig)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    photons: PhotonConfig = field(default_factory=PhotonConfig)

    # -- derived objects ---------------------------------------------------
    def build_scheme(self) -> LevelScheme:
        s = self.scheme
        return rb87_scheme(
            frequencies=dict(s.frequencies_hz), dipoles=dict(s.dipoles_cm),
            gamma_intermediate=TWO_PI * s.gamma_intermediate_over_2pi,
            gamma_rydberg=TWO_PI * s.gamma_rydberg_over_2pi,
            gamma_collision=TWO_PI * s.gamma_collision_over_2pi)

    def build_vapor(self) -> VaporSpec:
        v = self.vapor
        return VaporSpec(v.temperature_k, v.mass_kg, v.density_m3)

    def build_fields(self, scheme: LevelScheme | None = None) -> list[DriveField]:
        scheme = scheme or self.build_scheme()
        out = []
        for t in scheme.transitions:
            fc = self.fields.get(t.label)
            if fc is None:
                out.append(DriveField(t.label, 0.0, 0.0, t.frequency))
                continue
            rabi = TWO_PI * fc.rabi_over_2pi * complex(math.cos(fc.phase_rad),
                                                       math.sin(fc.phase_rad))
            out.append(DriveField(t.label, rabi, TWO_PI * fc.detuning_over_2pi, t.frequency,
                                  np.array(fc.direction, dtype=float)))
        return close_loop(out)

    def build_detector(self) -> DetectorSpec:
        d = self.detector
        return DetectorSpec(d.eta_qe, d.eta_loss, d.dark_rate_hz, d.dead_time_s, d.s_eff_m2,
                            self.scheme.frequencies_hz["T"])

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# -- parsing -----------------------------------------------------------------

class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e6`` and ``1.0e3`` as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))

def _number(value, path, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}: expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigurationError(f"{path}: must be finite")
    return value


def _build(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path or '<root>'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigurationError(f"unknown key {_join(path, unknown[0])}")
    obj = cls()
    for name in names:
        if name not in data:
            continue
        val = data[name]
        sub = _join(path, name)
        hint = hints[name]
        if dataclasses.is_dataclass(hint):
            setattr(obj, name, _build(hint, val, sub))
        elif hint is int:
            setattr(obj, name, _number(val, sub, integer=True))
        elif hint is float:
            setattr(obj, name, _number(val, sub))
        elif hint is str:
            if not isinstance(val, str):
                raise ConfigurationError(f"{sub}: expected a string")
            setattr(obj, name, val)
        elif hint is list:
            if not isinstance(val, list):
                raise ConfigurationError(f"{sub}: expected a list")
            setattr(obj, name, [_number(v, f"{sub}[{i}]") for i, v in enumerate(val)])
        elif hint is dict:
            setattr(obj, name, val)
        else:  # pragma: no cover
            raise TypeError(hint)
    return obj


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _number_map(data, allowed, path, defaults):
    if data is None:
        return dict(defaults)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping")
    out = dict(defaults)
    for k, v in data.items():
        if k not in allowed:
            raise ConfigurationError(f"unknown key {path}.{k}")
        out[k] = _number(v, f"{path}.{k}")
    return out


def parse_config(text: str | dict | None) -> ExperimentConfig:
    """Validated config from a YAML/JSON document (or an already parsed mapping).

    A run manifest is accepted as well; its embedded config is used.
    """
    if isinstance(text, dict) or text is None:
        data = text
    else:
        try:
            data = yaml.load(text, Loader=_Loader)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed document: {exc}") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigurationError("<root>: expected a mapping")
    if "manifest_version" in data:
        data = data.get("config") or {}
    data = dict(data)
    raw_scheme = dict(data.pop("scheme", None) or {})
    raw_fields = data.pop("fields", None)
    cfg = _build(ExperimentConfig, data, "")

    # scheme: maps of per-transition numbers
    freq = raw_scheme.pop("frequencies_hz", None)
    dip = raw_scheme.pop("dipoles_cm", None)
    cfg.scheme = _build(SchemeConfig, raw_scheme, "scheme")
    cfg.scheme.frequencies_hz = _number_map(freq, ("A1", "A2", "A3", "T", "A4"),
                                            "scheme.frequencies_hz", cfg.scheme.frequencies_hz)
    cfg.scheme.dipoles_cm = _number_map(dip, FIELD_LABELS, "scheme.dipoles_cm",
                                        cfg.scheme.dipoles_cm)
    if raw_fields is not None:
        if not isinstance(raw_fields, dict):
            raise ConfigurationError("fields: expected a mapping")
        fields = _default_fields()
        for label, body in raw_fields.items():
            if label not in FIELD_LABELS or label == "S":
                raise ConfigurationError(
                    f"unknown key fields.{label} (S is set by energy conservation)")
            fields[label] = _build(FieldConfig, body, f"fields.{label}")
        cfg.fields = fields
    validate(cfg)
    return cfg


def _positive(value, path, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if not ok:
        raise ConfigurationError(f"{path}: must be {'>= 0' if allow_zero else '> 0'}, got {value}")


def _unit(value, path):
    if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{path}: must be in [0, 1], got {value}")


def validate(cfg: ExperimentConfig) -> None:
    """Range checks with the offending key path; also builds the physics objects."""
    if cfg.seed < 0:
        raise ConfigurationError("seed: must be >= 0")
    if cfg.threads < 1:
        raise ConfigurationError("threads: must be >= 1")
    s = cfg.scheme
    for k, v in s.frequencies_hz.items():
        _positive(v, f"scheme.frequencies_hz.{k}")
    for k, v in s.dipoles_cm.items():
        _positive(v, f"scheme.dipoles_cm.{k}")
    for k in ("gamma_intermediate_over_2pi", "gamma_rydberg_over_2pi", "gamma_collision_over_2pi"):
        _positive(getattr(s, k), f"scheme.{k}", allow_zero=True)
    _positive(cfg.vapor.temperature_k, "vapor.temperature_k")
    _positive(cfg.vapor.mass_kg, "vapor.mass_kg")
    _positive(cfg.vapor.density_m3, "vapor.density_m3", allow_zero=True)
    for label, fc in cfg.fields.items():
        if len(fc.direction) != 3 or not any(fc.direction):
            raise ConfigurationError(f"fields.{label}.direction: expected a nonzero 3-vector")
    g = cfg.geometry
    _positive(g.length_m, "geometry.length_m")
    _positive(g.loss_s_per_m, "geometry.loss_s_per_m", allow_zero=True)
    _positive(g.loss_t_per_m, "geometry.loss_t_per_m", allow_zero=True)
    if cfg.doppler.method not in ("exact", "trapezoid", "gauss-hermite"):
        raise ConfigurationError("doppler.method: must be exact, trapezoid or gauss-hermite")
    _positive(cfg.doppler.n_nodes, "doppler.n_nodes")
    d = cfg.detector
    _unit(d.eta_qe, "detector.eta_qe")
    _unit(d.eta_loss, "detector.eta_loss")
    _positive(d.dark_rate_hz, "detector.dark_rate_hz", allow_zero=True)
    _positive(d.dead_time_s, "detector.dead_time_s", allow_zero=True)
    _positive(d.s_eff_m2, "detector.s_eff_m2")
    _positive(d.integration_time_s, "detector.integration_time_s")
    sw = cfg.sweep
    if sw.variable not in ("T", "A1"):
        raise ConfigurationError("sweep.variable: must be T or A1")
    if not sw.stop_over_2pi > sw.start_over_2pi:
        raise ConfigurationError("sweep.stop_over_2pi: must exceed sweep.start_over_2pi")
    if sw.points < 5:
        raise ConfigurationError("sweep.points: must be >= 5")
    r = cfg.response
    _positive(r.rabi_t_min_over_2pi, "response.rabi_t_min_over_2pi")
    if not r.rabi_t_max_over_2pi > r.rabi_t_min_over_2pi:
        raise ConfigurationError("response.rabi_t_max_over_2pi: must exceed the minimum")
    if r.points < 3:
        raise ConfigurationError("response.points: must be >= 3")
    b = cfg.bandwidth.rabi_a1_over_2pi
    if not b or any(x <= 0 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
        raise ConfigurationError("bandwidth.rabi_a1_over_2pi: must be positive and increasing")
    m = cfg.metrics
    _unit(m.synthetic_eta0, "metrics.synthetic_eta0")
    _positive(m.synthetic_eta0, "metrics.synthetic_eta0")
    _positive(m.synthetic_r_t_sat_hz, "metrics.synthetic_r_t_sat_hz")
    _positive(m.synthetic_decades_below, "metrics.synthetic_decades_below")
    _positive(m.synthetic_decades_above, "metrics.synthetic_decades_above")
    if m.synthetic_points < 10:
        raise ConfigurationError("metrics.synthetic_points: must be >= 10")
    p = cfg.photons
    if p.source not in ("coherent", "thermal"):
        raise ConfigurationError("photons.source: must be coherent or thermal")
    _positive(p.rate_hz, "photons.rate_hz", allow_zero=True)
    _positive(p.tau_c_s, "photons.tau_c_s")
    _positive(p.duration_s, "photons.duration_s", allow_zero=True)
    _unit(p.eta, "photons.eta")
    _positive(p.dark_rate_hz, "photons.dark_rate_hz", allow_zero=True)
    _positive(p.dead_time_s, "photons.dead_time_s", allow_zero=True)
    _positive(p.bin_width_s, "photons.bin_width_s")
    if p.tau_max_s < p.bin_width_s:
        raise ConfigurationError("photons.tau_max_s: must be >= photons.bin_width_s")
    for i, x in enumerate(p.resolutions_s):
        _positive(x, f"photons.resolutions_s[{i}]")
    _positive(p.autocorr_dead_time_s, "photons.autocorr_dead_time_s", allow_zero=True)
    # physics-level invariants (loop closure, positive signal frequency)
    scheme = cfg.build_scheme()
    cfg.build_fields(scheme)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def preset_text(name: str = "reference") -> str:
    res = resources.files("rydthz").joinpath("presets", f"{name}.yaml")
    if not res.is_file():
        raise ConfigurationError(f"no preset named {name!r}")
    return res.read_text(encoding="utf-8")


def load_preset(name: str = "reference") -> ExperimentConfig:
    return parse_config(preset_text(name))
