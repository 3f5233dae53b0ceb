"""Run configuration: one YAML file with flat sections mirroring the module types."""

from __future__ import annotations

import copy
from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from .amplitude import AmplitudeError, AmplitudeOptions
from .field_model import ExampleFieldParams, FieldError, FieldSpec, make_example_field
from .fitting import FitError, FitWindow
from .spectra import GaugeChoice


class ConfigError(ValueError):
    pass


FIELD_PRESETS = {"default": ExampleFieldParams()}

DEFAULTS = {
    "seed": 0,
    "field": {"preset": "default"},
    "seal": {"radius_fraction": 0.1, "amplitude_fraction": 0.05, "strip_fraction": 0.5},
    "eikonal": {"half_width": None, "spacing": None},
    "amplitude": {"alpha_sign": -1, "T_model": "zero", "n_max": 9, "n_panels": 24, "order": 10},
    "spectra": {
        "h": [0.2, 0.15, 0.12, 0.1, 0.08, 0.065, 0.05, 0.04, 0.032, 0.027, 0.023],
        "spacing_factor": 0.1,
        "width": 8.0,
        "refinement": [1.0, 1.25, 1.5, 2.0],
        "gauge": "landau_x",
        "with_third": True,
        "solver_tol": 2e-15,
    },
    "fit": {"h_max": 0.15, "noise_factor": 100.0, "smallest": 6, "min_points": 5},
    "expansion": {"h_min": 0.05, "h_max": 0.2, "extra_orders": 0, "full_extra_orders": 3},
    "output": {"dir": "runs/default"},
}


@dataclass(frozen=True)
class SealConfig:
    radius_fraction: float = 0.1
    amplitude_fraction: float = 0.05
    strip_fraction: float = 0.5


@dataclass(frozen=True)
class EikonalConfig:
    half_width: float | None = None
    spacing: float | None = None


@dataclass(frozen=True)
class SpectraConfig:
    h: tuple
    spacing_factor: float = 0.1
    width: float = 8.0
    refinement: tuple = (1.0, 1.25, 1.5, 2.0)
    gauge: GaugeChoice = GaugeChoice.landau_x
    with_third: bool = True
    solver_tol: float = 2e-15


@dataclass(frozen=True)
class FitConfig:
    h_max: float = 0.15
    noise_factor: float = 100.0
    smallest: int | None = 6
    min_points: int = 5

    @property
    def window(self) -> FitWindow:
        return FitWindow(noise_factor=self.noise_factor, smallest=self.smallest,
                         min_points=self.min_points)


@dataclass(frozen=True)
class ExpansionConfig:
    h_min: float = 0.05
    h_max: float = 0.2
    extra_orders: int = 0
    # higher-order fit over every usable h, used to adjudicate c_quad
    full_extra_orders: int = 3


@dataclass(frozen=True)
class RunConfig:
    seed: int
    field_params: ExampleFieldParams
    seal: SealConfig
    eikonal: EikonalConfig
    amplitude: AmplitudeOptions
    spectra: SpectraConfig
    fit: FitConfig
    expansion: ExpansionConfig
    output_dir: Path
    raw: dict

    def field(self) -> FieldSpec:
        return make_example_field(self.field_params)

    def with_overrides(self, out: str | None = None, seed: int | None = None) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        if out is not None:
            raw["output"]["dir"] = str(out)
        if seed is not None:
            raw["seed"] = int(seed)
        return from_dict(raw)


def _merge(base: dict, update: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"section {where}{key} must be a mapping")
            if key == "field":
                out[key] = dict(value)
            else:
                out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def _build(cls, section: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc


def _field_params(section: dict) -> ExampleFieldParams:
    section = dict(section)
    preset = section.pop("preset", None)
    if preset is not None:
        if preset not in FIELD_PRESETS:
            raise ConfigError(f"unknown field preset {preset!r}; known: {sorted(FIELD_PRESETS)}")
        params = FIELD_PRESETS[preset]
    else:
        params = ExampleFieldParams()
    unknown = set(section) - {f.name for f in fields(ExampleFieldParams)}
    if unknown:
        raise ConfigError(f"unknown keys in field: {sorted(unknown)}")
    params = replace(params, **{k: float(v) for k, v in section.items()})
    params.validate()
    return params


def _positive(value, name):
    if not (isinstance(value, (int, float)) and value > 0):
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    raw = _merge(DEFAULTS, data)
    try:
        field_params = _field_params(raw["field"])
        make_example_field(field_params)
    except FieldError as exc:
        raise ConfigError(f"field: {exc}") from exc

    seal = _build(SealConfig, raw["seal"], "seal")
    _positive(seal.radius_fraction, "seal.radius_fraction")
    _positive(seal.amplitude_fraction, "seal.amplitude_fraction")
    if not 0 < seal.strip_fraction < 1:
        raise ConfigError("seal.strip_fraction must lie in (0, 1)")
    if seal.radius_fraction >= 0.25:
        raise ConfigError("seal.radius_fraction must stay below 0.25")

    eik = _build(EikonalConfig, raw["eikonal"], "eikonal")
    for name in ("half_width", "spacing"):
        if getattr(eik, name) is not None:
            _positive(getattr(eik, name), f"eikonal.{name}")

    try:
        amp = _build(AmplitudeOptions, raw["amplitude"], "amplitude")
        amp.validate()
    except AmplitudeError as exc:
        raise ConfigError(f"amplitude: {exc}") from exc

    sp = dict(raw["spectra"])
    h = sp.get("h")
    if not isinstance(h, list) or not all(isinstance(x, (int, float)) for x in h):
        raise ConfigError("spectra.h must be a list of numbers")
    h = tuple(float(x) for x in h)
    if len(h) < 4:
        raise ConfigError(f"spectra.h needs at least 4 values, got {len(h)}")
    if any(x <= 0 for x in h):
        raise ConfigError("spectra.h values must be positive")
    if any(a <= b for a, b in zip(h, h[1:])):
        raise ConfigError("spectra.h must be sorted strictly descending")
    sp["h"] = h
    try:
        sp["gauge"] = GaugeChoice(sp.get("gauge", "landau_x"))
    except ValueError as exc:
        raise ConfigError(f"spectra.gauge: {exc}") from exc
    refinement = tuple(float(x) for x in sp.get("refinement", ()))
    if len(refinement) < 2 or refinement[0] != 1.0 or any(a >= b for a, b in zip(refinement, refinement[1:])):
        raise ConfigError("spectra.refinement must start at 1 and increase")
    sp["refinement"] = refinement
    spectra = _build(SpectraConfig, sp, "spectra")
    _positive(spectra.spacing_factor, "spectra.spacing_factor")
    if spectra.spacing_factor > 0.15:
        raise ConfigError("spectra.spacing_factor above 0.15 under-resolves the magnetic length")
    _positive(spectra.width, "spectra.width")
    _positive(spectra.solver_tol, "spectra.solver_tol")

    fit = _build(FitConfig, raw["fit"], "fit")
    _positive(fit.h_max, "fit.h_max")
    try:
        fit.window.validate()
    except FitError as exc:
        raise ConfigError(f"fit: {exc}") from exc
    expansion = _build(ExpansionConfig, raw["expansion"], "expansion")
    if not 0 < expansion.h_min < expansion.h_max:
        raise ConfigError("expansion needs 0 < h_min < h_max")
    for name in ("extra_orders", "full_extra_orders"):
        value = getattr(expansion, name)
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ConfigError(f"expansion.{name} must be a non-negative integer")

    seed = raw["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    out = raw["output"].get("dir")
    if not out:
        raise ConfigError("output.dir must be set")
    return RunConfig(seed=seed, field_params=field_params, seal=seal, eikonal=eik,
                     amplitude=amp, spectra=spectra, fit=fit, expansion=expansion,
                     output_dir=Path(out), raw=raw)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return from_dict({})
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return from_dict(data or {})
