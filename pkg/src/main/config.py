# src/main/config.py
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

import jsonschema
import yaml

from src.characteristics.paths import SimConfig
from src.lipsolve.psi import LipsolveConfig
from src.lipsolve.solver import LipschitzProbe, PicardSettings
from src.models.builtins import UnknownModelError, builtin_model
from src.models.model_spec import ModelSpec
from src.models.sampling import SamplerConfig
from src.monotone.probes import ProbeSpec

logger = logging.getLogger(__name__)

KINDS = ("solve", "verify-monotone", "oracle-compare", "blowup-scan", "transform-check", "dpp-audit")
ORACLE_MODELS = ("lq", "blowup_nonmonotone")


class ConfigError(ValueError):
    """The experiment configuration cannot be read or does not validate."""


DEFAULT_CONFIG: Dict[str, Any] = {
    "kind": "solve",
    "seed": 0,
    "output_dir": "out",
    "workers": 1,
    "model": {"name": "lq", "params": {}},
    "sim": {"dt": 0.05, "n_particles": 200, "n_paths": 20, "n_tagged": 16},
    "solver": {"horizon": 0.5, "fit_points": 10, "degree": 2, "audit_size": 64},
    "picard": {"damping": 0.5, "tol": 1e-5, "max_iters": 100, "lipschitz_guard": 1e3, "growth_guard": 10.0},
    "lipschitz": {"samples": 16, "radius": 0.5},
    "sampler": SamplerConfig().to_dict(),
    "probes": {"count": 50, "tolerance": 1e-6, "cloud_size": 16, "include_presets": True,
               "audit_budget": 120, "pairs": 20},
    "oracle": {"max_relative_error": 0.05, "refine": False},
    "scan": {"horizons": [0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0], "forbid_blow_up": False},
    "transform": {"concatenate_theta": True, "beta": 0.1, "n_probes": 20, "tolerance": 0.05},
    "points": {"count": 10},
    "dpp": {"s": 0.25, "gradient_tolerance": 1e-2, "gradient_points": 5},
}

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG_INT = {"type": "integer", "minimum": 0}
_BOOL = {"type": "boolean"}


def _section(properties: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "object", "properties": properties, "additionalProperties": False}


CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "seed": _NONNEG_INT,
        "output_dir": {"type": "string", "minLength": 1},
        "workers": _POS_INT,
        "model": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string", "minLength": 1},
                "params": {"type": "object", "additionalProperties": _NUM},
            },
        },
        "sim": _section({"dt": _POS, "n_particles": _POS_INT, "n_paths": _POS_INT, "n_tagged": _NONNEG_INT}),
        "solver": _section({"horizon": _POS, "fit_points": _POS_INT, "degree": _NONNEG_INT, "audit_size": _POS_INT}),
        "picard": _section({
            "damping": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "tol": _POS, "max_iters": _POS_INT, "lipschitz_guard": _POS, "growth_guard": _POS,
        }),
        "lipschitz": _section({"samples": _POS_INT, "radius": _POS}),
        "sampler": _section({
            "x_scale": _POS, "theta_scale": _NONNEG, "w_scale": _NONNEG, "mean_scale": _NONNEG,
            "spread_min": _NONNEG, "spread_max": _NONNEG, "cloud_size": _POS_INT,
        }),
        "probes": _section({
            "count": _POS_INT, "tolerance": _NONNEG, "cloud_size": _POS_INT, "include_presets": _BOOL,
            "audit_budget": _POS_INT, "pairs": _NONNEG_INT,
        }),
        "oracle": _section({"max_relative_error": _POS, "refine": _BOOL}),
        "scan": _section({"horizons": {"type": "array", "items": _POS, "minItems": 1}, "forbid_blow_up": _BOOL}),
        "transform": _section({"concatenate_theta": _BOOL, "beta": _NONNEG, "n_probes": _POS_INT, "tolerance": _POS}),
        "points": _section({"count": _POS_INT}),
        "dpp": _section({"s": _NONNEG, "gradient_tolerance": _POS, "gradient_points": _NONNEG_INT}),
    },
}


# ==============================
# Merging and overrides
# ==============================

def deep_merge(base: Mapping[str, Any], extra: Mapping[str, Any]) -> Dict[str, Any]:
    """Copy of `base` with `extra` merged in; nested dicts merge, everything else replaces."""
    out = copy.deepcopy(dict(base))
    for key, value in (extra or {}).items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> Dict[str, Any]:
    """`a.b.c=value` as a nested dict; the value goes through yaml.safe_load."""
    key, sep, raw = str(text).partition("=")
    key = key.strip()
    if not sep or not key or any(not part for part in key.split(".")):
        raise ConfigError(f"Override must look like key.path=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"Cannot parse override value in {text!r}: {exc}") from exc
    for part in reversed(key.split(".")):
        value = {part: value}
    return value


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """JSON file, or YAML for .yaml/.yml files."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text) if p.suffix.lower() in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"Cannot parse config {p}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config {p} must hold an object at top level")
    return data


# ==============================
# Experiment config
# ==============================

@dataclass(frozen=True)
class ExperimentConfig:
    """A validated, fully merged experiment description."""
    data: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Merge `data` over the defaults and validate.

        Raises:
            ConfigError: schema violation, unknown model or parameter, or an
                inconsistent combination of kind and model.
        """
        merged = deep_merge(DEFAULT_CONFIG, data or {})
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(merged), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            raise ConfigError(f"Invalid config at {where}: {err.message}")
        cfg = cls(merged)
        cfg._check_semantics()
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)

    def _check_semantics(self) -> None:
        try:
            model = self.build_model()
            self.sim_config(self.horizon)
            self.lipsolve_config()
            self.picard_settings()
            if self.kind == "blowup-scan":
                for T in self.section("scan")["horizons"]:
                    self.sim_config(float(T))
        except (UnknownModelError, ValueError) as exc:
            raise ConfigError(str(exc).strip("'\"")) from exc
        kind = self.kind
        if kind == "oracle-compare" and self.model_name not in ORACLE_MODELS:
            raise ConfigError(f"oracle-compare needs a linear-quadratic model ({', '.join(ORACLE_MODELS)}), got {self.model_name!r}")
        if kind == "transform-check":
            beta = self.section("transform")["beta"] or model.beta_cn
            if beta <= 0:
                raise ConfigError("transform-check needs a positive common noise (transform.beta or model beta_cn)")
            if model.dim_theta > 0 and not self.section("transform")["concatenate_theta"]:
                raise ConfigError(
                    f"model {model.name} carries its own theta; set transform.concatenate_theta=true to transform it"
                )
        if kind == "dpp-audit":
            s, T = float(self.section("dpp")["s"]), self.horizon
            if s > T:
                raise ConfigError(f"dpp.s={s} exceeds the horizon {T}")
            try:
                self.sim_config().with_horizon(T - s)
            except ValueError as exc:
                raise ConfigError(f"dpp.s: {exc}") from exc

    # ------------------------------
    # Accessors
    # ------------------------------
    def section(self, name: str) -> Dict[str, Any]:
        return self.data[name]

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def workers(self) -> int:
        return int(self.data["workers"])

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])

    @property
    def model_name(self) -> str:
        return self.data["model"]["name"]

    @property
    def horizon(self) -> float:
        return float(self.data["solver"]["horizon"])

    def build_model(self) -> ModelSpec:
        return builtin_model(self.model_name, self.data["model"].get("params") or {})

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig.from_dict(self.data["sampler"])

    def sim_config(self, horizon: float = 0.0) -> SimConfig:
        s = self.data["sim"]
        return SimConfig(dt=s["dt"], n_particles=s["n_particles"], n_paths=s["n_paths"], seed=self.seed,
                         horizon=horizon, n_tagged=s["n_tagged"], workers=self.workers)

    def lipsolve_config(self) -> LipsolveConfig:
        s = self.data["solver"]
        return LipsolveConfig(self.sim_config(), fit_points=s["fit_points"], degree=s["degree"],
                              audit_size=s["audit_size"], sampler=self.sampler_config())

    def picard_settings(self) -> PicardSettings:
        return PicardSettings(**self.data["picard"])

    def lipschitz_probe(self) -> LipschitzProbe:
        s = self.data["lipschitz"]
        sampler = SamplerConfig.from_dict(dict(self.data["sampler"], cloud_size=16))
        return LipschitzProbe(samples=s["samples"], seed=self.seed, radius=s["radius"], sampler=sampler)

    def probe_spec(self) -> ProbeSpec:
        p = self.data["probes"]
        return ProbeSpec(count=p["count"], seed=self.seed, tolerance=p["tolerance"], cloud_size=p["cloud_size"],
                         include_presets=p["include_presets"], sampler=self.sampler_config())

    def report_view(self) -> Dict[str, Any]:
        """The config as it enters report.json: no output location, no thread count."""
        view = self.to_dict()
        view.pop("output_dir", None)
        view.pop("workers", None)
        return view


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    kind: Optional[str] = None,
    output_dir: Optional[Union[str, Path]] = None,
) -> ExperimentConfig:
    """
    defaults < file < --override key=value < dedicated flags (--seed, --kind, --out).

    Raises:
        ConfigError: unreadable file, bad override, or invalid merged config.
    """
    data: Dict[str, Any] = read_config_file(path) if path is not None else {}
    for text in overrides:
        data = deep_merge(data, parse_override(text))
    flags: Dict[str, Any] = {}
    if seed is not None:
        flags["seed"] = seed
    if kind is not None:
        flags["kind"] = kind
    if output_dir is not None:
        flags["output_dir"] = str(output_dir)
    cfg = ExperimentConfig.from_dict(deep_merge(data, flags))
    logger.debug("Loaded config: kind=%s model=%s seed=%d", cfg.kind, cfg.model_name, cfg.seed)
    return cfg
