"""YAML experiment configuration: loading, canonical form, and content digest.

Layout (every key optional; absent keys take the dataclass defaults)::

    nv:          NVParams fields
    environment: b_static: [bx, by, bz]   # T
                 ac_tones: [{amplitude: [ax, ay, az], frequency: Hz, phase: rad}, ...]
    ipcd:        IPCDConfig fields
    drive:       laser_power_mw, bias_v (null = calibrated to 75 pA), v_ref
    protocol:    ProtocolConfig fields
    sweep:       kind, points (null = defaults for the kind)
    cycles_per_point: int
    seed: int
    detector: ipcd | ideal

Unknown keys are errors that carry the line and column of the key.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path

import yaml

from . import detector as det
from . import physics as phy
from .experiments import ExperimentConfig, ProtocolConfig, Sweep

SECTIONS = {
    "nv": phy.NVParams,
    "ipcd": det.IPCDConfig,
    "drive": phy.OperatingPoint,
    "protocol": ProtocolConfig,
    "sweep": Sweep,
}
TOP_LEVEL = ("cycles_per_point", "seed", "detector")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path, ``line`` is 1-based when known."""

    def __init__(self, message, field=None, line=None, column=None):
        self.reason, self.field, self.line, self.column = message, field, line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{field + ': ' if field else ''}{message}{where}")


def _key_marks(node, prefix=(), out=None):
    """Map dotted key paths to 1-based (line, column) of the key in the document."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (str(k.value),)
            out[".".join(path)] = (k.start_mark.line + 1, k.start_mark.column + 1)
            _key_marks(v, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _key_marks(v, prefix + (str(i),), out)
    return out


def _number(v):
    """Numeric value or None. Strings such as ``5e-14`` count: YAML 1.1 reads them as text."""
    if isinstance(v, bool):
        return None
    if isinstance(v, (int, float)):
        return v
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            return None
    return None


def _is_number(v):
    return _number(v) is not None


def _coerce(path, value, default):
    """Check a scalar/list value against the type of its default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if isinstance(default, int):
        if not (_is_number(value) and float(_number(value)).is_integer()):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return int(_number(value))
    if isinstance(default, float) or default is None:
        if value is None and default is None:
            return None
        if not _is_number(value):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(_number(value))
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(_is_number(v) for v in value):
            raise ConfigError(f"expected a list of numbers, got {value!r}", path)
        return tuple(float(_number(v)) for v in value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    raise ConfigError(f"unsupported value {value!r}", path)


def _build(cls, data, path, marks):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path, *marks.get(path, (None, None)))
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}"
        if key not in fields:
            raise ConfigError(f"unknown key {key!r}; allowed: {', '.join(fields)}",
                              dotted, *marks.get(dotted, (None, None)))
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        if cls is Sweep and key == "points":
            default = ()
            if value is None:
                kwargs[key] = None
                continue
        try:
            kwargs[key] = _coerce(dotted, value, default)
        except ConfigError as exc:
            raise ConfigError(exc.reason, dotted, *marks.get(dotted, (None, None))) from None
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path, *marks.get(path, (None, None))) from None


def _build_environment(data, marks):
    if data is None:
        return ExperimentConfig().env
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", "environment", *marks.get("environment", (None, None)))
    allowed = ("b_static", "ac_tones")
    for key in data:
        if key not in allowed:
            dotted = f"environment.{key}"
            raise ConfigError(f"unknown key {key!r}; allowed: {', '.join(allowed)}",
                              dotted, *marks.get(dotted, (None, None)))
    default = ExperimentConfig().env
    b = _coerce("environment.b_static", data["b_static"], ()) if "b_static" in data else default.b_static
    tones = default.ac_tones
    if "ac_tones" in data:
        raw = data["ac_tones"] or []
        if not isinstance(raw, list):
            raise ConfigError("expected a list of tones", "environment.ac_tones")
        tones = []
        for i, t in enumerate(raw):
            path = f"environment.ac_tones.{i}"
            if not isinstance(t, dict):
                raise ConfigError("expected a mapping", path)
            for key in t:
                if key not in ("amplitude", "frequency", "phase"):
                    dotted = f"{path}.{key}"
                    raise ConfigError(f"unknown key {key!r}; allowed: amplitude, frequency, phase",
                                      dotted, *marks.get(dotted, (None, None)))
            if "amplitude" not in t or "frequency" not in t:
                raise ConfigError("a tone needs amplitude and frequency", path,
                                  *marks.get(path + ".frequency", (None, None)))
            try:
                tones.append(phy.ACTone(_coerce(path + ".amplitude", t["amplitude"], ()),
                                        _coerce(path + ".frequency", t["frequency"], 0.0),
                                        _coerce(path + ".phase", t.get("phase", 0.0), 0.0)))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(str(exc), path) from None
    try:
        return phy.MagneticEnvironment(b, tuple(tones))
    except ValueError as exc:
        raise ConfigError(str(exc), "environment") from None


def parse_config(text: str, kind: str | None = None) -> ExperimentConfig:
    """Build a configuration from YAML text.

    ``kind`` fixes the sweep kind (as the CLI subcommands do); a file that
    names a different kind is rejected.
    """
    try:
        data = yaml.safe_load(text)
        marks = _key_marks(yaml.compose(text, Loader=yaml.SafeLoader))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"parse error: {getattr(exc, 'problem', exc)}", None,
                          mark.line + 1 if mark else None, mark.column + 1 if mark else None) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping")
    allowed = tuple(SECTIONS) + ("environment",) + TOP_LEVEL
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}; allowed: {', '.join(allowed)}",
                              str(key), *marks.get(str(key), (None, None)))
    if kind is not None:
        sweep = data.get("sweep") or {}
        if isinstance(sweep, dict):
            if sweep.get("kind", kind) != kind:
                raise ConfigError(f"config sweeps {sweep['kind']!r} but {kind!r} was requested",
                                  "sweep.kind", *marks.get("sweep.kind", (None, None)))
            data["sweep"] = {**sweep, "kind": kind}
    kwargs = {name: _build(cls, data.get(name), name, marks) for name, cls in SECTIONS.items()}
    kwargs["env"] = _build_environment(data.get("environment"), marks)
    defaults = ExperimentConfig()
    for key in TOP_LEVEL:
        if key in data:
            kwargs[key] = _coerce(key, data[key], getattr(defaults, key))
    try:
        return ExperimentConfig(nv=kwargs.pop("nv"), ipcd=kwargs.pop("ipcd"), drive=kwargs.pop("drive"),
                                protocol=kwargs.pop("protocol"), sweep=kwargs.pop("sweep"), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), kind)


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError("non-finite value in configuration")
    return value


def canonical_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved configuration in the file layout."""
    out = {name: _plain(getattr(cfg, name)) for name in ("nv", "ipcd", "drive", "protocol", "sweep")}
    out["environment"] = _plain(cfg.env)
    for key in TOP_LEVEL:
        out[key] = getattr(cfg, key)
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(canonical_dict(cfg), sort_keys=True, default_flow_style=None)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(canonical_dict(cfg)).encode()).hexdigest()
