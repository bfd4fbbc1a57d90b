"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Every key must be known; values
are parsed by the type of the field they set. ``to_text`` writes a form that
parses back to an identical configuration.
"""

from __future__ import annotations

import math
import os
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..gac import ConfigError, GacConfig

OUTPUT_ROOT_ENV = "GACLAB_OUTPUT_ROOT"

_RUN_KEYS = ("seeds", "output_dir", "checkpoint_every")
_GAC_TYPES = typing.get_type_hints(GacConfig)


@dataclass
class RunConfig:
    gac: GacConfig = field(default_factory=GacConfig)
    seeds: tuple = (0,)
    output_dir: str = "runs"
    checkpoint_every: int = 0  # 0: final checkpoint only

    def validate(self) -> "RunConfig":
        self.gac.validate()
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")
        if any(s < 0 for s in self.seeds) or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds: must be distinct non-negative integers")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every: must be >= 0")
        if not self.output_dir:
            raise ConfigError("output_dir: must not be empty")
        return self

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ROOT_ENV) or self.output_dir)


def _parse_int_list(key: str, text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise ConfigError(f"{key}: expected at least one integer")
    return vals


def _parse_value(key: str, tp, text: str):
    optional = typing.get_origin(tp) is typing.Union and type(None) in typing.get_args(tp)
    if optional:
        if text.lower() in ("none", "auto", ""):
            return None
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    try:
        if tp is int:
            return int(text)
        if tp is float:
            val = float(text)
            if math.isnan(val):
                raise ValueError
            return val
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {tp.__name__}") from None
    if tp is tuple:
        return _parse_int_list(key, text)
    return text


def parse_config(text: str) -> RunConfig:
    gac_kwargs: dict = {}
    run_kwargs: dict = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        if key in _GAC_TYPES:
            gac_kwargs[key] = _parse_value(key, _GAC_TYPES[key], value)
        elif key == "seeds":
            run_kwargs[key] = _parse_int_list(key, value)
        elif key == "checkpoint_every":
            run_kwargs[key] = _parse_value(key, int, value)
        elif key == "output_dir":
            run_kwargs[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return RunConfig(GacConfig(**gac_kwargs), **run_kwargs).validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_text(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_format(getattr(cfg.gac, f.name))}" for f in fields(GacConfig)]
    lines += [f"{k} = {_format(getattr(cfg, k))}" for k in _RUN_KEYS]
    return "\n".join(lines) + "\n"


def gac_from_dict(d: dict) -> GacConfig:
    d = dict(d)
    d["hidden"] = tuple(d["hidden"])
    return GacConfig(**d)
