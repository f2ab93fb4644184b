"""Flat ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Values are parsed
according to the type of the field's default: booleans accept
``true/false/yes/no/1/0``, tuples are comma-separated numbers. Unknown or
repeated keys are rejected by name.
"""

from __future__ import annotations

import dataclasses
import enum
from typing import TypeVar

from .trackers import ConfigError

__all__ = ["parse_key_values", "build_config", "load_config", "dump_config"]

T = TypeVar("T")

_TRUE = {"true", "yes", "1", "on"}
_FALSE = {"false", "no", "0", "off"}


def parse_key_values(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: key '{key}' given twice")
        out[key] = value
    return out


def _convert(key: str, text: str, default):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, enum.Enum):
            return type(default)(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = tuple(float(v) for v in text.split(","))
            if len(items) != len(default):
                raise ValueError(f"expected {len(default)} comma-separated values, got {len(items)}")
            return items
        if isinstance(default, str):
            return text
    except ValueError as exc:
        raise ConfigError(f"key '{key}': {exc}") from None
    raise ConfigError(f"key '{key}' cannot be set from a config file")


def build_config(cls: type[T], values: dict[str, str], **overrides) -> T:
    """Instantiate dataclass ``cls`` from string values; every key must be a field."""
    defaults = {}
    for f in dataclasses.fields(cls):
        if f.default is not dataclasses.MISSING:
            defaults[f.name] = f.default
        elif f.default_factory is not dataclasses.MISSING:
            defaults[f.name] = f.default_factory()
    kwargs = {}
    for key, text in values.items():
        if key not in defaults:
            raise ConfigError(f"unknown key '{key}' (known keys: {', '.join(sorted(defaults))})")
        kwargs[key] = _convert(key, text, defaults[key])
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(cls: type[T], text: str, **overrides) -> T:
    return build_config(cls, parse_key_values(text), **overrides)


def dump_config(config) -> str:
    lines = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        elif isinstance(value, bool):
            value = str(value).lower()
        elif isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
