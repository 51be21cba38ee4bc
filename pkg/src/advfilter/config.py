"""Flat key-value experiment configuration.

The file format is one ``dotted.key = value`` per line, with ``#``
comments and blank lines ignored. Values self-type: booleans, integers,
floats, comma lists of those, anything else stays a string. No nesting,
no quoting rules; the whole point is that any language can parse it.
"""

from __future__ import annotations

import os


class ConfigError(ValueError):
    """Malformed configuration text or unusable option values."""


def _coerce_scalar(text: str):
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _coerce(text: str):
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
        if any(p == "" for p in parts):
            raise ConfigError(f"empty element in list value {text!r}")
        return [_coerce_scalar(p) for p in parts]
    return _coerce_scalar(text)


def parse_config_text(text: str) -> "Config":
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or any(not (c.isalnum() or c in "._") for c in key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(value)
    return Config(values)


def load_config(path) -> "Config":
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


class Config:
    """Read-only view over the flat option mapping."""

    def __init__(self, values: dict | None = None):
        self._values = dict(values or {})

    def get(self, key, default=None):
        return self._values.get(key, default)

    def require(self, key):
        if key not in self._values:
            raise ConfigError(f"missing required config key {key!r}")
        return self._values[key]

    def get_list(self, key, default=None):
        """The value as a list even when a single scalar was written."""
        if key not in self._values:
            return list(default) if default is not None else []
        v = self._values[key]
        return list(v) if isinstance(v, list) else [v]

    def __contains__(self, key):
        return key in self._values

    def __len__(self):
        return len(self._values)

    def keys(self):
        return sorted(self._values)

    def as_dict(self) -> dict:
        return dict(self._values)

    def overridden(self, **pairs) -> "Config":
        """A copy with dotted keys replaced (underscores map to dots)."""
        merged = dict(self._values)
        for key, value in pairs.items():
            merged[key.replace("__", ".")] = value
        return Config(merged)

    def to_text(self) -> str:
        lines = []
        for key in sorted(self._values):
            v = self._values[key]
            if isinstance(v, list):
                rendered = ", ".join(_render_scalar(e) for e in v)
            else:
                rendered = _render_scalar(v)
            lines.append(f"{key} = {rendered}")
        return "\n".join(lines) + "\n"


def _render_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)
