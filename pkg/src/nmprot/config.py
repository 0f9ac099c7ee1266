"""Flat "key = value" config files mapped onto TrainConfig.

'#' starts a comment; blank lines are skipped; unknown keys are a hard
error so typos cannot silently fall back to defaults.  Keys are the
TrainConfig field names (the loss weight is written "lambda").  Every
field has a default, so an empty file is a valid config.
"""

import dataclasses

from .errors import ConfigError
from .trainer import TrainConfig

_KEY_ALIASES = {"lambda": "lambda_"}


def _coerce(field, text, key):
    if field.type in ("int", int):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"key {key!r}: {text!r} is not an integer")
    if field.type in ("float", float):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"key {key!r}: {text!r} is not a number")
    if field.type in ("bool", bool):
        low = text.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"key {key!r}: {text!r} is not a boolean")
    return text


def parse_config(text):
    """Parse config text into a TrainConfig; unknown keys raise ConfigError."""
    by_name = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        field_name = _KEY_ALIASES.get(key, key)
        if field_name not in by_name:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if field_name in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        values[field_name] = _coerce(by_name[field_name], value, key)
    try:
        return TrainConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
