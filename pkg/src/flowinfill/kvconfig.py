"""Flat ``key = value`` configuration files.

One assignment per line; blank lines and ``#`` comments are ignored. Values
are auto-typed on read: int, float, true/false, comma-separated lists of
those, with plain strings as the fallback.
"""

from __future__ import annotations

from pathlib import Path

from .exceptions import ConfigError


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def format_kv(values: dict) -> str:
    lines = []
    for key, value in values.items():
        if "=" in key or "\n" in key:
            raise ConfigError(f"bad config key {key!r}")
        text = _format_value(value)
        if "\n" in text:
            raise ConfigError(f"value for {key!r} contains a newline")
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_kv(path, values: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_kv(values), encoding="utf-8")


def _parse_scalar(text: str):
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
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


def parse_kv(text: str) -> dict:
    values: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key:
            raise ConfigError(f"line {line_no}: empty key")
        if "," in raw:
            values[key] = [_parse_scalar(part.strip()) for part in raw.split(",")]
        else:
            values[key] = _parse_scalar(raw) if raw else ""
    return values


def read_kv(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_kv(text)
