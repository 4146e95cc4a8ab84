"""Key-value config files: `key = value` lines, `#` comments."""

from __future__ import annotations

from .errors import ConfigError


def read_kv_pairs(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for raw in handle:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key] = value
    return out


def coerce_like(current, value: str):
    """Parse `value` with the type of `current` (bool, int, float, tuple, str)."""
    if isinstance(current, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return value


def apply_kv(defaults, pairs: dict[str, str]) -> dict:
    """Coerce a kv dict against a defaults dataclass instance's field types."""
    out = {}
    for key, value in pairs.items():
        if not hasattr(defaults, key):
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = coerce_like(getattr(defaults, key), value)
    return out
