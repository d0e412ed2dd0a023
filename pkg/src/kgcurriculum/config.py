"""Flat ``key = value`` training configs with command-line overrides.

Example file::

    # TransE on WN18RR
    model = transe-l2
    dim = 50
    pacing = geometric
    lambda0 = auto
    t_grow = 100

``lambda0 = auto`` defers the initial percentage to the Z-count table.
"""
from __future__ import annotations

from dataclasses import asdict, fields, replace
from pathlib import Path

from .curriculum import ConfigError
from .models import MODEL_KINDS
from .trainer import TrainConfig

PACING_KEYS = {"pacing": "kind", "lambda0": "lambda0", "t_grow": "t_grow", "p_exponent": "p_exponent"}
_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "pacing"}
KNOWN_KEYS = sorted(set(_TRAIN_FIELDS) | set(PACING_KEYS))
AUTO = "auto"


def _convert(key: str, raw: str, template):
    raw = raw.strip()
    try:
        if isinstance(template, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(template, int):
            return int(raw)
        if isinstance(template, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(template).__name__}") from None
    return raw


def parse_pairs(pairs, base: dict | None = None, source: str = "<overrides>") -> dict:
    """Parse ``key=value`` strings into a dict of raw strings, validating key names."""
    out = dict(base or {})
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"{source}: expected key=value, got {item!r}")
        key, value = (s.strip() for s in item.split("=", 1))
        key = key.replace("-", "_")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}: unknown key {key!r} (known: {', '.join(KNOWN_KEYS)})")
        out[key] = value
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    lines = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        lines.append(line)
    return parse_pairs(lines, source=str(path))


def build_config(values: dict) -> tuple[TrainConfig, bool]:
    """Turn raw strings into a validated :class:`TrainConfig`.

    Returns ``(config, lambda0_auto)``. Errors name the offending key.
    """
    defaults = TrainConfig()
    kwargs = {}
    for key in _TRAIN_FIELDS:
        if key in values:
            kwargs[key] = _convert(key, values[key], getattr(defaults, key))
    if "model" in kwargs and kwargs["model"] not in MODEL_KINDS:
        raise ConfigError(f"model: must be one of {MODEL_KINDS}, got {kwargs['model']!r}")

    lambda0_auto = values.get("lambda0", "").strip().lower() == AUTO
    pacing_kwargs = {}
    for key, attr in PACING_KEYS.items():
        if key not in values or (key == "lambda0" and lambda0_auto):
            continue
        pacing_kwargs[attr] = _convert(key, values[key], getattr(defaults.pacing, attr))
    try:
        pacing_cfg = replace(defaults.pacing, **pacing_kwargs)
    except ConfigError as exc:
        raise ConfigError(f"pacing: {exc}") from None
    try:
        config = TrainConfig(pacing=pacing_cfg, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config, lambda0_auto


def load_config(path=None, overrides=()) -> tuple[TrainConfig, bool]:
    values = read_config_file(path) if path else {}
    return build_config(parse_pairs(overrides, values))


def config_snapshot(config: TrainConfig, lambda0_auto: bool = False) -> dict:
    snap = asdict(config)
    snap["lambda0_auto"] = lambda0_auto
    return snap

