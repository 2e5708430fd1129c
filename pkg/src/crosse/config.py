"""Flat key = value config files mapped onto TrainConfig.

Keys use the external spelling (`lambda`, not the Python-safe field name).
Unknown keys are rejected by name so typos fail loudly.
"""

from __future__ import annotations

import io

from .model import ScoreMode
from .trainer import TrainConfig

_CONVERTERS = {
    "d": int,
    "n": int,
    "lr": float,
    "lambda_": float,
    "batch": int,
    "epochs": int,
    "dropout": float,
    "seed": int,
    "mode": ScoreMode,
    "margin": float,
    "checkpoint_every": int,
    "threads": int,
}

_KEY_TO_FIELD = {("lambda" if f == "lambda_" else f): f for f in _CONVERTERS}


def config_keys() -> tuple[str, ...]:
    return tuple(_KEY_TO_FIELD)


def parse_kv_file(path) -> dict[str, str]:
    """Read `key = value` lines; blank lines and # comments are skipped."""
    out: dict[str, str] = {}
    with io.open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected `key = value`, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def make_train_config(mapping: dict, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from string pairs plus already-typed overrides."""
    kwargs: dict = {}
    for key, value in mapping.items():
        field = _KEY_TO_FIELD.get(key)
        if field is None:
            raise ValueError(f"unknown config key: {key}")
        try:
            kwargs[field] = _CONVERTERS[field](value)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"config key {key}: bad value {value!r} ({exc})") from None
    for field, value in (overrides or {}).items():
        if field not in _CONVERTERS:
            raise ValueError(f"unknown config field: {field}")
        kwargs[field] = _CONVERTERS[field](value)
    return TrainConfig(**kwargs)


def config_to_mapping(cfg: TrainConfig) -> dict[str, object]:
    """External-key view of a config (JSON- and file-ready)."""
    out: dict[str, object] = {}
    for key, field in _KEY_TO_FIELD.items():
        v = getattr(cfg, field)
        out[key] = v.value if isinstance(v, ScoreMode) else v
    return out
