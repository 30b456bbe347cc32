"""Run configuration: nested sections with defaults, presets and overrides.

Files are TOML (or JSON, which is what a run directory echoes back).  Every
key has a default; unknown keys are rejected by their dotted path.
"""

from __future__ import annotations

import copy
import json
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .models import CAESpec, ClassifierSpec
from .pooling import PoolingVariant
from .training import TrainConfig

__all__ = ["ConfigError", "DEFAULTS", "PRESETS", "resolve_config", "load_config_file", "apply_override",
           "model_spec", "train_config", "dumps"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict] = {
    "model": {
        "kind": "classifier",  # classifier | cae
        "height": 32,
        "width": 32,
        "widths": [16, 32, 64],
        "num_classes": 2,
        "se_reduction": 16,
        "pool_init": "selection",  # selection | random
        "input_mean": 0.5,
        "input_std": 0.5,
    },
    "pooling": {
        "kind": "normal",  # normal | blur | lgca | wadca
        "terminal": "max",  # max | avg
        "stride": 2,
        "gaussian_size": 5,  # 2 | 3 | 5
    },
    "train": {
        "optimizer": "sgd_momentum",  # sgd_momentum | adam
        "lr": 0.01,
        "momentum": 0.9,
        "weight_decay": 4e-5,
        "epochs": 10,
        "batch": 16,
        "plateau_factor": 0.1,
        "plateau_patience": 5,
        "plateau_min_delta": 1e-4,
        "monitor": "train_loss",  # train_loss | val_loss
        "seed": 0,
        "loss": "cross_entropy",  # cross_entropy | mse
    },
    "data": {
        "source": "synthetic",  # synthetic | dir
        "kind": "shapes2",  # shapes2 | shapes4
        "n": 400,
        "val_n": 0,  # held-out synthetic images (different seed stream)
        "seed": 0,
        "path": "",
        "resize": 0,  # 0 = off
        "crop": 0,  # 0 = off
    },
    "eval": {
        "protocol": "accuracy",  # accuracy | consistency | stability | noise
        "transform": "rotation",  # accuracy protocol: rotation | translation | noise
        "rotation_degrees": 90.0,
        "max_shift": 12,
        "full_grid": False,
        "sigma": 2.0,
        "noise_mean": 0.0,
        "trials": 5,
        "seed": 0,
        "n": 200,  # synthetic evaluation images
        "data_seed": 1,
        "image_index": 0,  # stability protocol
    },
}

PRESETS: dict[str, dict] = {
    "classifier-sgd": {},
    "classifier-adam": {"train": {"optimizer": "adam", "lr": 1e-3}},
    "cae-adam": {
        "model": {"kind": "cae", "height": 64, "width": 64, "widths": [48, 96, 192, 32]},
        "train": {"optimizer": "adam", "lr": 1e-3, "loss": "mse"},
        "data": {"n": 128},
    },
}


def _merge(base: dict, update: dict, path: str = "") -> dict:
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            _merge(base[key], value, where + ".")
        else:
            base[key] = _coerce(base[key], value, where)
    return base


def _coerce(default, value, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {where!r} must be true or false, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {where!r} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {where!r} must be an integer, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"config key {where!r} must be a list of integers, got {value!r}")
        return list(value)
    if not isinstance(value, str):
        raise ConfigError(f"config key {where!r} must be a string, got {value!r}")
    return value


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        if path.suffix == ".json":
            return json.loads(text)
        return tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse config {path}: {e}") from e


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text  # bare string


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``section.key=value`` (value in TOML syntax; bare words are strings)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key {key!r} must be section.key")
    return _merge(cfg, {parts[0]: {parts[1]: _parse_value(text.strip())}})


def resolve_config(preset: str = "classifier-sgd", path=None, overrides=()) -> dict:
    """Defaults, then the preset, then the file, then ``overrides``; validated."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    cfg = _merge(copy.deepcopy(DEFAULTS), PRESETS[preset])
    if path is not None:
        _merge(cfg, load_config_file(path))
    for item in overrides:
        apply_override(cfg, item)
    model_spec(cfg)
    train_config(cfg)
    _check_choices(cfg)
    return cfg


def _check_choices(cfg: dict) -> None:
    choices = {
        ("data", "source"): ("synthetic", "dir"),
        ("data", "kind"): ("shapes2", "shapes4"),
        ("eval", "protocol"): ("accuracy", "consistency", "stability", "noise"),
        ("eval", "transform"): ("rotation", "translation", "noise"),
    }
    for (section, key), allowed in choices.items():
        if cfg[section][key] not in allowed:
            raise ConfigError(f"config key '{section}.{key}' must be one of {list(allowed)}, "
                              f"got {cfg[section][key]!r}")
    if cfg["data"]["source"] == "synthetic" and cfg["model"]["height"] != cfg["model"]["width"]:
        raise ConfigError("synthetic data is square: 'model.height' and 'model.width' must match")
    if cfg["data"]["source"] == "dir" and not cfg["data"]["path"]:
        raise ConfigError("config key 'data.path' is required when data.source = 'dir'")


def model_spec(cfg: dict):
    m, p = cfg["model"], cfg["pooling"]
    try:
        variant = PoolingVariant(**p)
        common = dict(height=m["height"], width=m["width"], widths=tuple(m["widths"]), pooling=(variant,),
                      se_reduction=m["se_reduction"], pool_init=m["pool_init"], input_mean=m["input_mean"],
                      input_std=m["input_std"])
        if m["kind"] == "classifier":
            return ClassifierSpec(num_classes=m["num_classes"], **common)
        if m["kind"] == "cae":
            return CAESpec(**common)
    except ValueError as e:
        raise ConfigError(f"invalid model/pooling config: {e}") from e
    raise ConfigError(f"config key 'model.kind' must be 'classifier' or 'cae', got {m['kind']!r}")


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**cfg["train"])
    except ValueError as e:
        raise ConfigError(f"invalid train config: {e}") from e


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
