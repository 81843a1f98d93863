import json
from dataclasses import fields
from pathlib import Path

from app.errors import ConfigError
from app.models import MixingConfig, ModelConfig, PathsConfig, RunConfig, SyntheticTaskSpec, TrainConfig
from config import Config


SECTIONS = {
    "model": (ModelConfig, "ALLOW_FIELDS_FOR_MODEL"),
    "mixing": (MixingConfig, "ALLOW_FIELDS_FOR_MIXING"),
    "train": (TrainConfig, "ALLOW_FIELDS_FOR_TRAIN"),
    "paths": (PathsConfig, "ALLOW_FIELDS_FOR_PATHS"),
}


def _read_json(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config file: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(str(path), "config must be a JSON object")
    return data


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if value is not None and not isinstance(value, str):
        raise ConfigError(key, f"expected a string, got {value!r}")
    return value


def _flatten(data, prefix=""):
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{dotted}.")
        else:
            yield dotted, value


def parse_run_config(data, base_dir=None, config_class=Config):
    """Build a validated RunConfig from a mapping of dotted keys
    (nested objects are accepted and flattened)."""
    sections = {name: {} for name in SECTIONS}
    precision = config_class.PRECISION
    for key, value in _flatten(data):
        if key == "precision":
            precision = value
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(key, "unknown field")
        record_class, allow_attr = SECTIONS[section]
        if name not in getattr(config_class, allow_attr):
            raise ConfigError(key, "unknown field")
        default = next(f.default for f in fields(record_class) if f.name == name)
        sections[section][name] = _coerce(key, value, default)

    if base_dir is not None:
        for name, value in sections["paths"].items():
            if value is not None and not Path(value).is_absolute():
                sections["paths"][name] = str(Path(base_dir) / value)

    run_config = RunConfig(
        model=ModelConfig(**sections["model"]),
        mixing=MixingConfig(**sections["mixing"]),
        train=TrainConfig(**sections["train"]),
        paths=PathsConfig(**sections["paths"]),
        precision=precision,
    )
    return run_config.validate()


def load_run_config(path, seed=None, precision=None, config_class=Config):
    data = _read_json(path)
    run_config = parse_run_config(data, base_dir=Path(path).resolve().parent, config_class=config_class)
    if seed is not None:
        run_config.train.seed = seed
    if precision is not None:
        run_config.precision = precision
    return run_config.validate()


def require_paths(run_config, *names):
    """Every named input path must be set and exist."""
    for name in names:
        value = getattr(run_config.paths, name)
        if value is None:
            raise ConfigError(f"paths.{name}", "required by this command")
        if not Path(value).exists():
            raise ConfigError(f"paths.{name}", f"'{value}' does not exist")


def load_synthetic_spec(path, seed=None, config_class=Config):
    data = _read_json(path)
    values = {}
    for key, value in _flatten(data):
        name = key[len("synthetic."):] if key.startswith("synthetic.") else key
        if name not in config_class.ALLOW_FIELDS_FOR_SYNTHETIC:
            raise ConfigError(key, "unknown field")
        default = next(f.default for f in fields(SyntheticTaskSpec) if f.name == name)
        values[name] = _coerce(key, value, default)
    if seed is not None:
        values["seed"] = seed
    return SyntheticTaskSpec(**values).validate()
