"""Run-configuration schema: a JSON object validated up front.

Unknown keys are rejected and every diagnostic carries the path of the
offending entry (e.g. "fields[1].sensors.count"), so a schema-valid config
either runs or fails with a located message before any computation starts.
"""

from __future__ import annotations

import json

REQUIRED = object()


class ConfigError(ValueError):
    """Configuration rejected; the message names the config path."""


def _object(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got "
                          f"{type(value).__name__}")
    return value


def _section(value, path, spec):
    _object(value, path)
    unknown = set(value) - set(spec)
    if unknown:
        raise ConfigError(f"{path}: unknown key {sorted(unknown)[0]!r}")
    out = {}
    for key, (default, checker) in spec.items():
        if key in value:
            out[key] = checker(value[key], f"{path}.{key}")
        elif default is REQUIRED:
            raise ConfigError(f"{path}: missing required key {key!r}")
        else:
            out[key] = default
    return out


def _int(minimum=None):
    def check(value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        if minimum is not None and value < minimum:
            raise ConfigError(f"{path}: must be >= {minimum}, got {value}")
        return value
    return check


def _number(minimum=None, exclusive=False):
    def check(value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        value = float(value)
        if minimum is not None:
            if exclusive and value <= minimum:
                raise ConfigError(f"{path}: must be > {minimum}")
            if not exclusive and value < minimum:
                raise ConfigError(f"{path}: must be >= {minimum}")
        return value
    return check


def _bool(value, path):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false")
    return value


def _string(choices=None):
    def check(value, path):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        if choices is not None and value not in choices:
            raise ConfigError(f"{path}: expected one of {sorted(choices)}, "
                              f"got {value!r}")
        return value
    return check


def _int_pair_list(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of coordinate lists")
    out = []
    for i, item in enumerate(value):
        if not isinstance(item, list) or not all(
                isinstance(c, int) and not isinstance(c, bool) for c in item):
            raise ConfigError(f"{path}[{i}]: expected a list of integers")
        out.append(tuple(item))
    return out


def _trajectories(value, path):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list of trajectories")
    return [_int_pair_list(item, f"{path}[{i}]")
            for i, item in enumerate(value)]


def _range_pair(value, path):
    if not isinstance(value, list) or len(value) != 2 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool)
            for v in value):
        raise ConfigError(f"{path}: expected [low, high]")
    return (float(value[0]), float(value[1]))


def _int_list(value, path):
    if not isinstance(value, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v > 0
            for v in value):
        raise ConfigError(f"{path}: expected a list of positive integers")
    return list(value)


def _sensors(value, path):
    if value is None:
        return None
    _object(value, path)
    kind = value.get("kind")
    if kind == "random":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"random"})),
            "count": (REQUIRED, _int(1)),
            "seed": (None, _int(0)),
        })
    if kind == "explicit":
        out = _section(value, path, {
            "kind": (REQUIRED, _string({"explicit"})),
            "stationary": ([], _int_pair_list),
            "mobile": ([], _trajectories),
        })
        if not out["stationary"] and not out["mobile"]:
            raise ConfigError(f"{path}: explicit sensors need at least one "
                              f"stationary or mobile entry")
        return out
    if kind == "measurements":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"measurements"})),
            "path": (REQUIRED, _string()),
        })
    raise ConfigError(f"{path}.kind: expected 'random', 'explicit', or "
                      f"'measurements'")


def _compress(value, path):
    if value is None:
        return None
    _object(value, path)
    kind = value.get("kind")
    if kind == "svd":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"svd"})),
            "modes": (REQUIRED, _int(1)),
        })
    if kind == "fourier":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"fourier"})),
            "max_kx": (REQUIRED, _int(0)),
            "max_ky": (REQUIRED, _int(0)),
        })
    raise ConfigError(f"{path}.kind: expected 'svd' or 'fourier'")


def _field(value, path):
    return _section(value, path, {
        "path": (REQUIRED, _string()),
        "id": (REQUIRED, _string()),
        "sensors": (None, _sensors),
        "compress": (None, _compress),
    })


def _fields(value, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of fields")
    return [_field(item, f"{path}[{i}]") for i, item in enumerate(value)]


def _forecaster(value, path):
    if value is None:
        return None
    _object(value, path)
    kind = value.get("kind")
    if kind == "sindy":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"sindy"})),
            "poly_order": (1, _int(0)),
            "include_sine": (False, _bool),
            "dt": (1.0, _number(0.0, exclusive=True)),
            "threshold": (0.05, _number(0.0)),
        })
    if kind == "recurrent":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"recurrent"})),
            "window": (10, _int(1)),
            "hidden_size": (32, _int(1)),
            "epochs": (300, _int(1)),
            "lr": (1e-3, _number(0.0, exclusive=True)),
        })
    raise ConfigError(f"{path}.kind: expected 'sindy' or 'recurrent'")


def _manager(value, path):
    return _section(value, path, {
        "lags": (REQUIRED, _int(1)),
        "train_size": (REQUIRED, _number(0.0, exclusive=True)),
        "val_size": (REQUIRED, _number(0.0, exclusive=True)),
        "test_size": (REQUIRED, _number(0.0, exclusive=True)),
        "parametric": (False, _bool),
        "seed": (None, _int(0)),
    })


def _model(value, path):
    return _section(value, path, {
        "sequence": ("lstm", _string({"lstm", "gru"})),
        "hidden_size": (None, _int(1)),
        "num_layers": (2, _int(1)),
        "decoder_hidden": ([350, 400], _int_list),
        "activation": ("relu", _string({"relu", "tanh"})),
        "seed": (None, _int(0)),
        "latent_forecaster": (None, _forecaster),
    })


def _train(value, path):
    return _section(value, path, {
        "epochs": (100, _int(1)),
        "batch_size": (64, _int(1)),
        "lr": (1e-3, _number(0.0)),
        "patience": (50, _int(1)),
        "seed": (None, _int(0)),
        "sindy_regularization": (0.0, _number(0.0)),
        "sindy_thres_epoch": (20, _int(1)),
        "sindy_threshold": (0.05, _number(0.0)),
        "verbose": (False, _bool),
    })


def _noise(value, path):
    if value is None:
        return None
    return _section(value, path, {
        "std": (REQUIRED, _number(0.0)),
        "seed": (None, _int(0)),
    })


def _generate(value, path):
    _object(value, path)
    kind = value.get("kind")
    if kind == "double_gyre":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"double_gyre"})),
            "trajectories": (0, _int(0)),
            "eps": (0.25, _number()),
            "omega": (0.6283185307179586, _number()),
            "eps_range": ((0.1, 0.3), _range_pair),
            "omega_range": ((0.3141592653589793, 1.2566370614359172),
                            _range_pair),
            "seed": (None, _int(0)),
            "nx": (50, _int(2)),
            "ny": (25, _int(2)),
            "t_end": (10.0, _number(0.0, exclusive=True)),
            "dt": (0.05, _number(0.0, exclusive=True)),
        })
    if kind == "traveling_wave":
        return _section(value, path, {
            "kind": (REQUIRED, _string({"traveling_wave"})),
            "rows": (64, _int(1)),
            "cols": (64, _int(1)),
            "steps": (200, _int(1)),
            "speed": (0.5, _number()),
            "wavelength": (16.0, _number(0.0, exclusive=True)),
        })
    raise ConfigError(f"{path}.kind: expected 'double_gyre' or "
                      f"'traveling_wave'")


def _split_section(value, path):
    return _section(value, path, {
        "split": ("test", _string({"train", "val", "test"})),
    })


def _forecast_section(value, path):
    return _section(value, path, {
        "horizon": (REQUIRED, _int(0)),
        "split": ("train", _string({"train", "val", "test"})),
    })


_TOP_LEVEL = {
    "seed": (0, _int(0)),
    "out": (None, _string()),
    "manager": (None, _manager),
    "fields": (None, _fields),
    "noise": (None, _noise),
    "model": (None, _model),
    "train": (None, _train),
    "generate": (None, _generate),
    "evaluate": (None, _split_section),
    "reconstruct": (None, _split_section),
    "forecast": (None, _forecast_section),
}


def validate_config(raw: dict) -> dict:
    """Validate and normalize a raw config mapping; fill every default."""
    cfg = _section(raw, "config", _TOP_LEVEL)
    if cfg["model"] is None:
        cfg["model"] = _model({}, "config.model")
    if cfg["train"] is None:
        cfg["train"] = _train({}, "config.train")
    if cfg["evaluate"] is None:
        cfg["evaluate"] = {"split": "test"}
    if cfg["reconstruct"] is None:
        cfg["reconstruct"] = {"split": "test"}
    # derive unset per-section seeds from the master seed
    base = cfg["seed"]
    if cfg["manager"] is not None and cfg["manager"]["seed"] is None:
        cfg["manager"]["seed"] = base
    if cfg["model"]["seed"] is None:
        cfg["model"]["seed"] = base + 1
    if cfg["train"]["seed"] is None:
        cfg["train"]["seed"] = base + 2
    if cfg["noise"] is not None and cfg["noise"]["seed"] is None:
        cfg["noise"]["seed"] = base + 3
    if cfg["generate"] is not None and "seed" in cfg["generate"] \
            and cfg["generate"]["seed"] is None:
        cfg["generate"]["seed"] = base + 4
    if cfg["fields"] is not None:
        for i, fld in enumerate(cfg["fields"]):
            sensors = fld["sensors"]
            if sensors is not None and sensors.get("kind") == "random" \
                    and sensors["seed"] is None:
                sensors["seed"] = base + 10 + i
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate_config(raw)
