"""Run-config files: flat ``key = value`` lines with dotted sections.

Grammar (one entry per line)::

    # comment, blank lines ignored
    seed = 3                       # top-level training keys
    data.kind = points2d           # dataset keys under "data."
    sweep.P = [0.1, 0.2, 0.3]      # sweep axes under "sweep."; a list per axis
    out = runs/reference           # output directory

Values are JSON literals (numbers, ``true``/``false``, ``[lists]``,
``"strings"``); anything that does not parse as JSON is taken as a bare
string. ``seed`` is required. Unknown keys are rejected with their line.

Seed precedence, lowest first: config file, ``GENCO_SEED``, ``--override``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .trainer import DataSpec, TrainConfig

SEED_ENV = "GENCO_SEED"


class ConfigError(ValueError):
    pass


_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "data"}
_DATA_FIELDS = {f.name: f for f in fields(DataSpec)}
_CASTS = {"int": int, "float": float, "bool": bool, "str": str}


@dataclass
class RunConfig:
    train: TrainConfig
    out: str | None = None
    sweep: dict[str, list[Any]] = field(default_factory=dict)


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _field_for(key: str):
    if key.startswith("data."):
        return _DATA_FIELDS.get(key[5:])
    return _TRAIN_FIELDS.get(key)


def _coerce(key: str, value: Any, where: str) -> Any:
    f = _field_for(key)
    if f is None:
        raise ConfigError(f"{where}: unknown key {key!r}")
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    cast = _CASTS.get(kind)
    if cast is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: {key} expects true/false, got {value!r}")
    if cast is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where}: {key} expects an integer, got {value!r}")
        return value
    if cast is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: {key} expects a number, got {value!r}")
        return float(value)
    if cast is str:
        return str(value)
    return value


def parse_entries(text: str, source: str = "<config>") -> list[tuple[str, Any, str]]:
    """Return ``(key, value, location)`` triples in file order."""
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {line.strip()!r}")
        key, raw = body.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{where}: empty key")
        entries.append((key, _parse_value(raw), where))
    return entries


def build(entries: list[tuple[str, Any, str]], env: dict[str, str] | None = None,
          overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    env = os.environ if env is None else env
    top: dict[str, Any] = {}
    data: dict[str, Any] = {}
    sweep: dict[str, list[Any]] = {}
    out = None
    seen: dict[str, str] = {}

    def apply(key, value, where):
        nonlocal out
        if key == "out":
            out = str(value)
        elif key.startswith("sweep."):
            axis = key[6:]
            values = value if isinstance(value, list) else [value]
            sweep[axis] = [_coerce(axis, v, where) for v in values]
        elif key.startswith("data."):
            data[key[5:]] = _coerce(key, value, where)
        else:
            top[key] = _coerce(key, value, where)
        seen[key] = where

    for key, value, where in entries:
        if key in seen:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set at {seen[key]})")
        apply(key, value, where)
    if SEED_ENV in env:
        try:
            top["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        apply(key.strip(), _parse_value(raw), f"--override {item}")
    if "seed" not in top:
        raise ConfigError("missing required key 'seed'")
    try:
        cfg = TrainConfig(data=DataSpec(**data), **top).validate()
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunConfig(cfg, out, sweep)


def load(path, env: dict[str, str] | None = None,
         overrides: list[str] | tuple[str, ...] = ()) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build(parse_entries(text, str(path)), env, overrides)


def with_values(cfg: TrainConfig, values: dict[str, Any]) -> TrainConfig:
    """Copy of ``cfg`` with top-level and ``data.*`` keys replaced."""
    top = {k: v for k, v in values.items() if not k.startswith("data.")}
    data = {k[5:]: v for k, v in values.items() if k.startswith("data.")}
    return replace(cfg, data=replace(cfg.data, **data), **top).validate()


def dumps(cfg: TrainConfig) -> str:
    """Render a config back to the file grammar."""
    d = cfg.to_dict()
    lines = [f"{k} = {json.dumps(v)}" for k, v in d.items() if k != "data"]
    lines += [f"data.{k} = {json.dumps(v)}" for k, v in d["data"].items()]
    return "\n".join(lines) + "\n"
