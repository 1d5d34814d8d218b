"""Flat ``key = value`` run configuration files.

One key per line, ``#`` starts a comment, blank lines are ignored. Keys are
the field names of :class:`ModelConfig` and :class:`TrainConfig`; any key left
out keeps its default. Booleans are ``true``/``false``; an optional integer
may be ``none``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .separator import ModelConfig
from .training import TrainConfig

_SECTIONS = (("model", ModelConfig), ("train", TrainConfig))


def _field_types() -> dict[str, tuple[str, str]]:
    out = {}
    for section, cls in _SECTIONS:
        for f in fields(cls):
            if f.name in out:
                raise AssertionError(f"config key {f.name} defined twice")
            out[f.name] = (section, str(f.type))
    return out


FIELD_TYPES = _field_types()


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


def _parse_value(key: str, kind: str, raw: str):
    text = raw.strip()
    try:
        if "None" in kind and text.lower() == "none":
            return None
        if kind.startswith("bool"):
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw.strip()!r} as {kind}") from None


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def parse_run_config(text: str) -> RunConfig:
    values: dict[str, dict] = {"model": {}, "train": {}}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, kind = FIELD_TYPES[key]
        if key in values[section]:
            raise ConfigError(f"line {lineno}: key {key!r} given twice")
        values[section][key] = _parse_value(key, kind, raw)
    try:
        return RunConfig(ModelConfig(**values["model"]), TrainConfig(**values["train"]))
    except TypeError as exc:  # pragma: no cover - guarded by the key check above
        raise ConfigError(str(exc)) from exc


def serialize_run_config(run: RunConfig) -> str:
    lines = []
    for section, _ in _SECTIONS:
        lines.append(f"# {section}")
        obj = getattr(run, section)
        lines += [f"{f.name} = {_format_value(getattr(obj, f.name))}" for f in fields(obj)]
    return "\n".join(lines) + "\n"


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_run_config(text)


def save_run_config(path, run: RunConfig):
    Path(path).write_text(serialize_run_config(run))
