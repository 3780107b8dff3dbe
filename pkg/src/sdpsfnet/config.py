"""Flat ``key = value`` config files covering TrainConfig and ModelConfig.

Blank lines and ``#`` comments are ignored. Tuples are comma separated,
booleans are ``true``/``false``. Unknown keys are an error.
"""

from dataclasses import fields
from pathlib import Path

from .network import ModelConfig
from .train import TrainConfig

MODEL_KEYS = {f.name: f for f in fields(ModelConfig)}
TRAIN_KEYS = {f.name: f for f in fields(TrainConfig) if f.name != "model"}


def _parse(value: str, default):
    if isinstance(default, bool):
        v = value.lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return v in ("true", "1", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        items = [s.strip() for s in value.split(",") if s.strip()]
        return tuple(int(s) if s.lstrip("-").isdigit() else s for s in items)
    return value


def parse_config(text: str) -> TrainConfig:
    train_kw, model_kw = {}, {}
    defaults_t, defaults_m = TrainConfig(), ModelConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.removeprefix("model.")
        if key in TRAIN_KEYS:
            train_kw[key] = _parse(value, getattr(defaults_t, key))
        elif key in MODEL_KEYS:
            model_kw[key] = _parse(value, getattr(defaults_m, key))
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    return TrainConfig(**train_kw, model=ModelConfig(**model_kw))


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text())


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def dump_config(cfg: TrainConfig) -> str:
    lines = ["# training"]
    lines += [f"{k} = {_format(getattr(cfg, k))}" for k in TRAIN_KEYS]
    lines.append("# model")
    lines += [f"{k} = {_format(getattr(cfg.model, k))}" for k in MODEL_KEYS]
    return "\n".join(lines) + "\n"
