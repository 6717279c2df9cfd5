"""Flat ``key = value`` config files mirroring TrainConfig / ModelConfig."""
from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

from gazeaeg.gaze import ATTRIBUTES
from gazeaeg.model import ModelConfig
from gazeaeg.training import TrainConfig

_GAZE_PREFIX = "gaze_weight_"


def _coerce(raw: str, default: Any, key: str):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float) or default is None:
        return float(raw)
    return raw


def config_to_dict(cfg: TrainConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name != "model":
            out[f.name] = getattr(cfg, f.name)
    for f in dataclasses.fields(ModelConfig):
        if f.name != "gaze_loss_weights":
            out[f.name] = getattr(cfg.model, f.name)
    for a in ATTRIBUTES:
        out[_GAZE_PREFIX + a.value] = cfg.model.gaze_loss_weights.get(a.value)
    return out


def dump_config(cfg: TrainConfig, extra: dict[str, Any] | None = None) -> str:
    items = config_to_dict(cfg)
    if extra:
        items.update(extra)
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def parse_config(text: str, base: TrainConfig | None = None) -> tuple[TrainConfig, dict[str, str]]:
    """Returns the config plus any keys that are not config fields (run metadata)."""
    base = base or TrainConfig()
    train_kw = {f.name: getattr(base, f.name) for f in dataclasses.fields(TrainConfig) if f.name != "model"}
    model_kw = {f.name: getattr(base.model, f.name) for f in dataclasses.fields(ModelConfig)}
    model_kw["gaze_loss_weights"] = dict(base.model.gaze_loss_weights)
    train_defaults = {f.name: f.default for f in dataclasses.fields(TrainConfig) if f.name != "model"}
    model_defaults = {f.name: f.default for f in dataclasses.fields(ModelConfig)}
    extra: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in train_kw:
            train_kw[key] = _coerce(value, train_defaults[key], key)
        elif key in model_kw and key != "gaze_loss_weights":
            model_kw[key] = _coerce(value, model_defaults[key], key)
        elif key.startswith(_GAZE_PREFIX):
            model_kw["gaze_loss_weights"][key[len(_GAZE_PREFIX):]] = float(value)
        else:
            extra[key] = value
    return TrainConfig(**train_kw, model=ModelConfig(**model_kw)), extra


def load_config(path: str | Path) -> tuple[TrainConfig, dict[str, str]]:
    return parse_config(Path(path).read_text(encoding="utf-8"))
