"""Layered run configuration: built-in defaults < YAML file < ``--set key=value`` flags."""

from __future__ import annotations

import copy
import os

import yaml

from ..errors import ConfigError
from ..model.config import ModelConfig
from .stages import StageConfig, parse_init

DEFAULTS = {
    "seed": 0,
    "out_dir": "runs/desk",
    "model": {},
    "stage_defaults": {},
    "stages": [],
}


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.0.c=value``; the value is parsed as YAML, list items by index."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    value = yaml.safe_load(raw) if raw.strip() else ""
    parts = key.split(".")
    node = cfg
    for i, p in enumerate(parts[:-1]):
        if isinstance(node, list):
            try:
                node = node[int(p)]
            except (ValueError, IndexError):
                raise ConfigError(f"bad list index {p!r} in override {key!r}") from None
        else:
            node = node.setdefault(p, {})
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"bad list index {last!r} in override {key!r}") from None
    elif isinstance(node, dict):
        node[last] = value
    else:
        raise ConfigError(f"cannot set {key!r}: parent is not a mapping")


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    base_dir = "."
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a mapping")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown top-level keys in {path}: {sorted(unknown)}")
        cfg = deep_merge(cfg, data)
        base_dir = os.path.dirname(os.path.abspath(path))
    for o in overrides:
        apply_override(cfg, o)
    cfg["base_dir"] = base_dir
    return cfg


def _resolve(path: str, base_dir: str) -> str:
    return path if not path or os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def build_stages(cfg: dict) -> list[StageConfig]:
    base = cfg.get("base_dir", ".")
    stages = []
    for i, raw in enumerate(cfg.get("stages") or []):
        if not isinstance(raw, dict):
            raise ConfigError(f"stage {i} must be a mapping")
        d = deep_merge(cfg.get("stage_defaults") or {}, raw)
        d["manifest_path"] = _resolve(d.get("manifest_path", ""), base)
        kind, p = parse_init(d.get("init_from", "scratch"))
        if p is not None:
            d["init_from"] = f"{kind}:{_resolve(p, base)}"
        try:
            stages.append(StageConfig.from_dict(d))
        except TypeError as exc:
            raise ConfigError(f"stage {i}: {exc}") from None
    return stages


def build_model_config(cfg: dict) -> ModelConfig:
    try:
        return ModelConfig.from_dict(cfg.get("model") or {})
    except TypeError as exc:
        raise ConfigError(f"model: {exc}") from None


def effective_config(cfg: dict) -> dict:
    """Everything the run will actually use, for echoing into the ledger."""
    return {"seed": cfg["seed"], "out_dir": cfg["out_dir"],
            "model": build_model_config(cfg).to_dict(),
            "stages": [s.to_dict() for s in build_stages(cfg)]}
