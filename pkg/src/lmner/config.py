"""Run configuration: one JSON file plus flag overrides (flags win).

Every training hyperparameter has a baked-in default, so a minimal config
only lists paths. Unknown keys are rejected to catch typos early.
"""

from __future__ import annotations

import dataclasses
import json
import os

from .encoder import EncoderConfig
from .errors import ConfigError
from .schedule import TrainConfig
from .transfer import PretrainMode

_PATH_KEYS = ("train", "dev", "test", "unlabeled", "embeddings", "out_dir", "lm_checkpoint")


def _lm_defaults() -> TrainConfig:
    return TrainConfig(epochs=20, word_budget=500)


def _ner_defaults() -> TrainConfig:
    return TrainConfig(epochs=50, word_budget=1000)


@dataclasses.dataclass
class RunConfig:
    seed: int = 1
    mode: PretrainMode = PretrainMode.BILM
    head: str = "crf"
    crf_boundaries: bool = True
    normalize_chars: bool = False
    min_count: int = 1
    oov_range: float = 0.005
    paths: dict = dataclasses.field(default_factory=dict)
    arch: EncoderConfig = dataclasses.field(default_factory=EncoderConfig)
    lm_train: TrainConfig = dataclasses.field(default_factory=_lm_defaults)
    ner_train: TrainConfig = dataclasses.field(default_factory=_ner_defaults)

    def path(self, key: str, required: bool = False) -> str | None:
        value = self.paths.get(key)
        if required and not value:
            raise ConfigError(f"config is missing required path {key!r}")
        return value


def _apply_section(obj, section: dict, name: str):
    valid = {f.name for f in dataclasses.fields(obj)}
    for key, value in section.items():
        if key not in valid:
            raise ConfigError(f"unknown key {key!r} in config section {name!r}")
        setattr(obj, key, value)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file and flag overrides."""
    cfg = RunConfig()
    raw = {}
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path!r} does not exist")
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    known = {"seed", "mode", "head", "crf_boundaries", "normalize_chars", "min_count",
             "oov_range", "paths", "architecture", "training"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown top-level config key {key!r}")
    for key in ("seed", "head", "crf_boundaries", "normalize_chars", "min_count", "oov_range"):
        if key in raw:
            setattr(cfg, key, raw[key])
    if "mode" in raw:
        cfg.mode = _parse_mode(raw["mode"])
    for key, value in raw.get("paths", {}).items():
        if key not in _PATH_KEYS:
            raise ConfigError(f"unknown path key {key!r}")
        cfg.paths[key] = value
    _apply_section(cfg.arch, raw.get("architecture", {}), "architecture")
    training = raw.get("training", {})
    for section in training:
        if section not in ("lm", "ner"):
            raise ConfigError(f"unknown training section {section!r}")
    _apply_section(cfg.lm_train, training.get("lm", {}), "training.lm")
    _apply_section(cfg.ner_train, training.get("ner", {}), "training.ner")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "mode":
            cfg.mode = _parse_mode(value)
        elif key == "seed":
            cfg.seed = int(value)
        elif key == "head":
            cfg.head = value
        elif key in _PATH_KEYS:
            cfg.paths[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    if cfg.head not in ("softmax", "crf"):
        raise ConfigError(f"head must be 'softmax' or 'crf', not {cfg.head!r}")
    return cfg


def _parse_mode(value) -> PretrainMode:
    if isinstance(value, PretrainMode):
        return value
    try:
        return PretrainMode(value)
    except ValueError:
        options = ", ".join(m.value for m in PretrainMode)
        raise ConfigError(f"mode must be one of {options}, not {value!r}") from None


def require_paths(cfg: RunConfig, keys, must_exist=()) -> None:
    """Raise ConfigError naming any missing or nonexistent path field."""
    for key in keys:
        cfg.path(key, required=True)
    for key in must_exist:
        value = cfg.path(key, required=True)
        if not os.path.exists(value):
            raise ConfigError(f"path {key!r} = {value!r} does not exist")
