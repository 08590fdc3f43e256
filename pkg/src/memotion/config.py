"""Run configuration: a nested YAML file validated into dataclasses."""
import dataclasses
import typing
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import yaml

from .dataset import SKIP_POLICIES
from .encoders import BackboneConfig, TextEncoderConfig
from .fusion import FusionConfig
from .textproc import ALGORITHMS
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetPaths:
    train_csv: Optional[str] = None
    train_image_dir: Optional[str] = None
    validation_csv: Optional[str] = None
    validation_image_dir: Optional[str] = None
    skip_policy: str = "skip_bad"
    cache_images: bool = False

    def __post_init__(self):
        if self.skip_policy not in SKIP_POLICIES:
            raise ValueError(f"skip_policy must be one of {SKIP_POLICIES}")


@dataclass
class TextprocConfig:
    stopwords_path: Optional[str] = None
    vocab_size: int = 8000
    algorithm: str = "unigram"
    max_len: int = 64
    # "train" keeps validation text out of the tokenizer fit
    fit_on: str = "train"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.fit_on not in ("train", "train+validation"):
            raise ValueError("fit_on must be 'train' or 'train+validation'")
        if self.max_len < 1 or self.vocab_size < 1:
            raise ValueError("max_len and vocab_size must be positive")


@dataclass
class EvaluationConfig:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class RunConfig:
    dataset: DatasetPaths = field(default_factory=DatasetPaths)
    textproc: TextprocConfig = field(default_factory=TextprocConfig)
    image_encoder: BackboneConfig = field(default_factory=BackboneConfig)
    text_encoder: TextEncoderConfig = field(default_factory=TextEncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    output_dir: str = "runs/default"
    seed: int = 0

    def train_config(self) -> TrainConfig:
        return replace(self.training, seed=self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["training"].pop("seed")
        return _plain(d)


# keys that may not appear in a config section (set elsewhere)
_EXCLUDED = {TrainConfig: {"seed"}}
_PATH_KEYS = ("train_csv", "train_image_dir", "validation_csv", "validation_image_dir")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        elem = args[0]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(elem, v, f"{where}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"{where}: expected {len(args)} entries")
        return tuple(_coerce(a, v, f"{where}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)} - _EXCLUDED.get(cls, set())
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    hints = typing.get_type_hints(cls)
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(data: dict, base_dir=None) -> RunConfig:
    cfg = _build(RunConfig, data, "")
    if base_dir is not None:
        base = Path(base_dir)
        for key in _PATH_KEYS:
            value = getattr(cfg.dataset, key)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg.dataset, key, str(base / value))
        if cfg.textproc.stopwords_path and not Path(cfg.textproc.stopwords_path).is_absolute():
            cfg.textproc.stopwords_path = str(base / cfg.textproc.stopwords_path)
        if not Path(cfg.output_dir).is_absolute():
            cfg.output_dir = str(base / cfg.output_dir)
    return cfg


def load_config(path) -> RunConfig:
    """Parse a YAML run config; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False), encoding="utf-8")
