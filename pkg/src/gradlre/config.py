"""Experiment configuration: one YAML mapping, every key optional."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .cda import SpanSamplerConfig
from .exceptions import ConfigError
from .girl import GirlConfig
from .model import EncoderConfig

MODES = ("supervised", "self-train", "gradlre", "gradlre-cda", "gold-upper-bound")

DEFAULT_CONFIG_TEXT = """\
# Experiment configuration.  Every key is optional; omitted keys take these values.
mode: gradlre            # supervised | self-train | gradlre | gradlre-cda | gold-upper-bound
seeds: [1, 2, 3, 4, 5]   # one run per seed (split, init, shuffling, augmentation)
out_dir: runs/gradlre

data:
  preset: semeval-like   # semeval-like (19 labels, 17.4% no_relation) | tacred-like (42, 78.7%)
  n_mentions: 4000
  corpus_seed: 7
  corpus: null           # path to a corpus file; overrides preset generation
  labeled_fraction: 0.05 # per relation class
  unlabeled_fraction: 0.5  # labels hidden during training; the rest is test
  labeled: null          # pre-split files (from `gradlre split`); override the split above
  unlabeled: null
  test: null

encoder:
  h_R: 256               # buckets per entity half; the feature vector is 2*h_R
  context_window: 3
  hash_seed: 0

model:
  hidden_dim: 0          # 0 = linear softmax head; >0 adds one tanh layer

sgd:                     # supervised pretraining
  step_size: 0.1
  epochs: 400
  batch_size: 16

girl:
  lam: 0.5               # reward must exceed this for a pseudo label to be kept
  episode_len: 16        # pseudo-labeling steps per policy update
  segments: 10           # unlabeled pool is shuffled and cut into this many
  rl_step_size: 0.01
  gl_recompute: per-episode  # per-episode | per-segment | never
  loss_scope: all        # all | accepted

cda:
  budget_fraction: 0.15  # share of non-entity tokens to mask
  geo_p: 0.2             # span length ~ Geometric(geo_p), truncated
  min_len: 1
  max_len: 10
  max_attempts: 30
  n_out: null            # augmented pool size; null = size of the unlabeled split
"""


@dataclass
class DataSection:
    preset: str = "semeval-like"
    n_mentions: int = 4000
    corpus_seed: int = 7
    corpus: str | None = None
    labeled_fraction: float = 0.05
    unlabeled_fraction: float = 0.5
    labeled: str | None = None
    unlabeled: str | None = None
    test: str | None = None


@dataclass
class ModelSection:
    hidden_dim: int = 0


@dataclass
class SGDSection:
    step_size: float = 0.1
    epochs: int = 400
    batch_size: int = 16


@dataclass
class GirlSection:
    lam: float = 0.5
    episode_len: int = 16
    segments: int = 10
    rl_step_size: float = 0.01
    gl_recompute: str = "per-episode"
    loss_scope: str = "all"


@dataclass
class CDASection:
    budget_fraction: float = 0.15
    geo_p: float = 0.2
    min_len: int = 1
    max_len: int = 10
    max_attempts: int = 30
    n_out: int | None = None


@dataclass
class EncoderSection:
    h_R: int = 256
    context_window: int = 3
    hash_seed: int = 0


@dataclass
class ExperimentConfig:
    mode: str = "gradlre"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: str = "runs/gradlre"
    data: DataSection = field(default_factory=DataSection)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    model: ModelSection = field(default_factory=ModelSection)
    sgd: SGDSection = field(default_factory=SGDSection)
    girl: GirlSection = field(default_factory=GirlSection)
    cda: CDASection = field(default_factory=CDASection)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        try:
            self.encoder_config()
            self.girl_config(0)
            self.span_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**asdict(self.encoder))

    def girl_config(self, seed: int) -> GirlConfig:
        return GirlConfig(seed=seed, **asdict(self.girl))

    def span_config(self, seed: int) -> SpanSamplerConfig:
        kw = asdict(self.cda)
        kw.pop("n_out")
        return SpanSamplerConfig(seed=seed, **kw)

    def to_yaml(self) -> str:
        return yaml.safe_dump(asdict(self), sort_keys=False, default_flow_style=None)


_SECTIONS = {
    "data": DataSection, "encoder": EncoderSection, "model": ModelSection,
    "sgd": SGDSection, "girl": GirlSection, "cda": CDASection,
}


def config_from_dict(doc: dict | None) -> ExperimentConfig:
    doc = dict(doc or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if value is None:
                value = {}
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            allowed = {f.name for f in fields(section)}
            bad = set(value) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[key] = section(**value)
        else:
            kwargs[key] = value
    cfg = ExperimentConfig(**kwargs)
    cfg.seeds = [int(s) for s in cfg.seeds]
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
