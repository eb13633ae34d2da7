"""Run configuration: one YAML file drives every pipeline stage.

Top-level keys (all optional except where noted):

    seed: int
    data: SyntheticConfig fields (lexicons, topic sizes, split sizes)
    vocab: {min_frequency}
    coherence_pairs: {negatives_per_positive}
    model: ModelConfig fields except vocab_size
    style_classifier / coherence_classifier: ClassifierConfig fields
    language_model: LMConfig fields
    training: TrainingConfig fields, with weights: {lambda1..lambda4}

Overrides use dotted keys, e.g. ``training.max_steps=200``; the value is
parsed as YAML.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import yaml

from .classifiers import ClassifierConfig
from .lm import LMConfig
from .model import ModelConfig
from .synthetic import SyntheticConfig
from .training import TrainingConfig

SECTIONS = ("seed", "data", "vocab", "coherence_pairs", "model", "style_classifier",
            "coherence_classifier", "language_model", "training")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    min_frequency: int = 1
    negatives_per_positive: int = 1
    model: dict = field(default_factory=dict)
    style_classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    coherence_classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    language_model: LMConfig = field(default_factory=LMConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, **self.model)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "data": self.data.to_dict(),
            "vocab": {"min_frequency": self.min_frequency},
            "coherence_pairs": {"negatives_per_positive": self.negatives_per_positive},
            "model": dict(self.model),
            "style_classifier": self.style_classifier.to_dict(),
            "coherence_classifier": self.coherence_classifier.to_dict(),
            "language_model": self.language_model.to_dict(),
            "training": self.training.to_dict(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            model = dict(raw.get("model") or {})
            if "vocab_size" in model:
                raise ConfigError("model.vocab_size is derived from the vocabulary; remove it")
            ModelConfig(vocab_size=1, **model)  # validate keys and values early
            return cls(
                seed=int(raw.get("seed", 0)),
                data=SyntheticConfig.from_dict(raw.get("data") or {}),
                min_frequency=int((raw.get("vocab") or {}).get("min_frequency", 1)),
                negatives_per_positive=int(
                    (raw.get("coherence_pairs") or {}).get("negatives_per_positive", 1)),
                model=model,
                style_classifier=ClassifierConfig.from_dict(raw.get("style_classifier") or {}),
                coherence_classifier=ClassifierConfig.from_dict(
                    raw.get("coherence_classifier") or {}),
                language_model=LMConfig.from_dict(raw.get("language_model") or {}),
                training=TrainingConfig.from_dict(raw.get("training") or {}),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def apply_override(raw: dict, override: str) -> None:
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not KEY=VALUE")
    key, value = override.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-mapping")
    node[parts[-1]] = yaml.safe_load(value)


def load_config(path=None, overrides: Sequence[str] = (), seed: int | None = None) -> RunConfig:
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    for o in overrides:
        apply_override(raw, o)
    if seed is not None:
        raw["seed"] = seed
    return RunConfig.from_dict(raw)
