"""Run configuration: one JSON document, overridable from the command line."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

_BOOTSTRAP_KEYS = {"resamples", "confidence"}
_ALPHA_KEYS = {"min", "max", "step"}
_CV_KEYS = {"folds", "score"}


@dataclass
class RunConfig:
    seed: int
    output_dir: str = "run"
    train_file: Optional[str] = None
    test_file: Optional[str] = None
    label_map: Optional[str] = None
    cost_matrix: Optional[str] = None
    allow_nonstandard_cost: bool = False
    family: str = "mlp"
    hyperparameters: dict = field(default_factory=dict)
    hyperparameters_file: Optional[str] = None
    bootstrap: dict = field(default_factory=lambda: {"resamples": 1000, "confidence": 0.99})
    alpha: dict = field(default_factory=lambda: {"min": 1.0, "max": 10.0, "step": 1.0})
    alpha_transpose: bool = False
    subsample: Optional[int] = None
    cv: dict = field(default_factory=lambda: {"folds": 10, "score": "cost"})

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        for name, allowed in (("bootstrap", _BOOTSTRAP_KEYS), ("alpha", _ALPHA_KEYS), ("cv", _CV_KEYS)):
            value = getattr(self, name)
            if not isinstance(value, dict):
                raise ConfigError(f"{name} must be an object")
            unknown = set(value) - allowed
            if unknown:
                raise ConfigError(f"unknown {name} keys: {', '.join(sorted(unknown))}")
            setattr(self, name, {**_default(name), **value})
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError("subsample must be a positive record count")
        if self.cv["score"] not in ("cost", "error"):
            raise ConfigError("cv.score must be 'cost' or 'error'")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "seed" not in doc:
            raise ConfigError("config must set 'seed'")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def require_files(self, *names) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"config key {name!r} is required for this command")
            if not Path(value).is_file():
                raise ConfigError(f"{name}: file not found: {value}")


def _default(name):
    return next(f.default_factory() for f in fields(RunConfig) if f.name == name)
