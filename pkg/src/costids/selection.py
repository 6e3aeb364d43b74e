"""Stratified k-fold cross-validation over staged hyperparameter grids.

Each stage searches one parameter while the others stay at their defaults or
at the winners of earlier stages. Feature preprocessing is refitted inside
every fold so the validation fold never informs the encoder.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ._seeding import stream
from .costs import CostMatrix, kdd_cost_matrix
from .errors import ConfigError, CostIdsError, NumericError
from .evaluation import UNWEIGHTED, WEIGHTED, predict
from .gmm import GmmHyperParams, train_gmm_classifier
from .kdd import LabeledDataset, RawRecords, fit_encoder
from .mlp import MlpHyperParams, train_mlp

log = logging.getLogger(__name__)

RATE_GRID = (0.0001, 0.001, 0.01, 0.1)
SIZE_GRID = (10, 20, 40, 60, 80, 100, 120, 140, 160, 320)


def kfold_split(labels, k: int = 10, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified ``(train, validation)`` index pairs.

    Each class is shuffled and dealt round-robin across folds, continuing from
    where the previous class stopped, so per-class fold counts differ by at
    most one and fold sizes differ by at most one.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2 or n < k:
        raise ConfigError(f"need 2 <= k <= n for k-fold, got k={k}, n={n}")
    rng = stream(seed, "kfold")
    fold_of = np.empty(n, dtype=np.int64)
    start = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if len(members) < k:
            warnings.warn(f"class {c} has {len(members)} records, fewer than {k} folds", stacklevel=2)
        members = rng.permutation(members)
        fold_of[members] = (start + np.arange(len(members))) % k
        start = (start + len(members)) % k
    all_idx = np.arange(n)
    return [(all_idx[fold_of != f], all_idx[fold_of == f]) for f in range(k)]


@dataclass(frozen=True)
class GridStage:
    param: str
    candidates: tuple
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.candidates:
            raise ConfigError(f"stage {self.param!r} has no candidates")
        object.__setattr__(self, "candidates", tuple(self.candidates))


@dataclass(frozen=True)
class ModelFamily:
    """How to train one model of a family from a flat parameter dict."""

    name: str
    defaults: dict
    fit: Callable[[LabeledDataset, dict, int], Any]
    stages: tuple = ()


def _fit_mlp(ds, params, seed):
    return train_mlp(ds, MlpHyperParams(**params, seed=seed))


def _fit_gmm(ds, params, seed):
    return train_gmm_classifier(ds, GmmHyperParams(**params, seed=seed))


MLP = ModelFamily(
    "mlp",
    {"learning_rate": 0.01, "epochs": 100, "hidden_units": 0},
    _fit_mlp,
    (
        GridStage("learning_rate", RATE_GRID, {"hidden_units": 0}),
        GridStage("epochs", (10, 100, 500, 1000), {"hidden_units": 0}),
        GridStage("hidden_units", SIZE_GRID),
    ),
)
LINEAR = replace(MLP, name="linear", stages=MLP.stages[:2])
GMM = ModelFamily(
    "gmm",
    {"tol": 0.001, "max_iter": 100, "n_components": 20, "var_floor": 1e-3},
    _fit_gmm,
    (
        GridStage("tol", RATE_GRID, {"n_components": 20}),
        GridStage("max_iter", (25, 100, 500, 1000), {"n_components": 20}),
        GridStage("n_components", SIZE_GRID),
    ),
)
NAIVE_BAYES = replace(
    GMM, name="naive-bayes", defaults={**GMM.defaults, "n_components": 1},
    stages=(GridStage("tol", RATE_GRID, {"n_components": 1}),
            GridStage("max_iter", (25, 100, 500, 1000), {"n_components": 1})),
)
FAMILIES = {f.name: f for f in (MLP, LINEAR, GMM, NAIVE_BAYES)}


def family(name: str) -> ModelFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown model family {name!r}; choose from {', '.join(FAMILIES)}") from None


def encode_fold(train: RawRecords, val: RawRecords):
    enc = fit_encoder(train)
    return enc.dataset(train, "cv-train"), enc.dataset(val, "cv-val")


def zscore_fold(train: LabeledDataset, val: LabeledDataset):
    """Refit column z-scoring on the training part (zero-variance columns -> 0)."""
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    safe = np.where(std > 0, std, 1.0)

    def apply(ds):
        Z = (ds.X - mean) / safe
        Z[:, std == 0] = 0.0
        return LabeledDataset(Z, ds.y, ds.tag)

    return apply(train), apply(val)


def score_model(model, ds: LabeledDataset, cm: CostMatrix, score: str = "cost") -> float:
    """Mean cost of weighted decisions, or the error rate of most-probable-class decisions."""
    P = model.predict_proba(ds.X)
    if score == "cost":
        return float(cm.values[predict(P, cm, WEIGHTED), ds.y].mean())
    if score == "error":
        return float(np.mean(predict(P, cm, UNWEIGHTED) != ds.y))
    raise ConfigError(f"unknown scoring mode {score!r}")


@dataclass
class CvResult:
    param: str
    candidates: tuple
    fold_scores: np.ndarray  # (candidates, folds); NaN where training failed
    selected: Any
    failures: dict = field(default_factory=dict)

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    def rows(self):
        for c, cand in enumerate(self.candidates):
            for f, s in enumerate(self.fold_scores[c]):
                yield {"stage": self.param, "candidate": cand, "fold": f, "score": s}


@dataclass
class SearchResult:
    family: str
    selected: dict
    stages: list

    def summary(self) -> dict:
        return {
            "family": self.family,
            "selected": self.selected,
            "stages": [
                {
                    "param": r.param,
                    "candidates": list(r.candidates),
                    "mean_scores": [None if math.isnan(s) else s for s in r.mean_scores.tolist()],
                    "selected": r.selected,
                    "failures": {str(k): v for k, v in r.failures.items()},
                }
                for r in self.stages
            ],
        }


def _labels(data):
    return data.labels if isinstance(data, RawRecords) else data.y


def staged_grid_search(
    data,
    fam: ModelFamily,
    stages: Optional[Sequence[GridStage]] = None,
    k: int = 10,
    seed: int = 0,
    cm: Optional[CostMatrix] = None,
    score: str = "cost",
    preprocess: Optional[Callable] = None,
) -> SearchResult:
    """Run the stages in order; each picks the candidate with the lowest mean fold score.

    ``data`` is either raw records (an encoder is refitted per fold) or an
    encoded dataset (z-scoring is refitted per fold). Candidates whose training
    raises on any fold are excluded from selection.
    """
    stages = list(fam.stages if stages is None else stages)
    cm = cm or kdd_cost_matrix()
    if preprocess is None:
        preprocess = encode_fold if isinstance(data, RawRecords) else zscore_fold
    folds = kfold_split(_labels(data), k, seed)
    chosen = dict(fam.defaults)
    results = []
    for stage in stages:
        base = {**chosen, **stage.fixed}
        scores = np.full((len(stage.candidates), k), np.nan)
        failures = {}
        for f, (tr, va) in enumerate(folds):
            train_ds, val_ds = preprocess(data.take(tr), data.take(va))
            model_seed = int(stream(seed, "cv-model", f).integers(2**31))
            for c, cand in enumerate(stage.candidates):
                if cand in failures:
                    continue
                params = {**base, stage.param: cand}
                try:
                    model = fam.fit(train_ds, params, model_seed)
                    s = score_model(model, val_ds, cm, score)
                    if not math.isfinite(s):
                        raise NumericError("non-finite validation score")
                except (CostIdsError, FloatingPointError) as exc:
                    failures[cand] = f"fold {f}: {exc}"
                    log.warning("candidate %s=%r failed: %s", stage.param, cand, exc)
                    continue
                scores[c, f] = s
        valid = [c for c, cand in enumerate(stage.candidates) if cand not in failures]
        if not valid:
            raise NumericError(f"every candidate of stage {stage.param!r} failed: {failures}")
        scores[[c for c in range(len(stage.candidates)) if c not in valid]] = np.nan
        means = scores.mean(axis=1)
        # First listed candidate wins ties.
        best = min(valid, key=lambda c: (means[c], c))
        chosen = {**base, stage.param: stage.candidates[best]}
        results.append(CvResult(stage.param, stage.candidates, scores, stage.candidates[best], failures))
        log.info("stage %s: selected %r (mean score %.6g)", stage.param, stage.candidates[best], means[best])
    return SearchResult(fam.name, chosen, results)


def write_cv_report(csv_path, json_path, result: SearchResult) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["stage", "candidate", "fold", "score"], lineterminator="\n")
        writer.writeheader()
        for stage in result.stages:
            for row in stage.rows():
                row["score"] = "" if math.isnan(row["score"]) else repr(float(row["score"]))
                writer.writerow(row)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
