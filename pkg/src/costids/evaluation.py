"""Empirical cost, detection/false-alarm rates and bootstrap intervals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._seeding import stream
from .costs import CostMatrix, alpha_cost_matrix, decide_batch
from .errors import ConfigError, DataError
from .kdd import CLASS_NAMES, LabeledDataset

WEIGHTED = "weighted"
UNWEIGHTED = "unweighted"
MODES = (WEIGHTED, UNWEIGHTED)

REPORT_COLUMNS = ("alpha", "mode", "mu", "ci_low", "ci_high", "dr", "fa", "dr_probe", "dr_dos", "dr_u2r", "dr_r2l")


def posteriors_of(model, X) -> np.ndarray:
    """Posterior matrix from a fitted model, a callable, or a precomputed array."""
    if hasattr(model, "predict_proba"):
        return model.predict_proba(X)
    if callable(model):
        return np.asarray(model(X))
    return np.asarray(model)


def predict(posteriors, cm: CostMatrix, mode: str = WEIGHTED) -> np.ndarray:
    """Weighted: least expected cost. Unweighted: most probable class. Ties -> lowest index."""
    P = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    if mode == WEIGHTED:
        return decide_batch(P, cm)
    if mode == UNWEIGHTED:
        return np.argmax(P, axis=1)
    raise ConfigError(f"unknown decision mode {mode!r}")


class Evaluation(NamedTuple):
    predictions: np.ndarray
    costs: np.ndarray


def evaluate(model, ds: LabeledDataset, cm: CostMatrix, mode: str = WEIGHTED) -> Evaluation:
    """Predict every record and score it with ``cm`` (the matrix always scores)."""
    dim = getattr(model, "dim", None)
    if dim is not None and dim != ds.dim:
        raise ConfigError(f"model dimension {dim} does not match dataset dimension {ds.dim}")
    P = posteriors_of(model, ds.X)
    if P.shape != (len(ds), cm.k):
        raise ConfigError(f"posterior shape {P.shape} does not match {len(ds)} records x {cm.k} classes")
    pred = predict(P, cm, mode)
    return Evaluation(pred, cm.values[pred, ds.y])


def empirical_cost(costs) -> float:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size == 0:
        raise DataError("empirical cost of an empty set is undefined")
    return float(costs.mean())


@dataclass(frozen=True)
class ConfusionCounts:
    """``matrix[i, j]``: records predicted ``i`` with truth ``j``. Class 0 is normal,
    every other class counts as an attack (positive)."""

    matrix: np.ndarray

    @classmethod
    def from_predictions(cls, predictions, truth, k: int = len(CLASS_NAMES)) -> "ConfusionCounts":
        m = np.zeros((k, k), dtype=np.int64)
        np.add.at(m, (np.asarray(predictions, dtype=np.int64), np.asarray(truth, dtype=np.int64)), 1)
        return cls(m)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def tp(self) -> int:
        return int(self.matrix[1:, 1:].sum())

    @property
    def fn(self) -> int:
        return int(self.matrix[0, 1:].sum())

    @property
    def fp(self) -> int:
        return int(self.matrix[1:, 0].sum())

    @property
    def tn(self) -> int:
        return int(self.matrix[0, 0])

    def truth_counts(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


class DetectionMetrics(NamedTuple):
    dr: float
    fa: float
    per_class_dr: dict


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def detection_metrics(conf: ConfusionCounts) -> DetectionMetrics:
    """DR = TP/(TP+FN), FA = FP/(FP+TN); per attack class, the share flagged as any attack.

    Undefined rates (empty denominator) are NaN.
    """
    names = CLASS_NAMES if conf.k == len(CLASS_NAMES) else tuple(f"class{c}" for c in range(conf.k))
    per_class = {names[c]: _ratio(int(conf.matrix[1:, c].sum()), int(conf.matrix[:, c].sum())) for c in range(1, conf.k)}
    return DetectionMetrics(_ratio(conf.tp, conf.tp + conf.fn), _ratio(conf.fp, conf.fp + conf.tn), per_class)


@dataclass(frozen=True)
class BootstrapConfig:
    resamples: int = 1000
    confidence: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.resamples < 1:
            raise ConfigError("bootstrap needs at least one resample")
        if not 0 < self.confidence < 1:
            raise ConfigError("confidence must lie strictly between 0 and 1")


class Interval(NamedTuple):
    low: float
    mu: float
    high: float


# Above this many distinct cost values, resample indices directly.
_MULTINOMIAL_MAX_VALUES = 256


def bootstrap_means(costs, cfg: BootstrapConfig) -> np.ndarray:
    """Means of ``cfg.resamples`` with-replacement resamples of size ``len(costs)``.

    Resample ``b`` draws from its own stream keyed by (seed, b). Costs take few
    distinct values, so a resample is drawn as multinomial counts over those
    values, which has the same distribution as drawing record indices.
    """
    costs = np.asarray(costs, dtype=np.float64)
    n = costs.size
    if n == 0:
        raise DataError("cannot bootstrap an empty cost list")
    values, counts = np.unique(costs, return_counts=True)
    means = np.empty(cfg.resamples)
    if len(values) <= _MULTINOMIAL_MAX_VALUES:
        pvals = counts / n
        for b in range(cfg.resamples):
            draw = stream(cfg.seed, "bootstrap", b).multinomial(n, pvals)
            means[b] = draw @ values / n
    else:
        for b in range(cfg.resamples):
            means[b] = costs[stream(cfg.seed, "bootstrap", b).integers(0, n, size=n)].mean()
    return means


def bootstrap_ci(costs, cfg: BootstrapConfig = BootstrapConfig()) -> Interval:
    """Percentile interval (linear-interpolated quantiles) around the sample mean."""
    means = bootstrap_means(costs, cfg)
    tail = (1.0 - cfg.confidence) / 2.0
    low, high = np.quantile(means, [tail, 1.0 - tail])
    return Interval(float(low), empirical_cost(costs), float(high))


@dataclass(frozen=True)
class EvaluationReport:
    mu: float
    ci_low: float
    ci_high: float
    confidence: float
    confusion: ConfusionCounts
    dr: float
    fa: float
    per_class_dr: dict
    mode: str
    alpha: Optional[float] = None
    dataset: str = ""
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        pc = self.per_class_dr
        return {
            "alpha": self.alpha,
            "mode": self.mode,
            "mu": self.mu,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "dr": self.dr,
            "fa": self.fa,
            "dr_probe": pc.get("Probe", math.nan),
            "dr_dos": pc.get("DoS", math.nan),
            "dr_u2r": pc.get("U2R", math.nan),
            "dr_r2l": pc.get("R2L", math.nan),
        }

    def to_dict(self) -> dict:
        c = self.confusion
        return _jsonable({
            "dataset": self.dataset,
            "mode": self.mode,
            "alpha": self.alpha,
            "expected_cost": self.mu,
            "ci": {"low": self.ci_low, "high": self.ci_high, "confidence": self.confidence},
            "confusion": {"matrix": c.matrix.tolist(), "tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn},
            "dr": self.dr,
            "fa": self.fa,
            "per_class_dr": self.per_class_dr,
            **self.extra,
        })


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def build_report(posteriors, y, cm: CostMatrix, mode: str, cfg: BootstrapConfig,
                 alpha=None, dataset: str = "") -> EvaluationReport:
    """Full report for one decision mode from precomputed posteriors."""
    y = np.asarray(y, dtype=np.int64)
    pred = predict(posteriors, cm, mode)
    costs = cm.values[pred, y]
    ci = bootstrap_ci(costs, cfg)
    conf = ConfusionCounts.from_predictions(pred, y, cm.k)
    m = detection_metrics(conf)
    return EvaluationReport(ci.mu, ci.low, ci.high, cfg.confidence, conf, m.dr, m.fa, m.per_class_dr, mode,
                            alpha, dataset)


def evaluation_reports(model, ds: LabeledDataset, cm: CostMatrix, cfg: BootstrapConfig,
                       modes: Sequence[str] = MODES) -> list[EvaluationReport]:
    """Reports for each decision mode, sharing one posterior computation."""
    dim = getattr(model, "dim", None)
    if dim is not None and dim != ds.dim:
        raise ConfigError(f"model dimension {dim} does not match dataset dimension {ds.dim}")
    P = posteriors_of(model, ds.X)
    return [build_report(P, ds.y, cm, mode, cfg, dataset=ds.tag) for mode in modes]


def alpha_sweep(model, ds: LabeledDataset, alphas, cfg: BootstrapConfig,
                transpose: bool = False) -> list[EvaluationReport]:
    """Weighted-decision reports under the alpha matrix for each alpha, sorted by alpha.

    The model is fixed; posteriors are computed once.
    """
    alphas = sorted(float(a) for a in alphas)
    if not alphas:
        raise ConfigError("alpha sweep needs at least one alpha")
    dim = getattr(model, "dim", None)
    if dim is not None and dim != ds.dim:
        raise ConfigError(f"model dimension {dim} does not match dataset dimension {ds.dim}")
    P = posteriors_of(model, ds.X)
    return [build_report(P, ds.y, alpha_cost_matrix(a, transpose), WEIGHTED, cfg, alpha=a, dataset=ds.tag)
            for a in alphas]


def alpha_grid(start=1.0, stop=10.0, step=1.0) -> list[float]:
    """Inclusive arithmetic grid; endpoints snapped to avoid float drift."""
    if step <= 0 or stop < start:
        raise ConfigError("alpha grid needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_report_csv(path, reports: Sequence[EvaluationReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.row()
            writer.writerow([_csv_cell(row[c]) for c in REPORT_COLUMNS])


def write_report_json(path, reports: Sequence[EvaluationReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
        fh.write("\n")
