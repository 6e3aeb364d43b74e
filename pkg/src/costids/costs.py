"""Cost matrices and the minimum-expected-cost decision rule.

Convention throughout: ``C[i, j]`` is the cost of predicting class ``i`` when
the true class is ``j`` (prediction indexes rows, truth indexes columns).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError
from .kdd import N_CLASSES, ClassLabel

FILE_HEADER = "# cost matrix: rows=prediction, columns=truth"


@dataclass(frozen=True, eq=False)
class CostMatrix:
    values: np.ndarray
    standard: bool = True

    def __eq__(self, other):
        if not isinstance(other, CostMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ConfigError(f"cost matrix must be square, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("cost matrix has non-finite entries")
        if self.standard:
            if np.any(np.diag(arr) != 0):
                raise ConfigError("cost matrix diagonal must be zero (pass standard=False to relax)")
            if np.any(arr < 0):
                raise ConfigError("cost matrix entries must be non-negative (pass standard=False to relax)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, key):
        return self.values[key]

    def scaled(self, c: float) -> "CostMatrix":
        return CostMatrix(self.values * c, self.standard)

    def transposed(self) -> "CostMatrix":
        return CostMatrix(self.values.T, self.standard)


class Decision(NamedTuple):
    chosen: int
    losses: np.ndarray


def _check_posterior(p, k):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != k:
        raise ConfigError(f"posterior has {p.shape[-1]} classes, cost matrix has {k}")
    return p


def expected_loss(post, cm: CostMatrix, i: int) -> float:
    """Posterior-weighted cost of deciding class ``i``: sum_j p[j] * C[i, j]."""
    p = _check_posterior(post, cm.k)
    if not 0 <= i < cm.k:
        raise ConfigError(f"class index {i} out of range for k={cm.k}")
    return float(np.dot(cm.values[i], p))


def expected_losses(posteriors, cm: CostMatrix) -> np.ndarray:
    """Loss of every decision for a batch of posteriors, shape (n, k)."""
    P = _check_posterior(posteriors, cm.k)
    return P @ cm.values.T


def decide(post, cm: CostMatrix) -> Decision:
    """Pick the class of least expected cost; ties go to the lowest index."""
    losses = expected_losses(post, cm)
    return Decision(int(np.argmin(losses)), losses)


def decide_batch(posteriors, cm: CostMatrix) -> np.ndarray:
    return np.argmin(expected_losses(np.atleast_2d(posteriors), cm), axis=1)


def zero_one_matrix(k: int = N_CLASSES) -> CostMatrix:
    return CostMatrix(1.0 - np.eye(k))


# KDD'99 contest costs as published: row = actual class, column = predicted,
# both in Normal, Probe, DoS, U2R, R2L order.
_KDD_ACTUAL_BY_PREDICTED = np.array([
    [0, 1, 2, 2, 2],
    [1, 0, 2, 2, 2],
    [2, 1, 0, 2, 2],
    [3, 2, 2, 0, 2],
    [4, 2, 2, 2, 0],
], dtype=np.float64)


def kdd_cost_matrix() -> CostMatrix:
    """The KDD'99 contest matrix in (prediction, truth) orientation."""
    return CostMatrix(_KDD_ACTUAL_BY_PREDICTED.T)


def alpha_cost_matrix(alpha: float, transpose: bool = False) -> CostMatrix:
    """Missed attacks (attack predicted Normal) cost ``alpha``; false alarms cost 1.

    Confusions among attack classes are free. ``transpose=True`` gives the
    opposite reading, where false alarms cost ``alpha`` and misses cost 1.
    """
    if not np.isfinite(alpha) or alpha < 0:
        raise ConfigError(f"alpha must be a finite non-negative number, got {alpha}")
    C = np.zeros((N_CLASSES, N_CLASSES))
    normal = int(ClassLabel.NORMAL)
    C[normal, 1:] = alpha
    C[1:, normal] = 1.0
    return CostMatrix(C.T if transpose else C)


def tradeoff_cost_matrix(k: float, p_normal: float, p_attack: float) -> CostMatrix:
    """Two-class matrix (0 = normal, 1 = attack) whose empirical cost is FA - k*DR + k.

    False alarms cost ``1/p_normal`` and misses ``k/p_attack``; the identity
    holds exactly when the priors are the evaluation set's class frequencies.
    """
    if not k > 0:
        raise ConfigError(f"trade-off k must be positive, got {k}")
    if not (p_normal > 0 and p_attack > 0):
        raise ConfigError("class priors must both be positive")
    if abs(p_normal + p_attack - 1.0) > 1e-9:
        raise ConfigError(f"priors must sum to 1, got {p_normal + p_attack}")
    return CostMatrix(np.array([[0.0, k / p_attack], [1.0 / p_normal, 0.0]]))


def save_cost_matrix(path, cm: CostMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FILE_HEADER + "\n")
        for row in cm.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_cost_matrix(path, allow_nonstandard: bool = False, k: int = N_CLASSES) -> CostMatrix:
    """Read a k-line CSV cost matrix preceded by a one-line convention header."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise DataError(f"{path}: missing header line naming the row/column convention")
    if "rows=prediction" not in lines[0].replace(" ", ""):
        raise DataError(f"{path}: header must declare rows=prediction, columns=truth")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise DataError(f"{path}: row {lineno}: non-numeric entry") from None
    if len(rows) != k or any(len(r) != k for r in rows):
        raise DataError(f"{path}: expected {k}x{k} entries")
    try:
        return CostMatrix(np.array(rows), standard=not allow_nonstandard)
    except ConfigError as exc:
        raise DataError(f"{path}: {exc}") from None
