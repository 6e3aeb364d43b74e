"""Per-class diagonal Gaussian mixtures and the Bayes-rule class posterior.

Each class gets its own mixture for P(x | y), trained by EM; empirical class
frequencies supply P(y). With one component per class this is the naive
Bayes classifier.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._seeding import stream
from .errors import ConfigError, DataError, NumericError
from .kdd import N_CLASSES, LabeledDataset

LOG_2PI = np.log(2.0 * np.pi)
MIN_VARIANCE = 1e-10
MODEL_FORMAT = "costids-gmm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class GmmHyperParams:
    """EM controls. ``tol`` is the relative log-likelihood improvement below which EM stops."""

    n_components: int = 20
    max_iter: int = 100
    tol: float = 1e-3
    var_floor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n_components < 1 or self.max_iter < 1:
            raise ConfigError("n_components and max_iter must be positive")
        if not (self.tol > 0 and self.var_floor > 0):
            raise ConfigError("tol and var_floor must be positive")


@dataclass(frozen=True)
class GaussianMixture:
    """Diagonal-covariance mixture; ``log_likelihoods`` is the per-iteration
    mean training log-likelihood recorded by :func:`fit_em`."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihoods: tuple = field(default=(), compare=False)
    converged: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in ("weights", "means", "variances"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.means.ndim != 2 or self.means.shape != self.variances.shape or len(self.weights) != len(self.means):
            raise ConfigError("inconsistent mixture parameter shapes")
        if np.any(self.variances <= 0):
            raise ConfigError("mixture variances must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_prob(self, X) -> np.ndarray:
        """log(weight_u) + log N(x; mean_u, var_u) for every row and component."""
        X = _as_matrix(X, self.dim)
        return _component_log_prob(X, self.weights, self.means, self.variances)

    def log_density(self, X):
        """log p(x) by log-sum-exp over components; scalar for a single vector."""
        single = np.ndim(X) == 1
        out = logsumexp(self.component_log_prob(X), axis=1)
        return float(out[0]) if single else out


def _as_matrix(X, d):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != d:
        raise ConfigError(f"input dimension {X.shape[1]} does not match model dimension {d}")
    return X


def _component_log_prob(X, weights, means, variances):
    precision = 1.0 / variances
    # Quadratic form expanded so that no (n, m, d) temporary is needed.
    quad = (X * X) @ precision.T - 2.0 * X @ (means * precision).T + np.sum(means * means * precision, axis=1)
    log_norm = -0.5 * (X.shape[1] * LOG_2PI + np.sum(np.log(variances), axis=1))
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    return log_w + log_norm - 0.5 * quad


def variance_floor(global_var, factor):
    return np.maximum(factor * np.asarray(global_var, dtype=np.float64), MIN_VARIANCE)


def fit_em(X, hp: GmmHyperParams, global_var=None, rng=None) -> GaussianMixture:
    """Fit a diagonal mixture to ``X`` by EM.

    Runs at most ``hp.max_iter`` M-steps, stopping early once the relative
    improvement of the mean log-likelihood drops below ``hp.tol``. Variances
    are clamped from below at ``hp.var_floor * global_var`` (``global_var``
    defaults to the per-dimension variance of ``X``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    if n == 0:
        raise DataError("cannot fit a mixture to empty data")
    if not np.all(np.isfinite(X)):
        raise DataError("mixture training data contains NaN or inf")
    if global_var is None:
        global_var = X.var(axis=0)
    floor = variance_floor(global_var, hp.var_floor)
    if rng is None:
        rng = stream(hp.seed, "gmm-init")
    m = min(hp.n_components, n)

    means = X[np.sort(rng.choice(n, size=m, replace=False))].copy()
    variances = np.tile(np.maximum(np.asarray(global_var, dtype=np.float64), floor), (m, 1))
    weights = np.full(m, 1.0 / m)
    X2 = X * X
    history = []
    converged = False
    for it in range(hp.max_iter + 1):
        logp = _component_log_prob(X, weights, means, variances)
        row_ll = logsumexp(logp, axis=1)
        ll = float(row_ll.mean())
        if not np.isfinite(ll):
            raise NumericError(f"EM log-likelihood became non-finite at iteration {it}")
        history.append(ll)
        if it > 0 and ll - history[-2] < hp.tol * abs(history[-2]):
            converged = True
            break
        if it == hp.max_iter:
            break
        resp = np.exp(logp - row_ll[:, None])
        nk = resp.sum(axis=0)
        alive = nk > 10 * np.finfo(np.float64).tiny
        weights = nk / n
        safe = np.where(alive, nk, 1.0)[:, None]
        new_means = (resp.T @ X) / safe
        new_vars = (resp.T @ X2) / safe - new_means * new_means
        means = np.where(alive[:, None], new_means, means)
        variances = np.where(alive[:, None], np.maximum(new_vars, floor), variances)
    return GaussianMixture(weights, means, variances, tuple(history), converged)


def fit_priors(y, k: int = N_CLASSES) -> np.ndarray:
    """Class frequencies count(y)/N, unsmoothed."""
    y = np.asarray(y.y if isinstance(y, LabeledDataset) else y, dtype=np.int64)
    if y.size == 0:
        raise DataError("cannot estimate priors from an empty dataset")
    return np.bincount(y, minlength=k)[:k] / y.size


@dataclass(frozen=True)
class GmmClassifier:
    """One mixture per class (``None`` for classes absent from training) plus priors."""

    models: tuple
    priors: np.ndarray
    hyperparams: GmmHyperParams = field(default_factory=GmmHyperParams)

    def __post_init__(self):
        priors = np.array(self.priors, dtype=np.float64)
        priors.setflags(write=False)
        object.__setattr__(self, "priors", priors)
        present = [m for m in self.models if m is not None]
        if not present:
            raise ConfigError("classifier has no class models")
        if len({m.dim for m in present}) != 1:
            raise ConfigError("class models disagree on dimension")
        if len(self.models) != len(priors):
            raise ConfigError("one prior per class model required")

    @property
    def dim(self) -> int:
        return next(m.dim for m in self.models if m is not None)

    @property
    def k(self) -> int:
        return len(self.models)

    def log_scores(self, X) -> np.ndarray:
        """log p(x|y) + log P(y); -inf for classes without a model or prior."""
        X = _as_matrix(X, self.dim)
        out = np.full((len(X), self.k), -np.inf)
        for y, model in enumerate(self.models):
            if model is not None and self.priors[y] > 0:
                out[:, y] = model.log_density(X) + np.log(self.priors[y])
        return out

    def predict_proba(self, X) -> np.ndarray:
        scores = self.log_scores(X)
        z = logsumexp(scores, axis=1, keepdims=True)
        if not np.all(np.isfinite(z)):
            raise NumericError("all class scores are -inf for some input")
        return np.exp(scores - z)

    def posterior(self, x) -> np.ndarray:
        return self.predict_proba(np.atleast_2d(x))[0]

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": self.k,
            "dim": self.dim,
            "priors": self.priors.tolist(),
            "hyperparams": asdict(self.hyperparams),
            "models": [
                None if m is None else {
                    "weights": m.weights.tolist(),
                    "means": m.means.tolist(),
                    "variances": m.variances.tolist(),
                    "log_likelihoods": list(m.log_likelihoods),
                    "converged": m.converged,
                }
                for m in self.models
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GmmClassifier":
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise DataError("not a supported GMM model document")
        models = tuple(
            None if m is None else GaussianMixture(
                m["weights"], m["means"], m["variances"], tuple(m["log_likelihoods"]), m["converged"],
            )
            for m in doc["models"]
        )
        return cls(models, np.asarray(doc["priors"]), GmmHyperParams(**doc["hyperparams"]))


def train_gmm_classifier(ds: LabeledDataset, hp: GmmHyperParams, k: int = N_CLASSES) -> GmmClassifier:
    """Fit one mixture per class on that class's records (components capped at its size)."""
    if len(ds) == 0:
        raise DataError("cannot train on an empty dataset")
    priors = fit_priors(ds.y, k)
    global_var = ds.X.var(axis=0)
    models = []
    for y in range(k):
        members = ds.X[ds.y == y]
        if len(members) == 0:
            warnings.warn(f"class {y} has no training records; it is excluded from the posterior", stacklevel=2)
            models.append(None)
            continue
        models.append(fit_em(members, hp, global_var=global_var, rng=stream(hp.seed, "gmm-init", y)))
    return GmmClassifier(tuple(models), priors, hp)
