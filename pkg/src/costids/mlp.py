"""Feed-forward class-posterior model.

One optional tanh hidden layer feeding a softmax over class scores, trained
by maximum likelihood with per-record SGD. ``hidden_units=0`` is the linear
(multinomial logistic) model.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.special import log_softmax, softmax

from ._seeding import stream
from .errors import ConfigError, DataError, NumericError
from .kdd import N_CLASSES, LabeledDataset

MODEL_FORMAT = "costids-mlp"
MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpHyperParams:
    learning_rate: float = 0.01
    epochs: int = 100
    hidden_units: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.hidden_units < 0:
            raise ConfigError("epochs must be >= 1 and hidden_units >= 0")


@dataclass(frozen=True)
class MlpParams:
    """Weights with the bias in the last column.

    ``hidden`` is (n_h, d+1) or ``None`` for the linear model; ``output`` is
    (k, n_h+1), or (k, d+1) without a hidden layer.
    """

    output: np.ndarray
    hidden: Optional[np.ndarray] = None

    def __post_init__(self):
        out = np.array(self.output, dtype=np.float64)
        hid = None if self.hidden is None else np.array(self.hidden, dtype=np.float64)
        if out.ndim != 2 or (hid is not None and (hid.ndim != 2 or hid.shape[0] + 1 != out.shape[1])):
            raise ConfigError("inconsistent MLP weight shapes")
        if not np.all(np.isfinite(out)) or (hid is not None and not np.all(np.isfinite(hid))):
            raise NumericError("MLP weights contain non-finite values")
        object.__setattr__(self, "output", out)
        object.__setattr__(self, "hidden", hid)

    @property
    def dim(self) -> int:
        return (self.hidden if self.hidden is not None else self.output).shape[1] - 1

    @property
    def hidden_units(self) -> int:
        return 0 if self.hidden is None else self.hidden.shape[0]

    @property
    def k(self) -> int:
        return self.output.shape[0]

    def flat(self) -> np.ndarray:
        parts = [self.output.ravel()]
        if self.hidden is not None:
            parts.append(self.hidden.ravel())
        return np.concatenate(parts)

    def with_flat(self, theta) -> "MlpParams":
        n_out = self.output.size
        out = np.asarray(theta[:n_out]).reshape(self.output.shape)
        hid = None if self.hidden is None else np.asarray(theta[n_out:]).reshape(self.hidden.shape)
        return MlpParams(out, hid)


def _bias(A):
    return np.hstack([A, np.ones((A.shape[0], 1))])


def _check_input(params, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != params.dim:
        raise ConfigError(f"input dimension {X.shape[1]} does not match model dimension {params.dim}")
    return X


def _scores(params, X):
    Xb = _bias(X)
    if params.hidden is None:
        return Xb @ params.output.T, Xb, None
    Z = np.tanh(Xb @ params.hidden.T)
    return _bias(Z) @ params.output.T, Xb, Z


def forward(params: MlpParams, X) -> np.ndarray:
    """Class posteriors, shape (n, k); a 1-D input returns a 1-D posterior."""
    single = np.ndim(X) == 1
    S, _, _ = _scores(params, _check_input(params, X))
    P = softmax(S, axis=1)
    return P[0] if single else P


def loss_and_gradient(params: MlpParams, X, y) -> tuple[float, MlpParams]:
    """Mean negative log posterior of the true class and its gradient."""
    X = _check_input(params, X)
    y = np.asarray(y, dtype=np.int64)
    n = len(X)
    if n == 0 or len(y) != n:
        raise DataError("batch must be non-empty with one label per record")
    S, Xb, Z = _scores(params, X)
    logP = log_softmax(S, axis=1)
    loss = -float(logP[np.arange(n), y].mean())
    dS = np.exp(logP)
    dS[np.arange(n), y] -= 1.0
    dS /= n
    if params.hidden is None:
        return loss, MlpParams(dS.T @ Xb)
    g_out = dS.T @ _bias(Z)
    dA = (dS @ params.output[:, :-1]) * (1.0 - Z * Z)
    return loss, MlpParams(g_out, dA.T @ Xb)


def mean_loss(params: MlpParams, X, y) -> float:
    S, _, _ = _scores(params, _check_input(params, X))
    logP = log_softmax(S, axis=1)
    return -float(logP[np.arange(len(y)), np.asarray(y)].mean())


def init_params(d: int, hidden_units: int, k: int, rng: np.random.Generator) -> MlpParams:
    """Uniform in +-1/sqrt(fan_in) for every layer, biases included."""
    if hidden_units == 0:
        return MlpParams(rng.uniform(-1, 1, size=(k, d + 1)) / np.sqrt(max(d, 1)))
    hidden = rng.uniform(-1, 1, size=(hidden_units, d + 1)) / np.sqrt(max(d, 1))
    output = rng.uniform(-1, 1, size=(k, hidden_units + 1)) / np.sqrt(hidden_units)
    return MlpParams(output, hidden)


@numba.njit(cache=True)
def _sgd_epoch_linear(X, y, order, W, lr):
    k, d1 = W.shape
    s = np.empty(k)
    for t in range(order.shape[0]):
        r = order[t]
        for c in range(k):
            acc = W[c, d1 - 1]
            for j in range(d1 - 1):
                acc += W[c, j] * X[r, j]
            s[c] = acc
        top = s.max()
        tot = 0.0
        for c in range(k):
            s[c] = np.exp(s[c] - top)
            tot += s[c]
        for c in range(k):
            g = s[c] / tot - (1.0 if c == y[r] else 0.0)
            for j in range(d1 - 1):
                W[c, j] -= lr * g * X[r, j]
            W[c, d1 - 1] -= lr * g


@numba.njit(cache=True)
def _sgd_epoch_hidden(X, y, order, V, W, lr):
    h, d1 = V.shape
    k = W.shape[0]
    z = np.empty(h)
    s = np.empty(k)
    g = np.empty(k)
    da = np.empty(h)
    for t in range(order.shape[0]):
        r = order[t]
        for u in range(h):
            acc = V[u, d1 - 1]
            for j in range(d1 - 1):
                acc += V[u, j] * X[r, j]
            z[u] = np.tanh(acc)
        for c in range(k):
            acc = W[c, h]
            for u in range(h):
                acc += W[c, u] * z[u]
            s[c] = acc
        top = s.max()
        tot = 0.0
        for c in range(k):
            s[c] = np.exp(s[c] - top)
            tot += s[c]
        for c in range(k):
            g[c] = s[c] / tot - (1.0 if c == y[r] else 0.0)
        # Backpropagate through the pre-update output weights.
        for u in range(h):
            acc = 0.0
            for c in range(k):
                acc += W[c, u] * g[c]
            da[u] = acc * (1.0 - z[u] * z[u])
        for c in range(k):
            for u in range(h):
                W[c, u] -= lr * g[c] * z[u]
            W[c, h] -= lr * g[c]
        for u in range(h):
            for j in range(d1 - 1):
                V[u, j] -= lr * da[u] * X[r, j]
            V[u, d1 - 1] -= lr * da[u]


def sgd_epoch(params: MlpParams, X, y, order, lr) -> MlpParams:
    """One pass of per-record SGD over ``order``; returns new parameters."""
    X = np.ascontiguousarray(_check_input(params, X))
    y = np.ascontiguousarray(y, dtype=np.int64)
    order = np.ascontiguousarray(order, dtype=np.int64)
    W = params.output.copy()
    if params.hidden is None:
        _sgd_epoch_linear(X, y, order, W, float(lr))
        return _unchecked(W, None)
    V = params.hidden.copy()
    _sgd_epoch_hidden(X, y, order, V, W, float(lr))
    return _unchecked(W, V)


def _unchecked(W, V):
    # Skip the finiteness check; the training loop reports divergence itself.
    obj = object.__new__(MlpParams)
    object.__setattr__(obj, "output", W)
    object.__setattr__(obj, "hidden", V)
    return obj


@dataclass(frozen=True)
class MlpClassifier:
    params: MlpParams
    hyperparams: MlpHyperParams = field(default_factory=MlpHyperParams)
    loss_history: tuple = ()

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def k(self) -> int:
        return self.params.k

    def predict_proba(self, X) -> np.ndarray:
        return forward(self.params, np.atleast_2d(X))

    def posterior(self, x) -> np.ndarray:
        return self.predict_proba(x)[0]

    def to_dict(self) -> dict:
        p = self.params
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dim": p.dim,
            "hidden_units": p.hidden_units,
            "classes": p.k,
            "hyperparams": asdict(self.hyperparams),
            "output": p.output.tolist(),
            "hidden": None if p.hidden is None else p.hidden.tolist(),
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpClassifier":
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise DataError("not a supported MLP model document")
        params = MlpParams(np.asarray(doc["output"]), None if doc["hidden"] is None else np.asarray(doc["hidden"]))
        if params.hidden_units != doc["hidden_units"] or params.dim != doc["dim"]:
            raise DataError("MLP document shape metadata disagrees with its weights")
        return cls(params, MlpHyperParams(**doc["hyperparams"]), tuple(doc["loss_history"]))


def train_mlp(ds: LabeledDataset, hp: MlpHyperParams, k: int = N_CLASSES) -> MlpClassifier:
    """``hp.epochs`` passes of shuffled per-record SGD at a constant learning rate.

    ``loss_history[e]`` is the mean training loss after epoch ``e``.
    """
    if len(ds) == 0:
        raise DataError("cannot train on an empty dataset")
    params = init_params(ds.dim, hp.hidden_units, k, stream(hp.seed, "mlp-init"))
    shuffle = stream(hp.seed, "mlp-shuffle")
    history = []
    for epoch in range(1, hp.epochs + 1):
        params = sgd_epoch(params, ds.X, ds.y, shuffle.permutation(len(ds)), hp.learning_rate)
        with np.errstate(all="ignore"):
            finite = np.all(np.isfinite(params.output)) and (
                params.hidden is None or np.all(np.isfinite(params.hidden)))
            loss = mean_loss(params, ds.X, ds.y) if finite else np.nan
        if not np.isfinite(loss):
            raise NumericError(f"MLP training diverged at epoch {epoch} (learning rate {hp.learning_rate})")
        history.append(loss)
    return MlpClassifier(MlpParams(params.output, params.hidden), hp, tuple(history))
