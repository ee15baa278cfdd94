"""Per-row softmax classifier: affine + ReLU hidden layers, softmax output."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import DimensionError, TrainingError


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


class SoftmaxMLP(ClassifierMixin, BaseEstimator):
    """Multi-layer perceptron trained by plain mini-batch gradient descent.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Widths of the ReLU layers; ``()`` gives a linear softmax model.
    n_classes : int
        Output width.  Fixed up front because a batch may miss some labels.
    learning_rate, batch_size, epochs : optimizer settings.
    random_state : int
        Seeds both the Glorot initialization and the epoch shuffles.
    """

    def __init__(
        self,
        hidden_layer_sizes: Sequence[int] = (300,),
        n_classes: int = 2,
        learning_rate: float = 1e-3,
        batch_size: int = 32,
        epochs: int = 200,
        random_state: int = 0,
        shuffle: bool = True,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.shuffle = shuffle

    # parameters ---------------------------------------------------------

    @property
    def layer_sizes(self) -> list[int]:
        check_is_fitted(self, "coefs_")
        return [self.coefs_[0].shape[0]] + [w.shape[1] for w in self.coefs_]

    def initialize(self, n_features: int, rng: Optional[np.random.Generator] = None) -> "SoftmaxMLP":
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        rng = rng if rng is not None else np.random.default_rng(self.random_state)
        sizes = [int(n_features), *map(int, self.hidden_layer_sizes), int(self.n_classes)]
        self.coefs_ = [glorot_uniform(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.intercepts_ = [np.zeros(b) for b in sizes[1:]]
        self.n_features_in_ = int(n_features)
        self.classes_ = np.arange(self.n_classes)
        self.loss_curve_ = []
        return self

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for pair in zip(self.coefs_, self.intercepts_) for p in pair])

    def set_flat(self, theta: np.ndarray) -> None:
        need = sum(w.size + b.size for w, b in zip(self.coefs_, self.intercepts_))
        if theta.size != need:
            raise DimensionError(f"parameter vector has {theta.size} entries, model needs {need}")
        pos = 0
        for w, b in zip(self.coefs_, self.intercepts_):
            for p in (w, b):
                p[...] = theta[pos : pos + p.size].reshape(p.shape)
                pos += p.size

    @staticmethod
    def flatten_grads(grads) -> np.ndarray:
        return np.concatenate([g.ravel() for pair in grads for g in pair])

    # forward / backward -------------------------------------------------

    def _check_width(self, X) -> np.ndarray:
        check_is_fitted(self, "coefs_")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected rows of width {self.n_features_in_}, got shape {X.shape}")
        return X

    def _forward(self, X):
        acts = [X]
        h = X
        last = len(self.coefs_) - 1
        for i, (w, b) in enumerate(zip(self.coefs_, self.intercepts_)):
            z = h @ w + b
            h = z if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def logits(self, X) -> np.ndarray:
        return self._forward(self._check_width(X))[-1]

    def predict_proba(self, X, temperature: float = 1.0) -> np.ndarray:
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        return softmax(self.logits(X) / temperature)

    def predict(self, X) -> np.ndarray:
        # np.argmax keeps the first maximum: ties go to the lowest label
        return np.argmax(self.logits(X), axis=1)

    def loss_and_gradients(self, X, y, sample_weight=None):
        """Cross-entropy and its exact gradients.

        Without ``sample_weight`` the loss is the mean over rows; with it the
        loss is ``sum_i w_i * CE_i``.  Gradients are returned as a list of
        ``(dW, db)`` pairs aligned with ``coefs_`` / ``intercepts_``.
        """
        X = self._check_width(X)
        y = np.asarray(y, dtype=int)
        n = X.shape[0]
        if y.shape != (n,):
            raise DimensionError("labels must be one per row")
        if n and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError("labels outside 0..n_classes-1")
        w = np.full(n, 1.0 / max(n, 1)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        acts = self._forward(X)
        logp = log_softmax(acts[-1])
        rows = np.arange(n)
        loss = float(-(w * logp[rows, y]).sum())
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        delta *= w[:, None]
        grads = []
        for i in range(len(self.coefs_) - 1, -1, -1):
            grads.append((acts[i].T @ delta, delta.sum(axis=0)))
            if i:
                delta = (delta @ self.coefs_[i].T) * (acts[i] > 0)
        grads.reverse()
        return loss, grads

    def apply_update(self, grads, step: float) -> None:
        """``theta <- theta - step * grad`` (negative ``step`` ascends)."""
        for (w, b), (gw, gb) in zip(zip(self.coefs_, self.intercepts_), grads):
            w -= step * gw
            b -= step * gb

    # training ------------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        y = y.astype(int)
        rng = np.random.default_rng(self.random_state)
        self.initialize(X.shape[1], rng)
        return self._train(X, y, rng)

    def partial_fit(self, X, y, epochs: int = 1):
        """Continue training from the current weights."""
        X, y = check_X_y(X, y, dtype=np.float64)
        rng = np.random.default_rng(self.random_state + len(getattr(self, "loss_curve_", [])))
        if not hasattr(self, "coefs_"):
            self.initialize(X.shape[1], rng)
        saved = self.epochs
        self.epochs = epochs
        try:
            return self._train(X, y.astype(int), rng)
        finally:
            self.epochs = saved

    def _train(self, X, y, rng):
        n = X.shape[0]
        bs = max(1, int(self.batch_size))
        for _ in range(int(self.epochs)):
            order = rng.permutation(n) if self.shuffle else np.arange(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start : start + bs]
                loss, grads = self.loss_and_gradients(X[idx], y[idx])
                self.apply_update(grads, self.learning_rate)
                total += loss * idx.size
            epoch_loss = total / max(n, 1)
            if not math.isfinite(epoch_loss):
                raise TrainingError(f"training loss diverged to {epoch_loss} after {len(self.loss_curve_)} epochs")
            self.loss_curve_.append(epoch_loss)
        if n:
            self.train_accuracy_ = float(np.mean(self.predict(X) == y))
        return self

    def score(self, X, y, sample_weight=None):
        X = check_array(X, dtype=np.float64)
        return float(np.mean(self.predict(X) == np.asarray(y)))

    # serialization --------------------------------------------------------

    def layers_to_list(self) -> list[dict]:
        return [{"w": w.tolist(), "b": b.tolist()} for w, b in zip(self.coefs_, self.intercepts_)]

    @classmethod
    def from_layers(cls, layers: list[dict], **params) -> "SoftmaxMLP":
        coefs = [np.asarray(layer["w"], dtype=float) for layer in layers]
        intercepts = [np.asarray(layer["b"], dtype=float) for layer in layers]
        for a, b in zip(coefs[:-1], coefs[1:]):
            if a.shape[1] != b.shape[0]:
                raise DimensionError("adjacent layer sizes disagree")
        for w, b in zip(coefs, intercepts):
            if b.shape != (w.shape[1],):
                raise DimensionError("bias length does not match layer width")
        params.setdefault("hidden_layer_sizes", tuple(w.shape[1] for w in coefs[:-1]))
        params.setdefault("n_classes", coefs[-1].shape[1])
        model = cls(**params)
        model.coefs_ = coefs
        model.intercepts_ = intercepts
        model.n_features_in_ = coefs[0].shape[0]
        model.classes_ = np.arange(model.n_classes)
        model.loss_curve_ = []
        return model


def mlp_forward(model: SoftmaxMLP, features) -> np.ndarray:
    """Per-row label distributions."""
    return model.predict_proba(features)


def mlp_backward(model: SoftmaxMLP, features, labels):
    """Mean cross-entropy gradients as ``[(dW, db), ...]``."""
    return model.loss_and_gradients(features, labels)[1]
