"""Feed-forward binary classifier trained from scratch in NumPy.

Architecture: input -> [Linear -> BatchNorm -> ReLU -> Dropout] x 2 ->
Linear -> softmax over {benign=0, malware=1}. Training uses Adam on
cross-entropy plus an L2 penalty on the dense weight matrices only.

The module also exposes the exact analytic gradient of a composite attack
loss (targeted cross-entropy plus similarity regularizer) with respect to
the standardized input, using inference-mode semantics so the gradient
field is deterministic.
"""
from __future__ import annotations

import json
import zipfile

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .objectives import LossSpec, regularizer, regularizer_grad
from .scaling import FeatureScaler

__all__ = [
    "BN_MOMENTUM",
    "BN_EPS",
    "MODEL_FORMAT_VERSION",
    "ModelFormatError",
    "init_params",
    "n_parameters",
    "forward_inference",
    "forward_train",
    "MlpClassifier",
]

BN_MOMENTUM = 0.1
BN_EPS = 1e-5
MODEL_FORMAT_VERSION = 1

# Trainable tensors, in serialization order; running stats follow.
TRAINABLE_KEYS = ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3")
RUNNING_KEYS = ("run_mean1", "run_var1", "run_mean2", "run_var2")
WEIGHT_MATRIX_KEYS = ("w1", "w2", "w3")


class ModelFormatError(Exception):
    """Raised when a model file is corrupt or has an unsupported version."""


def _he_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _init_from_rng(d: int, h1: int, h2: int, rng: np.random.Generator) -> dict:
    params = {
        "w1": _he_uniform(rng, d, (d, h1)),
        "b1": np.zeros(h1),
        "gamma1": np.ones(h1),
        "beta1": np.zeros(h1),
        "run_mean1": np.zeros(h1),
        "run_var1": np.ones(h1),
        "w2": _he_uniform(rng, h1, (h1, h2)),
        "b2": np.zeros(h2),
        "gamma2": np.ones(h2),
        "beta2": np.zeros(h2),
        "run_mean2": np.zeros(h2),
        "run_var2": np.ones(h2),
        "w3": _he_uniform(rng, h2, (h2, 2)),
        "b3": np.zeros(2),
    }
    return params


def init_params(d: int, h1: int, h2: int, seed: int = 0) -> dict:
    """Fresh parameter set: symmetric fan-in-scaled uniform weights, zero
    biases, identity batch-norm with unit running variance."""
    if d < 1 or h1 < 1 or h2 < 1:
        raise ValueError("layer widths must be >= 1")
    return _init_from_rng(d, h1, h2, np.random.default_rng(seed))


def n_parameters(params: dict) -> int:
    return sum(int(v.size) for v in params.values())


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward_inference(params: dict, z: np.ndarray, return_cache: bool = False):
    """Forward pass using running batch-norm statistics, dropout disabled.

    Deterministic and row-independent: each output row depends only on its
    own input row.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != params["w1"].shape[0]:
        raise ValueError(
            f"expected shape (n, {params['w1'].shape[0]}), got {z.shape}"
        )
    cache = {"z": z}
    h = z
    for layer in (1, 2):
        a = h @ params[f"w{layer}"] + params[f"b{layer}"]
        inv_std = 1.0 / np.sqrt(params[f"run_var{layer}"] + BN_EPS)
        ah = (a - params[f"run_mean{layer}"]) * inv_std
        s = params[f"gamma{layer}"] * ah + params[f"beta{layer}"]
        h = np.maximum(s, 0.0)
        cache[f"inv_std{layer}"] = inv_std
        cache[f"s{layer}"] = s
        cache[f"r{layer}"] = h
    logits = h @ params["w3"] + params["b3"]
    probs = _softmax(logits)
    if return_cache:
        return probs, cache
    return probs


def forward_train(params: dict, z: np.ndarray, dropout_rate: float,
                  rng: np.random.Generator):
    """Forward pass with batch statistics and seeded inverted dropout.

    Updates the running batch-norm statistics in place (momentum
    BN_MOMENTUM, population variance). Returns (probs, cache) where cache
    holds every intermediate needed by backward_train.
    """
    z = np.asarray(z, dtype=np.float64)
    cache = {"z": z}
    keep = 1.0 - dropout_rate
    h = z
    for layer in (1, 2):
        a = h @ params[f"w{layer}"] + params[f"b{layer}"]
        mu = a.mean(axis=0)
        var = a.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        ah = (a - mu) * inv_std
        s = params[f"gamma{layer}"] * ah + params[f"beta{layer}"]
        r = np.maximum(s, 0.0)
        if dropout_rate > 0.0:
            mask = (rng.random(r.shape) < keep) / keep
        else:
            mask = np.ones_like(r)
        h = r * mask
        params[f"run_mean{layer}"] = (
            (1.0 - BN_MOMENTUM) * params[f"run_mean{layer}"] + BN_MOMENTUM * mu
        )
        params[f"run_var{layer}"] = (
            (1.0 - BN_MOMENTUM) * params[f"run_var{layer}"] + BN_MOMENTUM * var
        )
        cache[f"in{layer}"] = cache["z"] if layer == 1 else cache["out1"]
        cache[f"ah{layer}"] = ah
        cache[f"inv_std{layer}"] = inv_std
        cache[f"s{layer}"] = s
        cache[f"mask{layer}"] = mask
        cache[f"out{layer}"] = h
    logits = h @ params["w3"] + params["b3"]
    probs = _softmax(logits)
    return probs, cache


def backward_train(params: dict, cache: dict, probs: np.ndarray,
                   y: np.ndarray, weight_decay: float) -> dict:
    """Parameter gradients of mean cross-entropy + weight_decay * sum ||W||^2
    for a train-mode forward pass. The decay term touches only the dense
    weight matrices, never biases or batch-norm parameters.
    """
    n = probs.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    d_logits = (probs - onehot) / n

    grads = {}
    grads["w3"] = cache["out2"].T @ d_logits + 2.0 * weight_decay * params["w3"]
    grads["b3"] = d_logits.sum(axis=0)
    d_h = d_logits @ params["w3"].T
    for layer in (2, 1):
        d_r = d_h * cache[f"mask{layer}"]
        d_s = d_r * (cache[f"s{layer}"] > 0.0)
        ah = cache[f"ah{layer}"]
        grads[f"gamma{layer}"] = (d_s * ah).sum(axis=0)
        grads[f"beta{layer}"] = d_s.sum(axis=0)
        d_ah = d_s * params[f"gamma{layer}"]
        # Batch-norm backward with batch statistics (mean and variance both
        # depend on every row of the batch).
        d_a = (cache[f"inv_std{layer}"] / n) * (
            n * d_ah - d_ah.sum(axis=0) - ah * (d_ah * ah).sum(axis=0)
        )
        grads[f"w{layer}"] = (
            cache[f"in{layer}"].T @ d_a + 2.0 * weight_decay * params[f"w{layer}"]
        )
        grads[f"b{layer}"] = d_a.sum(axis=0)
        if layer == 2:
            d_h = d_a @ params["w2"].T
    return grads


def _ce_from_probs(probs: np.ndarray, y: np.ndarray) -> float:
    picked = probs[np.arange(probs.shape[0]), y]
    return float(-np.log(np.maximum(picked, 1e-300)).mean())


class _Adam:
    """Standard bias-corrected Adam over a dict of parameter arrays."""

    def __init__(self, keys, lr, beta1, beta2, eps):
        self.keys = keys
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: 0.0 for k in keys}
        self.v = {k: 0.0 for k in keys}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in self.keys:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (
                np.sqrt(self.v[k] / c2) + self.eps
            )


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """Binary MLP with an embedded standardizer.

    fit/predict/predict_proba operate on raw feature space; the scaler is
    fitted on the training features and applied internally. Attack code
    works in standardized space through predict_proba_std and
    input_gradient. Early stopping keeps the parameters with the best
    validation accuracy.
    """

    def __init__(self, hidden1: int = 256, hidden2: int = 128,
                 dropout_rate: float = 0.2, weight_decay: float = 1e-4,
                 learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, adam_eps: float = 1e-8,
                 batch_size: int = 64, max_epochs: int = 100,
                 patience: int = 10, random_state: int = 0):
        self.hidden1 = hidden1
        self.hidden2 = hidden2
        self.dropout_rate = dropout_rate
        self.weight_decay = weight_decay
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    def _validate_hyperparams(self):
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise ValueError("hidden widths must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.weight_decay < 0 or self.learning_rate < 0:
            raise ValueError("weight_decay and learning_rate must be >= 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("batch_size, max_epochs >= 1 and patience >= 0")

    def fit(self, X, y, validation=None):
        """Train on raw features; validation is an optional (X_val, y_val)
        pair for early stopping (the training set is reused when absent)."""
        self._validate_hyperparams()
        X, y = check_X_y(X, y, dtype=np.float64)
        y = self._check_labels(y)
        if validation is None:
            X_val, y_val = X, y
        else:
            X_val, y_val = check_X_y(validation[0], validation[1], dtype=np.float64)
            y_val = self._check_labels(y_val)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]

        self.scaler_ = FeatureScaler().fit(X)
        z_train = self.scaler_.transform(X)
        z_val = self.scaler_.transform(X_val)

        rng = np.random.default_rng(self.random_state)
        params = _init_from_rng(X.shape[1], self.hidden1, self.hidden2, rng)
        adam = _Adam(TRAINABLE_KEYS, self.learning_rate, self.beta1,
                     self.beta2, self.adam_eps)

        history = {"train_loss": [], "train_acc": [], "val_loss": [], "val_acc": []}
        best_acc = -1.0
        best_params = {k: v.copy() for k, v in params.items()}
        best_epoch = 0
        stale = 0
        n = z_train.shape[0]
        for epoch in range(1, self.max_epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                probs, cache = forward_train(params, z_train[idx],
                                             self.dropout_rate, rng)
                grads = backward_train(params, cache, probs, y[idx],
                                       self.weight_decay)
                adam.step(params, grads)

            tr_probs = forward_inference(params, z_train)
            va_probs = forward_inference(params, z_val)
            tr_acc = float((tr_probs.argmax(axis=1) == y).mean())
            va_acc = float((va_probs.argmax(axis=1) == y_val).mean())
            history["train_loss"].append(_ce_from_probs(tr_probs, y))
            history["train_acc"].append(tr_acc)
            history["val_loss"].append(_ce_from_probs(va_probs, y_val))
            history["val_acc"].append(va_acc)

            if va_acc > best_acc:
                best_acc = va_acc
                best_params = {k: v.copy() for k, v in params.items()}
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if stale > self.patience:
                    break

        self.params_ = best_params
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.n_epochs_ = len(history["train_loss"])
        return self

    def _check_labels(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.size == 0:
            raise ValueError("empty dataset")
        out = y.astype(np.int64)
        if not np.array_equal(out, y) or not np.isin(out, (0, 1)).all():
            raise ValueError("labels must be 0 (benign) or 1 (malware)")
        return out

    # raw feature space API

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return forward_inference(self.params_, self.scaler_.transform(X))

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def evaluate(self, X, y) -> dict:
        """Accuracy, per-class precision/recall, and mean malware-class
        probability on raw features."""
        probs = self.predict_proba(X)
        y = self._check_labels(y)
        pred = probs.argmax(axis=1)
        out = {"accuracy": float((pred == y).mean()),
               "mean_malware_prob": float(probs[:, 1].mean()),
               "precision": {}, "recall": {}}
        for cls in (0, 1):
            predicted = pred == cls
            actual = y == cls
            hits = float((predicted & actual).sum())
            out["precision"][cls] = hits / predicted.sum() if predicted.any() else 0.0
            out["recall"][cls] = hits / actual.sum() if actual.any() else 0.0
        return out

    # standardized space API used by attack code

    def predict_proba_std(self, z) -> np.ndarray:
        check_is_fitted(self, "params_")
        return forward_inference(self.params_, np.asarray(z, dtype=np.float64))

    def input_gradient(self, z, clean_reference=None, batch_clean=None,
                       spec: LossSpec = LossSpec(), rbf_sigma=None):
        """Analytic gradient of the composite attack loss with respect to
        standardized input z, plus the scalar loss.

        The loss is mean cross-entropy toward spec.y_target plus spec.alpha
        times the regularizer. clean_reference supplies the row-aligned
        clean matrix for the KL/L2 penalties; batch_clean supplies the clean
        batch for MMD. Inference-mode semantics throughout: running
        batch-norm statistics, no dropout, so the gradient of each row is
        independent of the rest of the batch.
        """
        check_is_fitted(self, "params_")
        z = np.asarray(z, dtype=np.float64)
        params = self.params_
        probs, cache = forward_inference(params, z, return_cache=True)
        n = z.shape[0]

        onehot = np.zeros_like(probs)
        onehot[:, spec.y_target] = 1.0
        d_logits = (probs - onehot) / n
        d_h = d_logits @ params["w3"].T
        for layer in (2, 1):
            d_s = d_h * (cache[f"s{layer}"] > 0.0)
            d_a = d_s * params[f"gamma{layer}"] * cache[f"inv_std{layer}"]
            d_h = d_a @ params[f"w{layer}"].T
        grad = d_h
        loss = float(-np.log(np.maximum(probs[:, spec.y_target], 1e-300)).mean())

        if spec.kind != "none" and spec.alpha != 0.0:
            if spec.kind == "mmd":
                if batch_clean is None:
                    raise ValueError("mmd regularizer requires batch_clean")
                clean = np.asarray(batch_clean, dtype=np.float64)
            else:
                if clean_reference is None:
                    raise ValueError(f"{spec.kind} regularizer requires clean_reference")
                clean = np.asarray(clean_reference, dtype=np.float64)
            loss += spec.alpha * regularizer(z, clean, spec, rbf_sigma)
            grad = grad + spec.alpha * regularizer_grad(z, clean, spec, rbf_sigma)
        return grad, loss

    # persistence

    def save(self, path) -> None:
        """Write a versioned snapshot: metadata, parameter tensors, running
        statistics, and the embedded scaler, all as 64-bit arrays."""
        check_is_fitted(self, "params_")
        meta = {
            "format_version": MODEL_FORMAT_VERSION,
            "architecture": {"d": int(self.n_features_in_),
                             "h1": int(self.hidden1), "h2": int(self.hidden2)},
            "hyperparams": {
                "dropout_rate": self.dropout_rate,
                "weight_decay": self.weight_decay,
                "learning_rate": self.learning_rate,
                "beta1": self.beta1, "beta2": self.beta2,
                "adam_eps": self.adam_eps, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "random_state": self.random_state,
            },
        }
        arrays = {k: np.asarray(v, dtype=np.float64) for k, v in self.params_.items()}
        arrays["scaler_mean"] = np.asarray(self.scaler_.mean_, dtype=np.float64)
        arrays["scaler_scale"] = np.asarray(self.scaler_.scale_, dtype=np.float64)
        np.savez(path, meta=np.asarray(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path) -> "MlpClassifier":
        try:
            with np.load(path, allow_pickle=False) as archive:
                files = dict(archive.items())
        except (OSError, ValueError, zipfile.BadZipFile, EOFError) as exc:
            raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
        if "meta" not in files:
            raise ModelFormatError(f"model file {path} has no metadata entry")
        try:
            meta = json.loads(str(files["meta"]))
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file {path} has corrupt metadata") from exc
        version = meta.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"model file {path} has format version {version}; "
                f"this build reads version {MODEL_FORMAT_VERSION}"
            )
        arch = meta["architecture"]
        model = cls(hidden1=arch["h1"], hidden2=arch["h2"], **meta["hyperparams"])
        params = {}
        for key in TRAINABLE_KEYS + RUNNING_KEYS:
            if key not in files:
                raise ModelFormatError(f"model file {path} is missing tensor {key!r}")
            params[key] = np.asarray(files[key], dtype=np.float64)
        expected = {
            "w1": (arch["d"], arch["h1"]), "w2": (arch["h1"], arch["h2"]),
            "w3": (arch["h2"], 2),
        }
        for key, shape in expected.items():
            if params[key].shape != shape:
                raise ModelFormatError(
                    f"model file {path}: tensor {key!r} has shape "
                    f"{params[key].shape}, expected {shape}"
                )
        if "scaler_mean" not in files or "scaler_scale" not in files:
            raise ModelFormatError(f"model file {path} is missing scaler tensors")
        scaler = FeatureScaler()
        scaler.mean_ = np.asarray(files["scaler_mean"], dtype=np.float64)
        scaler.scale_ = np.asarray(files["scaler_scale"], dtype=np.float64)
        scaler.n_features_in_ = int(scaler.mean_.shape[0])
        model.params_ = params
        model.scaler_ = scaler
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = arch["d"]
        model.history_ = {}
        return model
