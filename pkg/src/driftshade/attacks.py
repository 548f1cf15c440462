"""Targeted evasion attacks under a per-feature box budget.

Both optimizers run gradient descent on the composite attack loss for a
fixed number of iterations, clipping elementwise to [x - budget, x + budget]
after every step. i-FGSM starts at the clean point; PGD starts at a seeded
uniform point inside the box. All work happens in standardized feature
space against a fixed trained classifier.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import MlpClassifier
from .objectives import LossSpec, pooled_median_sigma, regularizer

__all__ = [
    "OPTIMIZERS",
    "AttackConfig",
    "AttackResult",
    "adv_loss",
    "attack_loss",
    "ifgsm",
    "pgd",
    "pgd_init",
    "run_attack",
    "attack_success_rate",
]

OPTIMIZERS = ("ifgsm", "pgd")


@dataclass(frozen=True)
class AttackConfig:
    """One attack run: optimizer, objective, step size, box budget, and
    iteration count. seed drives the PGD random start only; mmd_batch is
    the row-chunk size used when the objective is batch-level MMD."""

    optimizer: str = "ifgsm"
    loss: LossSpec = LossSpec()
    step_size: float = 0.01
    budget: float = 0.1
    iterations: int = 100
    seed: int = 0
    mmd_batch: int = 256

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not isinstance(self.loss, LossSpec):
            raise ValueError("loss must be a LossSpec")
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if not self.budget > 0:
            raise ValueError("budget must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.mmd_batch < 1:
            raise ValueError("mmd_batch must be >= 1")


@dataclass(frozen=True)
class AttackResult:
    x_adv: np.ndarray
    success: np.ndarray
    asr: float
    final_loss: float
    linf_mean: float
    l2_mean: float


def _check_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("expected a nonempty 2-D feature matrix")
    return X


def _chunks(n: int, spec: LossSpec, mmd_batch: int) -> list:
    """MMD objectives keep fixed-size row chunks together; the row-separable
    objectives process everything in one pass."""
    if spec.kind == "mmd" and spec.alpha != 0.0:
        return [slice(i, min(i + mmd_batch, n)) for i in range(0, n, mmd_batch)]
    return [slice(0, n)]


def adv_loss(model: MlpClassifier, x_adv, x, spec: LossSpec,
             rbf_sigma: float | None = None) -> float:
    """Composite loss on one batch: mean cross-entropy toward spec.y_target
    plus alpha times the regularizer."""
    z = _check_rows(x_adv)
    clean = _check_rows(x)
    probs = model.predict_proba_std(z)
    loss = float(-np.log(np.maximum(probs[:, spec.y_target], 1e-300)).mean())
    if spec.kind != "none" and spec.alpha != 0.0:
        loss += spec.alpha * regularizer(z, clean, spec, rbf_sigma)
    return loss


def attack_loss(model: MlpClassifier, x_adv, x, spec: LossSpec,
                mmd_batch: int = 256) -> float:
    """adv_loss evaluated with the attack's own row chunking, weighted by
    chunk size; equals adv_loss whenever one chunk covers the batch."""
    z = _check_rows(x_adv)
    clean = _check_rows(x)
    n = z.shape[0]
    total = 0.0
    for sl in _chunks(n, spec, mmd_batch):
        size = sl.stop - sl.start
        total += adv_loss(model, z[sl], clean[sl], spec) * size
    return total / n


def _iterate(model: MlpClassifier, X: np.ndarray, z: np.ndarray,
             cfg: AttackConfig) -> AttackResult:
    spec = cfg.loss
    lo, hi = X - cfg.budget, X + cfg.budget
    chunk_slices = _chunks(X.shape[0], spec, cfg.mmd_batch)
    needs_sigma = spec.kind == "mmd" and spec.kernel == "rbf" and spec.alpha != 0.0
    for _ in range(cfg.iterations):
        for sl in chunk_slices:
            z_c, x_c = z[sl], X[sl]
            # The median-heuristic bandwidth is recomputed every step and
            # held constant inside the gradient.
            sigma = pooled_median_sigma(x_c, z_c) if needs_sigma else None
            grad, _ = model.input_gradient(z_c, clean_reference=x_c,
                                           batch_clean=x_c, spec=spec,
                                           rbf_sigma=sigma)
            z[sl] = np.clip(z_c - cfg.step_size * np.sign(grad), lo[sl], hi[sl])
    final_loss = attack_loss(model, z, X, spec, cfg.mmd_batch)
    probs = model.predict_proba_std(z)
    success = probs.argmax(axis=1) == 0
    diff = z - X
    return AttackResult(
        x_adv=z,
        success=success,
        asr=float(success.mean()),
        final_loss=final_loss,
        linf_mean=float(np.abs(diff).max(axis=1).mean()),
        l2_mean=float(np.linalg.norm(diff, axis=1).mean()),
    )


def ifgsm(model: MlpClassifier, X, cfg: AttackConfig) -> AttackResult:
    """Iterative fast gradient sign method from the clean starting point;
    deterministic given (model, X, cfg)."""
    if cfg.optimizer != "ifgsm":
        raise ValueError(f"config selects optimizer {cfg.optimizer!r}, not ifgsm")
    X = _check_rows(X)
    return _iterate(model, X, X.copy(), cfg)


def pgd_init(X, budget: float, seed: int) -> np.ndarray:
    """Uniform random start inside the budget box, seeded."""
    X = _check_rows(X)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-budget, budget, size=X.shape)
    return np.clip(X + u, X - budget, X + budget)


def pgd(model: MlpClassifier, X, cfg: AttackConfig) -> AttackResult:
    """Projected gradient descent: seeded random start, then the same signed
    descent steps as i-FGSM."""
    if cfg.optimizer != "pgd":
        raise ValueError(f"config selects optimizer {cfg.optimizer!r}, not pgd")
    X = _check_rows(X)
    return _iterate(model, X, pgd_init(X, cfg.budget, cfg.seed), cfg)


def run_attack(model: MlpClassifier, X, cfg: AttackConfig) -> AttackResult:
    return ifgsm(model, X, cfg) if cfg.optimizer == "ifgsm" else pgd(model, X, cfg)


def attack_success_rate(model: MlpClassifier, x_adv) -> float:
    """Fraction of rows the classifier labels benign (class 0)."""
    z = _check_rows(x_adv)
    probs = model.predict_proba_std(z)
    return float((probs.argmax(axis=1) == 0).mean())
