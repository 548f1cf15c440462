"""Attack objective: targeted loss spec plus similarity regularizers.

Regularizers keep adversarial feature batches close to the clean ones.
Each has a closed-form value and an analytic gradient with respect to the
adversarial matrix; gradients are validated against central finite
differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

__all__ = [
    "EPS_NORM_DEFAULT",
    "KL_Q_FLOOR",
    "RBF_SIGMA_FLOOR",
    "REG_KINDS",
    "KERNELS",
    "LossSpec",
    "reg_kl",
    "reg_kl_grad",
    "reg_l2",
    "reg_l2_grad",
    "pooled_median_sigma",
    "kernel_matrix",
    "reg_mmd",
    "reg_mmd_grad",
    "regularizer",
    "regularizer_grad",
]

EPS_NORM_DEFAULT = 1e-8
# Floor applied to q inside log; keeps KL finite when mass vanishes.
KL_Q_FLOOR = 1e-12
RBF_SIGMA_FLOOR = 1e-6

REG_KINDS = ("none", "kl", "l2", "mmd")
KERNELS = ("linear", "rbf", "poly")


@dataclass(frozen=True)
class LossSpec:
    """Targeted attack loss: cross-entropy toward y_target plus alpha times
    a similarity regularizer.

    kernel must be given exactly when kind == "mmd"; eps_norm applies to the
    KL regularizer's per-row normalization only.
    """

    y_target: int = 0
    kind: str = "none"
    alpha: float = 0.0
    kernel: str | None = None
    eps_norm: float = EPS_NORM_DEFAULT

    def __post_init__(self):
        if self.y_target not in (0, 1):
            raise ValueError(f"y_target must be 0 or 1, got {self.y_target}")
        if self.kind not in REG_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.kind == "mmd":
            if self.kernel not in KERNELS:
                raise ValueError(
                    f"mmd regularizer needs kernel in {KERNELS}, got {self.kernel!r}"
                )
        elif self.kernel is not None:
            raise ValueError("kernel is only valid for the mmd regularizer")
        if not self.eps_norm > 0:
            raise ValueError("eps_norm must be > 0")


def _as_rows(a) -> np.ndarray:
    out = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if out.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D input, got ndim {out.ndim}")
    return out


def _pair(x_adv, x) -> tuple[np.ndarray, np.ndarray]:
    Z, X = _as_rows(x_adv), _as_rows(x)
    if Z.shape != X.shape:
        raise ValueError(f"shape mismatch: {Z.shape} vs {X.shape}")
    return Z, X


def _kl_profiles(M: np.ndarray, eps_norm: float) -> tuple[np.ndarray, np.ndarray]:
    """Clamp rows at 0 and normalize to near-probability vectors.

    Returns (profile, clamped row sums + eps_norm)."""
    c = np.maximum(M, 0.0)
    s = c.sum(axis=1, keepdims=True) + eps_norm
    return c / s, s


def reg_kl(x_adv, x, eps_norm: float = EPS_NORM_DEFAULT) -> float:
    """Mean per-row KL(p || q) between clean and adversarial feature profiles.

    Rows are clamped at zero and normalized by (sum + eps_norm). Terms with
    p == 0 contribute nothing; q is floored inside the log so the value stays
    finite when adversarial mass vanishes from a feature.
    """
    Z, X = _pair(x_adv, x)
    p, _ = _kl_profiles(X, eps_norm)
    q, _ = _kl_profiles(Z, eps_norm)
    qf = np.maximum(q, KL_Q_FLOOR)
    safe_p = np.where(p > 0, p, 1.0)
    terms = np.where(p > 0, p * (np.log(safe_p) - np.log(qf)), 0.0)
    return float(terms.sum(axis=1).mean())


def reg_kl_grad(x_adv, x, eps_norm: float = EPS_NORM_DEFAULT) -> np.ndarray:
    """Gradient of reg_kl with respect to x_adv.

    The clamp's subgradient at exactly 0 is taken as 0, and coordinates where
    q sits on its floor contribute no gradient (the floored log is locally
    constant there).
    """
    Z, X = _pair(x_adv, x)
    n = Z.shape[0]
    p, _ = _kl_profiles(X, eps_norm)
    q, s_z = _kl_profiles(Z, eps_norm)
    active = (p > 0.0) & (q > KL_Q_FLOOR)
    p_active = np.where(active, p, 0.0).sum(axis=1, keepdims=True)
    ratio = np.where(active, p / np.maximum(q, KL_Q_FLOOR), 0.0)
    return np.where(Z > 0.0, (p_active - ratio) / s_z, 0.0) / n


def reg_l2(x_adv, x) -> float:
    """Mean per-row Euclidean distance between adversarial and clean rows."""
    Z, X = _pair(x_adv, x)
    return float(np.linalg.norm(Z - X, axis=1).mean())


def reg_l2_grad(x_adv, x) -> np.ndarray:
    """Gradient of reg_l2; the subgradient at a zero-difference row is 0."""
    Z, X = _pair(x_adv, x)
    diff = Z - X
    norms = np.linalg.norm(diff, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return np.where(norms > 0.0, diff / safe, 0.0) / Z.shape[0]


def pooled_median_sigma(a, b=None) -> float:
    """Median pairwise Euclidean distance over the stacked rows of a and b
    (or of a alone), floored so a degenerate pool cannot zero the RBF
    bandwidth."""
    pool = _as_rows(a) if b is None else np.vstack([_as_rows(a), _as_rows(b)])
    if pool.shape[0] < 2:
        return RBF_SIGMA_FLOOR
    sigma = float(np.median(pdist(pool)))
    return max(sigma, RBF_SIGMA_FLOOR)


def kernel_matrix(a, b, kernel: str, rbf_sigma: float | None = None) -> np.ndarray:
    """Gram matrix K[i, j] = k(a_i, b_j) for the named kernel.

    rbf_sigma overrides the pooled-median bandwidth; ignored by the other
    kernels. The polynomial kernel is cubic with an inverse-dimension scaling
    that keeps magnitudes bounded as d grows.
    """
    A, B = _as_rows(a), _as_rows(b)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature mismatch: {A.shape[1]} vs {B.shape[1]}")
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sigma = pooled_median_sigma(A, B) if rbf_sigma is None else float(rbf_sigma)
        return np.exp(cdist(A, B, "sqeuclidean") / (-2.0 * sigma * sigma))
    if kernel == "poly":
        return (A @ B.T / A.shape[1] + 1.0) ** 3
    raise ValueError(f"unknown kernel {kernel!r}")


def reg_mmd(x_adv, x, kernel: str, rbf_sigma: float | None = None) -> float:
    """Biased (V-statistic) squared MMD between the clean and adversarial
    batches; nonnegative for any positive-definite kernel.

    For the RBF kernel, one bandwidth from the pooled batches is shared by
    all three Gram blocks unless rbf_sigma is given.
    """
    Z, X = _as_rows(x_adv), _as_rows(x)
    if Z.size == 0 or X.size == 0:
        raise ValueError("mmd requires nonempty batches")
    if Z.shape[1] != X.shape[1]:
        raise ValueError(f"feature mismatch: {Z.shape[1]} vs {X.shape[1]}")
    if kernel == "rbf" and rbf_sigma is None:
        rbf_sigma = pooled_median_sigma(X, Z)
    k_xx = kernel_matrix(X, X, kernel, rbf_sigma)
    k_zz = kernel_matrix(Z, Z, kernel, rbf_sigma)
    k_xz = kernel_matrix(X, Z, kernel, rbf_sigma)
    return float(k_xx.mean() + k_zz.mean() - 2.0 * k_xz.mean())


def reg_mmd_grad(x_adv, x, kernel: str, rbf_sigma: float | None = None) -> np.ndarray:
    """Gradient of reg_mmd with respect to x_adv.

    The RBF bandwidth is treated as a constant even though the median
    heuristic depends on x_adv; callers that recompute it per step pass the
    frozen value so loss and gradient agree within an iteration.
    """
    Z, X = _as_rows(x_adv), _as_rows(x)
    if Z.size == 0 or X.size == 0:
        raise ValueError("mmd requires nonempty batches")
    n, m = Z.shape[0], X.shape[0]
    if kernel == "linear":
        row = (2.0 / n) * (Z.mean(axis=0) - X.mean(axis=0))
        return np.broadcast_to(row, Z.shape).copy()
    if kernel == "rbf":
        sigma = pooled_median_sigma(X, Z) if rbf_sigma is None else float(rbf_sigma)
        k_zz = np.exp(cdist(Z, Z, "sqeuclidean") / (-2.0 * sigma * sigma))
        k_xz = np.exp(cdist(X, Z, "sqeuclidean") / (-2.0 * sigma * sigma))
        term_zz = k_zz @ Z - k_zz.sum(axis=1, keepdims=True) * Z
        term_xz = k_xz.sum(axis=0)[:, None] * Z - k_xz.T @ X
        return (2.0 / (n * n * sigma * sigma)) * term_zz + (
            2.0 / (m * n * sigma * sigma)
        ) * term_xz
    if kernel == "poly":
        d = Z.shape[1]
        g_zz = (Z @ Z.T / d + 1.0) ** 2
        g_xz = (X @ Z.T / d + 1.0) ** 2
        return (6.0 / (n * n * d)) * (g_zz @ Z) - (6.0 / (m * n * d)) * (g_xz.T @ X)
    raise ValueError(f"unknown kernel {kernel!r}")


def regularizer(x_adv, x, spec: LossSpec, rbf_sigma: float | None = None) -> float:
    """Value of the regularizer selected by spec; 0.0 when kind is "none"."""
    if spec.kind == "none":
        return 0.0
    if spec.kind == "kl":
        return reg_kl(x_adv, x, spec.eps_norm)
    if spec.kind == "l2":
        return reg_l2(x_adv, x)
    return reg_mmd(x_adv, x, spec.kernel, rbf_sigma)


def regularizer_grad(x_adv, x, spec: LossSpec, rbf_sigma: float | None = None) -> np.ndarray:
    """Gradient of the regularizer selected by spec with respect to x_adv."""
    if spec.kind == "none":
        return np.zeros_like(_as_rows(x_adv))
    if spec.kind == "kl":
        return reg_kl_grad(x_adv, x, spec.eps_norm)
    if spec.kind == "l2":
        return reg_l2_grad(x_adv, x)
    return reg_mmd_grad(x_adv, x, spec.kernel, rbf_sigma)
