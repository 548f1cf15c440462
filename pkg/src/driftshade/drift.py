"""Output-distribution drift metrics between clean and adversarial
malware-class probabilities.

Six scores: PSI, KS, Jensen-Shannon divergence, Hellinger distance,
Wasserstein-1, and unbiased MMD. The binned metrics (PSI/JSD/Hellinger)
share equal-width bins derived from the reference sample; KS and
Wasserstein are exact ECDF computations on the raw samples; MMD is the
unbiased U-statistic with an RBF kernel and pooled-median bandwidth, so it
can legitimately go negative. Detection flags come from per-metric
thresholds plus a seeded permutation test for MMD.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .objectives import pooled_median_sigma

__all__ = [
    "SMOOTH_EPS",
    "METRIC_ORDER",
    "BinnedHist",
    "DetectionThresholds",
    "DriftReport",
    "bin_reference",
    "psi",
    "jsd",
    "hellinger",
    "ks_stat",
    "ks_critical",
    "wasserstein1d",
    "mmd_output",
    "mmd_permutation_pvalue",
    "avg_psi",
    "compare_prob_samples",
    "drift_report",
    "OutputDriftDetector",
]

# Added to every bin proportion before renormalizing; keeps PSI/JSD logs
# finite without visibly moving report-scale values.
SMOOTH_EPS = 1e-6

METRIC_ORDER = ("jsd", "hellinger", "wasserstein", "mmd", "ks", "psi")


def _check_sample(a, name: str = "sample") -> np.ndarray:
    out = np.asarray(a, dtype=np.float64).ravel()
    if out.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.isfinite(out).all():
        raise ValueError(f"{name} contains non-finite values")
    return out


def _check_probs(a, name: str = "sample") -> np.ndarray:
    out = _check_sample(a, name)
    if out.min() < -1e-9 or out.max() > 1.0 + 1e-9:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class BinnedHist:
    """Shared-edge histogram: smoothed reference and current proportions."""

    edges: np.ndarray
    ref_prop: np.ndarray
    cur_prop: np.ndarray


def _smooth(prop: np.ndarray) -> np.ndarray:
    return (prop + SMOOTH_EPS) / (1.0 + prop.size * SMOOTH_EPS)


def bin_reference(ref, cur, n_bins: int = 10) -> BinnedHist:
    """Equal-width bins spanning the reference range (slightly widened);
    current values outside the range are clipped into the end bins."""
    ref = _check_sample(ref, "ref")
    cur = _check_sample(cur, "cur")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    pad = max(1e-12, float(np.spacing(np.abs(ref)).max()))
    lo, hi = ref.min() - pad, ref.max() + pad
    edges = np.linspace(lo, hi, n_bins + 1)
    r_counts, _ = np.histogram(ref, bins=edges)
    c_counts, _ = np.histogram(np.clip(cur, lo, hi), bins=edges)
    return BinnedHist(
        edges=edges,
        ref_prop=_smooth(r_counts / ref.size),
        cur_prop=_smooth(c_counts / cur.size),
    )


def psi(hist: BinnedHist) -> float:
    """Population stability index, natural log; every term is >= 0."""
    r, c = hist.ref_prop, hist.cur_prop
    return float(((c - r) * np.log(c / r)).sum())


def jsd(hist: BinnedHist) -> float:
    """Jensen-Shannon divergence via the midpoint distribution; bounded by
    ln 2."""
    r, c = hist.ref_prop, hist.cur_prop
    m = 0.5 * (r + c)
    return float(0.5 * (r * np.log(r / m)).sum() + 0.5 * (c * np.log(c / m)).sum())


def hellinger(hist: BinnedHist) -> float:
    """Hellinger distance H (not H squared), in [0, 1]."""
    r, c = hist.ref_prop, hist.cur_prop
    return float(np.sqrt(0.5 * ((np.sqrt(r) - np.sqrt(c)) ** 2).sum()))


def ks_stat(ref, cur) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic on raw samples."""
    r = np.sort(_check_sample(ref, "ref"))
    c = np.sort(_check_sample(cur, "cur"))
    grid = np.concatenate([r, c])
    cdf_r = np.searchsorted(r, grid, side="right") / r.size
    cdf_c = np.searchsorted(c, grid, side="right") / c.size
    return float(np.abs(cdf_r - cdf_c).max())


def ks_critical(n_ref: int, n_cur: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample KS critical value at significance alpha."""
    c_alpha = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    return c_alpha * math.sqrt((n_ref + n_cur) / (n_ref * n_cur))


def wasserstein1d(ref, cur) -> float:
    """Exact 1-D earth mover's distance: integral of the absolute ECDF
    difference over the merged support."""
    r = np.sort(_check_sample(ref, "ref"))
    c = np.sort(_check_sample(cur, "cur"))
    grid = np.sort(np.concatenate([r, c]))
    deltas = np.diff(grid)
    cdf_r = np.searchsorted(r, grid[:-1], side="right") / r.size
    cdf_c = np.searchsorted(c, grid[:-1], side="right") / c.size
    return float((np.abs(cdf_r - cdf_c) * deltas).sum())


def _pooled_rbf_gram(pool: np.ndarray) -> np.ndarray:
    sigma = pooled_median_sigma(pool[:, None])
    d2 = (pool[:, None] - pool[None, :]) ** 2
    return np.exp(d2 / (-2.0 * sigma * sigma))


def _unbiased_stat(gram: np.ndarray, ix: np.ndarray, iy: np.ndarray) -> float:
    n, m = ix.size, iy.size
    # RBF diagonal entries equal 1, so subtracting the count removes i == j.
    kxx = gram[np.ix_(ix, ix)].sum() - n
    kyy = gram[np.ix_(iy, iy)].sum() - m
    kxy = gram[np.ix_(ix, iy)].sum()
    return float(kxx / (n * (n - 1)) + kyy / (m * (m - 1)) - 2.0 * kxy / (n * m))


def _mmd_inputs(ref, cur) -> tuple[np.ndarray, int, int]:
    r = _check_sample(ref, "ref")
    c = _check_sample(cur, "cur")
    if r.size < 2 or c.size < 2:
        raise ValueError("mmd needs at least 2 points per sample")
    return np.concatenate([r, c]), r.size, c.size


def mmd_output(ref, cur) -> float:
    """Unbiased squared-MMD U-statistic between two scalar samples; may be
    negative. RBF bandwidth: median pairwise distance of the pooled sample,
    floored."""
    pool, n, m = _mmd_inputs(ref, cur)
    gram = _pooled_rbf_gram(pool)
    return _unbiased_stat(gram, np.arange(n), n + np.arange(m))


def mmd_permutation_pvalue(ref, cur, n_permutations: int = 200,
                           seed: int = 0) -> float:
    """Permutation p-value for the observed MMD statistic. The bandwidth is
    a function of the pooled sample, hence identical across permutations."""
    pool, n, m = _mmd_inputs(ref, cur)
    gram = _pooled_rbf_gram(pool)
    observed = _unbiased_stat(gram, np.arange(n), n + np.arange(m))
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_permutations):
        perm = rng.permutation(n + m)
        if _unbiased_stat(gram, perm[:n], perm[n:]) >= observed:
            hits += 1
    return (hits + 1) / (n_permutations + 1)


def avg_psi(ref, cur, n_bins: int = 10, n_bootstrap: int = 10,
            seed: int = 0) -> float:
    """PSI averaged over seeded bootstrap resamples of both samples."""
    r = _check_sample(ref, "ref")
    c = _check_sample(cur, "cur")
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(n_bootstrap):
        rb = r[rng.integers(0, r.size, r.size)]
        cb = c[rng.integers(0, c.size, c.size)]
        values.append(psi(bin_reference(rb, cb, n_bins)))
    return float(np.mean(values))


@dataclass(frozen=True)
class DetectionThresholds:
    """Per-metric detection policy. psi/jsd/hellinger/wasserstein flag above
    their thresholds (infinite means report-only); KS uses the asymptotic
    critical value at ks_alpha; MMD uses a seeded permutation test."""

    psi: float = 0.10
    jsd: float = math.inf
    hellinger: float = math.inf
    wasserstein: float = math.inf
    ks_alpha: float = 0.05
    mmd_alpha: float = 0.05
    mmd_permutations: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("psi", "jsd", "hellinger", "wasserstein"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} threshold must be >= 0")
        for name in ("ks_alpha", "mmd_alpha"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.mmd_permutations < 1:
            raise ValueError("mmd_permutations must be >= 1")


@dataclass(frozen=True)
class DriftReport:
    """All six metrics plus which of them flagged detection."""

    jsd: float
    hellinger: float
    wasserstein: float
    mmd: float
    ks: float
    psi: float
    detected_by: tuple = field(default_factory=tuple)
    mmd_pvalue: float = math.nan
    n_bins: int = 10
    n_ref: int = 0
    n_cur: int = 0

    CSV_HEADER = "jsd,hellinger,wasserstein,mmd,ks,psi,detected"

    def metric(self, name: str) -> float:
        return getattr(self, name)

    def to_csv_row(self) -> str:
        cells = [repr(self.metric(name)) for name in METRIC_ORDER]
        cells.append(";".join(self.detected_by))
        return ",".join(cells)

    def to_json_dict(self) -> dict:
        out = {name: self.metric(name) for name in METRIC_ORDER}
        out["detected_by"] = list(self.detected_by)
        out["mmd_pvalue"] = self.mmd_pvalue
        out["n_bins"] = self.n_bins
        out["n_ref"] = self.n_ref
        out["n_cur"] = self.n_cur
        return out


def compare_prob_samples(ref, cur, n_bins: int = 10,
                         thresholds: DetectionThresholds | None = None) -> DriftReport:
    """Full six-metric report between two probability samples, with
    detection flags in metric order."""
    ref = _check_probs(ref, "ref")
    cur = _check_probs(cur, "cur")
    if thresholds is None:
        thresholds = DetectionThresholds()
    hist = bin_reference(ref, cur, n_bins)
    values = {
        "jsd": jsd(hist),
        "hellinger": hellinger(hist),
        "wasserstein": wasserstein1d(ref, cur),
        "mmd": mmd_output(ref, cur),
        "ks": ks_stat(ref, cur),
        "psi": psi(hist),
    }
    pvalue = mmd_permutation_pvalue(ref, cur, thresholds.mmd_permutations,
                                    thresholds.seed)
    flagged = {
        "jsd": values["jsd"] > thresholds.jsd,
        "hellinger": values["hellinger"] > thresholds.hellinger,
        "wasserstein": values["wasserstein"] > thresholds.wasserstein,
        "mmd": pvalue < thresholds.mmd_alpha,
        "ks": values["ks"] > ks_critical(ref.size, cur.size, thresholds.ks_alpha),
        "psi": values["psi"] > thresholds.psi,
    }
    return DriftReport(
        detected_by=tuple(name for name in METRIC_ORDER if flagged[name]),
        mmd_pvalue=pvalue,
        n_bins=n_bins,
        n_ref=int(ref.size),
        n_cur=int(cur.size),
        **values,
    )


def drift_report(model, x_clean, x_adv, n_bins: int = 10,
                 thresholds: DetectionThresholds | None = None) -> DriftReport:
    """Compare malware-class output probabilities of a trained model on
    clean versus adversarial standardized inputs."""
    p_clean = model.predict_proba_std(x_clean)[:, 1]
    p_adv = model.predict_proba_std(x_adv)[:, 1]
    return compare_prob_samples(p_clean, p_adv, n_bins, thresholds)


class OutputDriftDetector(BaseEstimator):
    """Reference-based drift detector over scalar probability samples.

    fit stores the reference sample; report scores a current sample against
    it; predict returns True when any metric flags detection.
    """

    def __init__(self, n_bins: int = 10,
                 thresholds: DetectionThresholds | None = None):
        self.n_bins = n_bins
        self.thresholds = thresholds

    def fit(self, X, y=None):
        self.reference_ = _check_probs(X, "reference")
        return self

    def report(self, X) -> DriftReport:
        if not hasattr(self, "reference_"):
            raise ValueError("detector is not fitted; call fit first")
        return compare_prob_samples(self.reference_, X, self.n_bins,
                                    self.thresholds)

    def predict(self, X) -> bool:
        return len(self.report(X).detected_by) > 0
