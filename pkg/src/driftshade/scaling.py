"""Per-feature standardization fitted on training data statistics."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

__all__ = ["STD_FLOOR", "FeatureScaler"]

# Standard deviations below this are replaced by 1.0 so constant columns
# standardize to zero instead of exploding.
STD_FLOOR = 1e-8


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Standardize features as z = (x - mean) / std.

    Uses population (divide-by-n) standard deviations so the fit is a
    deterministic function of the training matrix. transform and
    inverse_transform are exact inverses of each other.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std < STD_FLOOR, 1.0, std)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        self._check_width(X)
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, Z) -> np.ndarray:
        check_is_fitted(self, "mean_")
        Z = check_array(Z, dtype=np.float64)
        self._check_width(Z)
        return Z * self.scale_ + self.mean_

    def _check_width(self, X) -> None:
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, scaler was fitted with "
                f"{self.n_features_in_}"
            )
