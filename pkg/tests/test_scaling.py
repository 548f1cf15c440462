import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from driftshade.scaling import STD_FLOOR, FeatureScaler


def test_population_statistics():
    X = np.array([[1.0, 10.0], [3.0, 10.0], [5.0, 16.0]])
    sc = FeatureScaler().fit(X)
    np.testing.assert_allclose(sc.mean_, [3.0, 12.0])
    # population (ddof=0) standard deviation, not the sample estimate
    np.testing.assert_allclose(sc.scale_, X.std(axis=0, ddof=0))


def test_transform_standardizes():
    rng = np.random.default_rng(0)
    X = rng.normal(5.0, 2.0, size=(500, 3))
    Z = FeatureScaler().fit(X).transform(X)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)


def test_constant_feature_uses_unit_scale():
    X = np.array([[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]])
    sc = FeatureScaler().fit(X)
    assert sc.scale_[0] == 1.0
    Z = sc.transform(X)
    np.testing.assert_allclose(Z[:, 0], 0.0)


def test_floor_threshold():
    # spread below the floor is treated as constant; above it is kept
    X = np.zeros((4, 2))
    X[:2, 0] = STD_FLOOR / 10
    X[:2, 1] = 1.0
    sc = FeatureScaler().fit(X)
    assert sc.scale_[0] == 1.0
    assert sc.scale_[1] == 0.5


def test_inverse_round_trip():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 5)) * [1, 2, 3, 4, 5] + 7
    sc = FeatureScaler().fit(X)
    np.testing.assert_allclose(sc.inverse_transform(sc.transform(X)), X, atol=1e-12)


def test_width_mismatch_errors():
    sc = FeatureScaler().fit(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        sc.transform(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        sc.inverse_transform(np.zeros((2, 5)))


def test_unfitted_transform_errors():
    with pytest.raises(NotFittedError):
        FeatureScaler().transform(np.zeros((2, 2)))


def test_empty_input_errors():
    with pytest.raises(ValueError):
        FeatureScaler().fit(np.zeros((0, 3)))


def test_estimator_protocol():
    sc = FeatureScaler()
    assert sc.get_params() == {}
    fitted = sc.fit(np.eye(3))
    assert fitted is sc
    assert clone(sc) is not sc
    assert fitted.n_features_in_ == 3
