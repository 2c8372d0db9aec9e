import numpy as np
import pytest
from sklearn.base import clone

from lao.core import ConfigurationError
from lao.data import synth_linear
from lao.models import (
    AELRRegressor,
    AERRRegressor,
    AESVRRegressor,
    EGRegressor,
    ESTIMATORS,
    LAONormalizer,
    OGDRegressor,
)


@pytest.fixture(scope="module")
def data():
    ds, _ = synth_linear(d=6, m=1500, noise_sd=0.05, seed=0)
    return ds.X[:1000], ds.y[:1000], ds.X[1000:], ds.y[1000:]


@pytest.mark.parametrize("name", sorted(ESTIMATORS))
def test_get_params_and_clone(name):
    est = ESTIMATORS[name](k=2, seed=3)
    params = est.get_params()
    assert params["k"] == 2 and params["seed"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    assert not hasattr(twin, "coef_")


@pytest.mark.parametrize("cls", [AERRRegressor, AELRRegressor, AESVRRegressor, OGDRegressor, EGRegressor])
def test_fit_predict_roundtrip(cls, data):
    X, y, Xt, yt = data
    est = cls(k=2, seed=0).fit(X, y, eval_set=(Xt, yt))
    assert est.coef_.shape == (6,)
    assert est.n_features_in_ == 6
    np.testing.assert_allclose(est.predict(Xt), Xt @ est.coef_)
    assert est.trace_[-1].example_index == 1000
    assert est.mse(Xt, yt) < np.mean(yt**2)


def test_fit_is_deterministic(data):
    X, y, _, _ = data
    a = AERRRegressor(k=1, seed=5).fit(X, y).coef_
    b = AERRRegressor(k=1, seed=5).fit(X, y).coef_
    np.testing.assert_array_equal(a, b)


def test_ledger_and_budget(data):
    X, y, _, _ = data
    est = AERRRegressor(k=3, budget=401).fit(X, y)
    assert est.ledger_total_ <= 401
    assert est.n_examples_ == 100


def test_default_B_from_labels():
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    est = AERRRegressor().fit(X, np.array([3.0, -0.5]))
    assert est.B_ == 3.0
    est = AERRRegressor().fit(X, np.array([0.2, -0.5]))
    assert est.B_ == 1.0


def test_rejects_unnormalized_rows():
    X = np.array([[3.0, 4.0], [0.1, 0.1]])
    with pytest.raises(ConfigurationError, match="LAONormalizer"):
        AERRRegressor().fit(X, np.zeros(2))
    Xn = LAONormalizer().fit_transform(X)
    AERRRegressor().fit(Xn, np.zeros(2))


def test_normalizer():
    X = np.array([[3.0, 4.0], [1.0, 0.0]])
    norm = LAONormalizer().fit(X)
    assert norm.scale_ == 5.0
    np.testing.assert_allclose(norm.transform(X), X / 5.0)
    assert LAONormalizer(norm="linf").fit(X).scale_ == 4.0
    assert LAONormalizer(norm="linf", pixel_scale=255).fit(X).scale_ == 255.0
    with pytest.raises(ConfigurationError):
        LAONormalizer(norm="l3").fit(X)
    with pytest.raises(ConfigurationError):
        LAONormalizer().fit(np.zeros((2, 2)))


def test_predict_requires_fit_and_shape(data):
    X, y, _, _ = data
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        AERRRegressor().predict(X)
    est = AERRRegressor().fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :3])


def test_ogd_delta_insensitive_option(data):
    X, y, _, _ = data
    est = OGDRegressor(loss="delta_insensitive", delta=0.1).fit(X, y)
    assert est.ledger_total_ == X.size
