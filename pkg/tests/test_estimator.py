import numpy as np
import pytest
from numpy.testing import assert_allclose
from sklearn.base import clone

from svinefactor import dgp
from svinefactor.errors import DataError
from svinefactor.estimator import SVineFactorModel


@pytest.fixture(scope="module")
def panel():
    spec = dgp.benchmark_spec(t_len=180, n_dim=20, seed=17)
    data, *_ = dgp.generate(spec, 0)
    return data.values


@pytest.fixture(scope="module")
def fitted(panel):
    est = SVineFactorModel(k=2, p=1, families=("frank",), n_starts=2, seed=1)
    return est.fit(panel)


def test_estimator_fit_attributes(fitted, panel):
    assert fitted.factors_.shape == (180, 2)
    assert fitted.loadings_.shape == (20, 2)
    assert np.isfinite(fitted.objective_)
    assert fitted.n_factors_ == 2
    assert fitted.score() == fitted.objective_


def test_estimator_transform_matches_training(fitted, panel):
    assert_allclose(fitted.transform(), fitted.factors_)
    projected = fitted.transform(panel)
    # projecting the training rows reproduces the rotated factors
    assert_allclose(projected, fitted.factors_, atol=1e-8)


def test_estimator_forecast_units(fitted, panel):
    ens = fitted.forecast(horizon=2, n_paths=100, seed=4)
    assert ens.paths.shape == (100, 2, 20)
    # forecasts live on the original data scale
    assert abs(np.mean(ens.paths) - np.mean(panel)) < 2.0 * np.std(panel)


def test_estimator_not_fitted_errors(panel):
    est = SVineFactorModel()
    with pytest.raises(DataError, match="not fitted"):
        est.transform(panel)
    with pytest.raises(DataError, match="not fitted"):
        est.forecast(1)


def test_estimator_sklearn_protocol(panel):
    est = SVineFactorModel(k=2, p=1, families=("frank",), n_starts=1, seed=0)
    params = est.get_params()
    assert params["k"] == 2 and params["p"] == 1
    cloned = clone(est)
    assert cloned.get_params() == params
    est.set_params(p=2)
    assert est.p == 2


def test_estimator_rejects_bad_input():
    est = SVineFactorModel()
    with pytest.raises(DataError):
        est.fit(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(DataError):
        est.fit(np.ones((1, 4)))
