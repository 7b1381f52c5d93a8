import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from stratfib.errors import InputError
from stratfib.estimators import AsymptoticCriticalValues, FiberTrivializer, NonRegularValues


def test_params_round_trip_and_clone():
    est = NonRegularValues(count=6, seed=3)
    assert est.get_params()["count"] == 6
    twin = clone(est).set_params(seed=4)
    assert twin.seed == 4 and est.seed == 3


def test_unfitted_estimator_raises():
    with pytest.raises(NotFittedError):
        NonRegularValues().predict([[0.0]])


def test_non_regular_values_of_broughton(broughton):
    est = NonRegularValues(count=8).fit(broughton)
    assert list(est.predict([0.0, 0.5])) == [True, False]
    assert est.decision_function([[1.0]])[0] == pytest.approx(1.0, abs=1e-2)
    assert all(vs.is_empty for vs in est.critical_values_.values())


def test_empty_set_for_linear(linear):
    est = NonRegularValues(count=6).fit(linear)
    assert not est.predict([0.0]).any()
    assert np.isinf(est.decision_function([0.0])).all()
    with pytest.raises(InputError):
        est.predict([[0.0, 1.0]])


def test_asymptotic_values(broughton):
    est = AsymptoticCriticalValues(count=8).fit(broughton.components)
    assert est.predict([[0.0]])[0]


def test_fiber_trivializer(linear):
    est = FiberTrivializer(box=[(-1.0, 1.0)], radii=(2.0, 3.0, 4.0), n_fiber=4).fit(linear)
    assert est.score() == 1.0
    assert list(est.predict([0.0, 0.5])) == [1, 1]
