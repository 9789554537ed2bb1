import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elab.rates import fit_rate


def test_exact_square_law():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_rate(x, x**2)
    assert abs(fit.slope - 2) < 1e-12
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.predict(3.0) == pytest.approx(9.0)


def test_constant_has_zero_slope():
    fit = fit_rate([1, 2, 3], [3, 3, 3])
    assert abs(fit.slope) < 1e-12
    assert fit.r_squared == 1.0


def test_noisy_power_law():
    rng = np.random.default_rng(0)
    x = np.geomspace(1, 100, 8)
    y = x**1.5 * (1 + 0.01 * rng.standard_normal(8))
    assert abs(fit_rate(x, y).slope - 1.5) < 0.05


@settings(max_examples=50, deadline=None)
@given(p=st.floats(-3, 3), c=st.floats(1e-3, 1e3))
def test_recovers_any_power(p, c):
    x = np.geomspace(0.01, 10, 5)
    assert fit_rate(x, c * x**p).slope == pytest.approx(p, abs=1e-9)


def test_points_are_logged_and_serializable():
    fit = fit_rate([1, 10, 100], [1, 10, 100])
    d = fit.as_dict()
    assert d["points"][1] == pytest.approx([np.log(10), np.log(10)])
    assert set(d) == {"slope", "intercept", "r_squared", "points"}


@pytest.mark.parametrize("x,y,msg", [([1, 2], [1, 2], "3 points"), ([1, 2, 0], [1, 2, 3], "positive"),
                                     ([1, 2, 3], [1, -2, 3], "positive"), ([1, 2, 3], [1, 2], "equal")])
def test_rejects_bad_input(x, y, msg):
    with pytest.raises(ValueError, match=msg):
        fit_rate(x, y)
