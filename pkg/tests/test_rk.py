import numpy as np
import pytest

from driftavg.rk import NonFiniteState, StepSizeUnderflow, IntegrationError, dopri5


def test_exponential_decay():
    sol = dopri5(lambda t, y: -y, (0.0, 1.0), [1.0, 2.0], rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(sol.y[-1], [np.exp(-1.0), 2 * np.exp(-1.0)], rtol=1e-9)
    assert sol.t[-1] == 1.0
    assert sol.nfev == 6 * (sol.naccept + sol.nreject) + 2


def test_harmonic_oscillator_and_dense_output():
    sol = dopri5(lambda t, y: np.array([y[1], -y[0]]), (0.0, 10.0), [0.0, 1.0], rtol=1e-10, atol=1e-12)
    tq = np.linspace(0, 10, 1001)
    y = sol(tq)
    np.testing.assert_allclose(y[:, 0], np.sin(tq), atol=1e-8)
    np.testing.assert_allclose(y[:, 1], np.cos(tq), atol=1e-8)
    # stored states are returned exactly at step boundaries
    np.testing.assert_array_equal(sol(sol.t[3]), sol.y[3])
    assert sol(2.5).shape == (2,)


def test_stops_are_hit_exactly():
    stops = [0.1, 0.35, 0.7]
    sol = dopri5(lambda t, y: np.cos(t) * np.ones(1), (0.0, 1.0), [0.0], stops=stops)
    for s in stops:
        assert s in sol.t
    np.testing.assert_allclose(sol.y[-1], [np.sin(1.0)], atol=1e-9)


def test_discontinuous_rhs_with_stop():
    # y' = 1 on [0, 0.5), 3 afterwards
    rhs = lambda t, y: np.array([1.0 if t < 0.5 else 3.0])  # noqa: E731
    sol = dopri5(rhs, (0.0, 1.0), [0.0], stops=[0.5])
    np.testing.assert_allclose(sol.y[-1], [2.0], atol=1e-12)


def test_max_step_is_respected():
    sol = dopri5(lambda t, y: -y, (0.0, 1.0), [1.0], max_step=0.01)
    assert np.max(np.diff(sol.t)) <= 0.01 + 1e-15


def test_blow_up_raises():
    with pytest.raises(IntegrationError):
        dopri5(lambda t, y: y**2, (0.0, 2.0), [1.0])


def test_nonfinite_rhs_raises():
    with pytest.raises((NonFiniteState, StepSizeUnderflow)):
        dopri5(lambda t, y: np.array([np.nan]), (0.0, 1.0), [1.0])


def test_dense_query_outside_interval():
    sol = dopri5(lambda t, y: -y, (0.0, 1.0), [1.0])
    with pytest.raises(ValueError):
        sol(1.5)


@pytest.mark.parametrize("kwargs", [{"rtol": 0.0}, {"atol": -1.0}])
def test_bad_tolerances(kwargs):
    with pytest.raises(ValueError):
        dopri5(lambda t, y: -y, (0.0, 1.0), [1.0], **kwargs)


def test_bad_span():
    with pytest.raises(ValueError):
        dopri5(lambda t, y: -y, (1.0, 0.0), [1.0])


def test_order_five_convergence():
    # global error of the 5th-order solution scales like h^5 with fixed steps
    errs = []
    for h in (0.1, 0.05):
        sol = dopri5(lambda t, y: -y, (0.0, 1.0), [1.0], rtol=1e3, atol=1e3, first_step=h, max_step=h)
        errs.append(abs(sol.y[-1, 0] - np.exp(-1.0)))
    assert 4.5 < np.log2(errs[0] / errs[1]) < 5.5
