import numpy as np
import pytest

from ahstgnn.baseline import ha_fit, ha_predict, persistence_predict
from ahstgnn.data import generate_synthetic
from ahstgnn.errors import ContractError
from ahstgnn.train import prepare_data
from oracles import ha_naive


def test_constant_series_table():
    m = ha_fit(np.full((7 * 4 * 2, 3, 1), 2.5), q=4)
    np.testing.assert_array_equal(m.table, 2.5)


def test_two_weeks_average():
    q = 2
    x = np.zeros((28, 2, 1))
    x[5], x[5 + 14] = 1.0, 4.0
    assert ha_fit(x, q).table[5, 0, 0] == 2.5


def test_needs_a_full_week():
    with pytest.raises(ContractError, match="full week"):
        ha_fit(np.zeros((7 * 4 - 1, 2, 1)), q=4)


@pytest.mark.parametrize("first_slot", [0, 9, 27])
def test_table_matches_naive_averaging(first_slot):
    x = np.random.default_rng(first_slot).normal(10, 3, (2 * 7 * 4 + 5, 3, 1))
    np.testing.assert_array_equal(ha_fit(x, 4, first_slot).table, ha_naive(x, 4, first_slot))


def test_lookup_wraps_week_boundary():
    q = 2
    table_x = np.arange(14, dtype=float)[:, None, None] * np.ones((1, 2, 1))
    m = ha_fit(table_x, q)
    pred = ha_predict(m, [12], 3)
    assert pred[0, :, 0, 0].tolist() == [13.0, 0.0, 1.0]


def test_prediction_ignores_week_index():
    x = np.random.default_rng(1).standard_normal((3 * 14, 2, 1))
    m = ha_fit(x, 2)
    np.testing.assert_array_equal(ha_predict(m, [3], 4), ha_predict(m, [3 + 14], 4))
    np.testing.assert_array_equal(ha_predict(m, [3, 17], 4)[0], ha_predict(m, [3, 17], 4)[1])


def test_persistence_on_constant_series():
    last = np.full((4, 1), 3.0)
    pred = persistence_predict(last, 5)
    assert pred.shape == (5, 4, 1)
    np.testing.assert_array_equal(pred, 3.0)
    assert persistence_predict(np.zeros((2, 4, 1)), 3).shape == (2, 3, 4, 1)


def test_noiseless_synthetic_ha_exact():
    ds, g = generate_synthetic(n_nodes=5, days=21, q=24, seed=4, heterogeneity=0.0, noise=0.0)
    data = prepare_data(ds, g, T=6, M=4)
    m = ha_fit(ds.series[: data.train_end], ds.q, int(ds.slot_of_week(0)))
    err = np.abs(ha_predict(m, data.test.anchors, 4) - data.test.y_raw).max()
    assert err <= 1e-9
