import numpy as np
import pytest
from hypothesis import given, strategies as st

from tvggm import (DataError, DegenerateColumnError, TimeGrid,
                   TimeSeriesDataset, detrend, load_csv, log_returns,
                   standardize)


def make_ds(values, times=None, names=None):
    values = np.asarray(values, dtype=float)
    if times is None:
        n = values.shape[0]
        times = np.arange(n) / max(n - 1, 1)
    return TimeSeriesDataset(values, TimeGrid(np.asarray(times, float)), names)


class TestTimeGrid:
    def test_rejects_out_of_range(self):
        with pytest.raises(DataError):
            TimeGrid(np.array([0.0, 1.5]))

    def test_rejects_decreasing(self):
        with pytest.raises(DataError):
            TimeGrid(np.array([0.5, 0.2]))

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            TimeGrid(np.array([]))


class TestDataset:
    def test_default_names(self):
        ds = make_ds(np.zeros((3, 2)))
        assert ds.names == ("x1", "x2")

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            TimeSeriesDataset(np.zeros((3, 2)), TimeGrid(np.array([0.0, 1.0])))

    def test_nonfinite_rejected(self):
        vals = np.zeros((2, 2))
        vals[0, 0] = np.nan
        with pytest.raises(DataError):
            make_ds(vals)

    def test_values_immutable(self):
        ds = make_ds(np.ones((3, 2)))
        with pytest.raises(ValueError):
            ds.values[0, 0] = 2.0


class TestDetrend:
    def test_constant_series_zeroed(self):
        ds = make_ds(np.full((5, 2), 7.0))
        out = detrend(ds, 0.2)
        assert np.allclose(out.values, 0.0)

    def test_single_row_zeroed(self):
        ds = make_ds([[3.0, -1.0]], times=[0.5])
        out = detrend(ds, 0.1)
        assert np.allclose(out.values, 0.0)

    def test_flat_weight_limit(self):
        # With a huge bandwidth all weights are ~equal, so the estimated
        # mean is ~2 everywhere.
        ds = make_ds([[1.0], [2.0], [3.0]], times=[0.0, 0.5, 1.0])
        out = detrend(ds, 100.0)
        assert np.allclose(out.values[:, 0], [-1.0, 0.0, 1.0], atol=1e-3)

    def test_matches_direct_weight_formula(self):
        rng = np.random.default_rng(3)
        vals = rng.normal(size=(6, 2))
        times = np.sort(rng.uniform(size=6))
        ds = make_ds(vals, times=times)
        h = 0.3
        out = detrend(ds, h)
        for k in range(6):
            w = np.exp(-0.5 * ((times - times[k]) / h) ** 2)
            w /= w.sum()
            assert np.allclose(out.values[k], vals[k] - w @ vals, atol=1e-12)

    def test_near_idempotent_in_flat_regime(self):
        # A kernel smoother is not a projection in general; with near-flat
        # weights it is within tolerance a rank-1 mean removal, which is.
        rng = np.random.default_rng(4)
        ds = make_ds(rng.normal(size=(8, 3)))
        once = detrend(ds, 5000.0)
        twice = detrend(once, 5000.0)
        assert np.max(np.abs(twice.values - once.values)) <= 1e-8

    def test_rejects_nonpositive_bandwidth(self):
        with pytest.raises(DataError):
            detrend(make_ds(np.zeros((3, 1))), 0.0)


class TestLogReturns:
    def test_exponential_prices(self):
        ds = make_ds([[1.0], [np.e], [np.e ** 2]])
        out = log_returns(ds)
        assert np.allclose(out.values[:, 0], [1.0, 1.0])

    def test_constant_prices(self):
        out = log_returns(make_ds(np.full((4, 2), 3.0)))
        assert np.allclose(out.values, 0.0)

    def test_down_move(self):
        out = log_returns(make_ds([[2.0], [4.0], [2.0]]))
        assert np.allclose(out.values[:, 0], [np.log(2.0), -np.log(2.0)])

    def test_row_count_names_grid(self):
        ds = make_ds(np.full((5, 2), 2.0), names=("a", "b"))
        out = log_returns(ds)
        assert out.n_obs == 4
        assert out.names == ("a", "b")
        assert np.allclose(out.grid.times, np.arange(4) / 3)

    def test_rejects_nonpositive(self):
        with pytest.raises(DataError):
            log_returns(make_ds([[1.0], [0.0]]))


class TestStandardize:
    def test_sd_two_halved(self):
        rng = np.random.default_rng(0)
        col = rng.normal(size=40)
        col = (col - col.mean()) / col.std(ddof=1) * 2.0
        out = standardize(make_ds(col[:, None]))
        assert np.allclose(out.values[:, 0], col / 2.0)

    def test_scale_factors(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=30)
        base = (base - base.mean()) / base.std(ddof=1)
        vals = np.column_stack([base * 0.5, base * 4.0])
        out = standardize(make_ds(vals))
        assert np.allclose(out.values[:, 0], vals[:, 0] * 2.0)
        assert np.allclose(out.values[:, 1], vals[:, 1] * 0.25)

    def test_unit_sd_output(self):
        rng = np.random.default_rng(2)
        out = standardize(make_ds(rng.normal(size=(25, 4))))
        assert np.allclose(out.values.std(axis=0, ddof=1), 1.0, atol=1e-12)

    def test_degenerate_column_named(self):
        vals = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
        with pytest.raises(DegenerateColumnError) as err:
            standardize(make_ds(vals, names=("ok", "flat")))
        assert err.value.column == "flat"


class TestLoadCsv(object):
    def test_with_time_column(self, tmp_path):
        fp = tmp_path / "d.csv"
        fp.write_text("time,a,b\n0.0,1,2\n0.5,3,4\n1.0,5,6\n")
        ds = load_csv(fp)
        assert ds.names == ("a", "b")
        assert np.allclose(ds.grid.times, [0.0, 0.5, 1.0])
        assert np.allclose(ds.values, [[1, 2], [3, 4], [5, 6]])

    def test_without_time_column(self, tmp_path):
        fp = tmp_path / "d.csv"
        fp.write_text("a,b\n1,2\n3,4\n5,6\n")
        ds = load_csv(fp)
        assert np.allclose(ds.grid.times, [0.0, 0.5, 1.0])

    def test_bad_cell(self, tmp_path):
        fp = tmp_path / "d.csv"
        fp.write_text("a\n1\nfoo\n")
        with pytest.raises(DataError):
            load_csv(fp)


@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 10_000))
def test_log_returns_row_count_property(n, p, seed):
    rng = np.random.default_rng(seed)
    prices = np.exp(rng.normal(size=(n, p)))
    out = log_returns(make_ds(prices))
    assert out.n_obs == n - 1
    assert out.grid.times[0] == 0.0
    assert out.grid.times[-1] <= 1.0
