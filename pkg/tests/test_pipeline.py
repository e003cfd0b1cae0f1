"""Resampling, joins, window features, splits, CV, L-curve and metrics."""
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rtlearn.exceptions import DataError, InsufficientDataError
from rtlearn.pipeline import (
    Series,
    TimeSeriesDataset,
    build_design_matrix,
    compute_metrics,
    fill_short_gaps,
    greedy_lcurve,
    join_weather,
    kfold_cv,
    kfold_indices,
    lcurve_tune,
    make_forecaster,
    menger_curvature,
    resample_hourly,
    split_half,
)
from rtlearn.pipeline.features import DesignMatrix

from conftest import synth_dataset

T0 = np.datetime64("2022-03-01T00:00:00", "s")
HOUR = np.timedelta64(3600, "s")


def hourly(n, start=T0, fn=None, **channels):
    ts = start + np.arange(n) * HOUR
    base = np.arange(n, dtype=float) if fn is None else fn(np.arange(n))
    vals = {c: channels.get(c, base) for c in ("load", "temperature", "humidity")}
    return TimeSeriesDataset(ts, **vals)


class TestResample:
    def test_constant(self):
        ts = T0 + np.arange(0, 3 * 3600, 600).astype("timedelta64[s]")
        out = resample_hourly(Series(ts, np.full(len(ts), 2.5)))
        np.testing.assert_array_equal(out.values, [2.5, 2.5, 2.5])

    def test_one_minute_mean(self):
        ts = T0 + np.arange(60).astype("timedelta64[m]")
        out = resample_hourly(Series(ts, np.arange(1.0, 61.0)))
        assert len(out) == 1 and out.values[0] == 30.5

    def test_day_of_minutes(self):
        ts = T0 + np.arange(1440).astype("timedelta64[m]")
        out = resample_hourly(Series(ts, np.ones(1440)))
        assert len(out) == 24

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 20 * 3600 - 1), min_size=1, max_size=80, unique=True))
    def test_gaps_marked_exactly(self, offsets):
        offsets = np.sort(np.asarray(offsets))
        ts = T0 + offsets.astype("timedelta64[s]")
        out = resample_hourly(Series(ts, np.ones(len(ts))))
        buckets = set(int(o) // 3600 for o in offsets)
        first = min(buckets)
        expected = [(first + i) not in buckets for i in range(len(out))]
        np.testing.assert_array_equal(np.isnan(out.values), expected)

    def test_idempotent(self):
        ds = hourly(30)
        again = resample_hourly(ds)
        np.testing.assert_array_equal(again.load, ds.load)
        np.testing.assert_array_equal(again.timestamps, ds.timestamps)

    def test_empty(self):
        with pytest.raises(DataError):
            resample_hourly(Series(np.array([], dtype="datetime64[s]"), []))


class TestJoin:
    def s(self, start_h, n, name="x"):
        return Series(T0 + (start_h + np.arange(n)) * HOUR, np.arange(n, dtype=float), name)

    def test_identical_ranges(self):
        ds = join_weather(self.s(0, 10), self.s(0, 10), self.s(0, 10))
        assert len(ds) == 10

    def test_one_hour_overlap(self):
        ds = join_weather(self.s(0, 5), self.s(4, 5), self.s(-3, 8))
        assert len(ds) == 1 and ds.timestamps[0] == T0 + 4 * HOUR

    def test_empty_intersection(self):
        with pytest.raises(DataError):
            join_weather(self.s(0, 3), self.s(5, 3), self.s(0, 10))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(-50, 50), st.integers(1, 60)), min_size=3, max_size=3))
    def test_interval_oracle(self, spans):
        lo = max(a for a, _ in spans)
        hi = min(a + n - 1 for a, n in spans)
        series = [self.s(a, n) for a, n in spans]
        if hi < lo:
            with pytest.raises(DataError):
                join_weather(*series)
            return
        ds = join_weather(*series)
        assert len(ds) == hi - lo + 1
        assert ds.timestamps[0] == T0 + lo * HOUR
        # values are positioned by timestamp
        np.testing.assert_array_equal(ds.load, np.arange(lo, hi + 1) - spans[0][0])

    def test_missing_marks_preserved(self):
        a = self.s(0, 6)
        a.values[2] = np.nan
        ds = join_weather(a, self.s(0, 6), self.s(0, 6))
        assert np.isnan(ds.load[2]) and not np.isnan(ds.temperature[2])


class TestGapFill:
    def test_short_gap_interpolated(self):
        load = np.arange(10, dtype=float)
        load[3:6] = np.nan
        out = fill_short_gaps(hourly(10, load=load), 3)
        np.testing.assert_allclose(out.load, np.arange(10))

    def test_long_gap_kept(self):
        load = np.arange(10, dtype=float)
        load[2:6] = np.nan
        out = fill_short_gaps(hourly(10, load=load), 3)
        assert np.isnan(out.load[2:6]).all()

    def test_edges_kept(self):
        load = np.arange(6, dtype=float)
        load[0] = np.nan
        assert np.isnan(fill_short_gaps(hourly(6, load=load)).load[0])


class TestDesignMatrix:
    def test_counting(self):
        dm = build_design_matrix(hourly(72), 2)
        assert dm.n == 1 and dm.d == 144

    def test_constant_load(self):
        dm = build_design_matrix(hourly(24 * 6, load=np.full(144, 1.5)), 3)
        np.testing.assert_allclose(dm.l, 36.0)

    @pytest.mark.parametrize("w", [2, 5, 7])
    def test_slicing_oracle(self, w, rng):
        n_days = 12
        ds = hourly(24 * n_days, load=rng.random(24 * n_days), temperature=rng.random(24 * n_days), humidity=rng.random(24 * n_days))
        dm = build_design_matrix(ds, w)
        assert dm.n == n_days - w
        for col, t in enumerate(dm.day_index):
            hours = slice(24 * (t - w), 24 * t)
            expect = np.concatenate([ds.load[hours], ds.temperature[hours], ds.humidity[hours]])
            np.testing.assert_array_equal(dm.X[:, col], expect)
            assert dm.l[col] == pytest.approx(ds.load[24 * t:24 * (t + 1)].sum(), rel=1e-14)
            assert dm.date_of(t) == T0 + 24 * t * HOUR

    def test_daily_mode(self):
        dm = build_design_matrix(hourly(24 * 5, load=np.ones(120)), 2, mode="daily")
        assert dm.d == 6
        np.testing.assert_allclose(dm.X[:2, 0], 24.0)

    def test_gap_segments_windows(self):
        load = np.ones(24 * 10)
        load[24 * 4 + 5] = np.nan  # day 4 incomplete
        dm = build_design_matrix(hourly(240, load=load), 2)
        for t in dm.day_index:
            assert not (t - 2 <= 4 <= t)
        with pytest.raises(DataError):
            build_design_matrix(hourly(240, load=load), 2, on_gap="raise")

    def test_day_offset(self):
        ds = hourly(24 * 5 + 6, load=np.arange(126, dtype=float))
        dm = build_design_matrix(ds, 2, day_offset_hours=6)
        assert dm.X[0, 0] == 6.0

    def test_insufficient(self):
        with pytest.raises(InsufficientDataError):
            build_design_matrix(hourly(48), 2)

    @pytest.mark.parametrize("w", [1, 8])
    def test_window_bounds(self, w):
        with pytest.raises(DataError):
            build_design_matrix(hourly(24 * 10), w)

    def test_persistence_uses_last_day(self):
        dm = build_design_matrix(hourly(24 * 6, load=np.repeat(np.arange(6.0), 24)), 3)
        np.testing.assert_allclose(dm.last_day_load(), 24 * (dm.day_index - 1))


def dm_of(n):
    return DesignMatrix(np.zeros((2, n)), np.arange(n, dtype=float), np.arange(n), 2)


class TestSplits:
    @pytest.mark.parametrize("n, sizes", [(4, (2, 2)), (5, (3, 2)), (2, (1, 1))])
    def test_split_sizes(self, n, sizes):
        tr, te = split_half(dm_of(n))
        assert (tr.n, te.n) == sizes

    @given(st.integers(2, 500))
    def test_split_temporal(self, n):
        tr, te = split_half(dm_of(n))
        assert tr.day_index.max() < te.day_index.min()

    def test_split_too_small(self):
        with pytest.raises(InsufficientDataError):
            split_half(dm_of(1))

    def test_fold_sizes(self):
        assert [len(b) for b in kfold_indices(10, 5)] == [2] * 5

    @given(st.integers(5, 300), st.integers(2, 5))
    def test_folds_partition(self, n, folds):
        blocks = kfold_indices(n, folds)
        np.testing.assert_array_equal(np.sort(np.concatenate(blocks)), np.arange(n))
        assert all(np.all(np.diff(b) == 1) for b in blocks)

    def test_constant_model_equal_scores(self):
        res = kfold_cv(DesignMatrix(np.zeros((1, 10)), np.ones(10), np.arange(10), 2), lambda tr, va: float(np.mean(va.l - 1.0) ** 2))
        assert len(set(res.scores)) == 1

    def test_cv_never_sees_outside(self):
        dm = dm_of(20)
        seen = []
        kfold_cv(dm, lambda tr, va: seen.append((set(tr.day_index), set(va.day_index))) or 0.0)
        for tr, va in seen:
            assert not tr & va and tr | va == set(range(20))

    def test_too_few_for_folds(self):
        with pytest.raises(InsufficientDataError):
            kfold_indices(3, 5)


class TestLCurve:
    def test_planted_corner(self):
        grid = np.logspace(-3, 1, 9)
        x = np.log(grid)
        corner = x[5]
        res = np.exp(np.where(x < corner, 0.02 * (x - corner), 2.0 * (x - corner)))
        pen = np.exp(np.where(x < corner, -2.0 * (x - corner), -0.02 * (x - corner)))
        table = dict(zip(grid, zip(res, pen)))
        out = lcurve_tune(grid, lambda g: table[g])
        assert out.index == 5 and not out.degenerate

    def test_three_points_pick_middle(self):
        out = lcurve_tune([0.1, 1.0, 10.0], cornered)
        assert out.index == 1 and not out.degenerate

    def test_collinear_falls_back(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = lcurve_tune([0.1, 1.0, 10.0, 100.0, 1000.0], lambda g: (g, 1.0 / g))
        assert out.degenerate and out.index == 2 and caught

    @pytest.mark.parametrize("grid", [[0.1, 1.0], [1.0, 0.5, 2.0], [-1.0, 1.0, 2.0]])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            lcurve_tune(grid, lambda g: (1.0, 1.0))

    def test_menger_circle(self):
        t = np.linspace(0, np.pi / 2, 5)
        kappa = menger_curvature(3 * np.cos(t), 3 * np.sin(t))
        np.testing.assert_allclose(np.abs(kappa[1:-1]), 1 / 3, rtol=1e-12)
        assert np.isnan(kappa[0]) and np.isnan(kappa[-1])

    def test_greedy_order(self):
        calls = []

        def ev_lam(lam):
            calls.append(("lam", lam))
            return cornered(lam)

        def ev_gamma(lam, g, mu):
            calls.append(("gamma", lam, mu))
            return cornered(10 * g)

        out = greedy_lcurve([0.1, 1.0, 10.0], [0.01, 0.1, 1.0], ev_lam, ev_gamma, mu=1.0)
        assert (out.lam.selected, out.gamma.selected) == (1.0, 0.1)
        assert [c[0] for c in calls] == ["lam"] * 3 + ["gamma"] * 3
        assert all(c[1] == out.lam.selected and c[2] == 1.0 for c in calls[3:])


def cornered(g):
    """Residual flat then steep, penalty steep then flat: corner at g = 1."""
    return (1.0 + g**3, 1.0 + g**-3)


def loop_metrics(f, a, eps=1e-6):
    n = len(f)
    mae = sum(abs(f[i] - a[i]) for i in range(n)) / n
    rmse = (sum((f[i] - a[i]) ** 2 for i in range(n)) / n) ** 0.5
    keep = [i for i in range(n) if abs(a[i]) > eps]
    mape = 100 * sum(abs(f[i] - a[i]) / abs(a[i]) for i in keep) / len(keep) if keep else None
    return mae, rmse, mape


class TestMetrics:
    def test_perfect(self):
        r = compute_metrics([1.0, 2.0], [1.0, 2.0])
        assert (r.mae, r.rmse, r.mape) == (0.0, 0.0, 0.0)

    def test_single(self):
        r = compute_metrics([110.0], [100.0])
        assert r.mae == pytest.approx(10) and r.rmse == pytest.approx(10) and r.mape == pytest.approx(10)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 40).flatmap(lambda n: st.tuples(
        arrays(float, n, elements=st.floats(-1e3, 1e3)), arrays(float, n, elements=st.floats(-1e3, 1e3)))))
    def test_loop_oracle(self, pair):
        f, a = pair
        r = compute_metrics(f, a)
        mae, rmse, mape = loop_metrics(f, a)
        assert r.mae == pytest.approx(mae, rel=1e-12, abs=1e-12)
        assert r.rmse == pytest.approx(rmse, rel=1e-12, abs=1e-12)
        assert r.rmse >= r.mae
        assert (r.mape is None) == (mape is None)
        if mape is not None:
            assert r.mape == pytest.approx(mape, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, 12, elements=st.floats(0.5, 100)), arrays(float, 12, elements=st.floats(0.5, 100)), st.floats(1e-3, 1e3))
    def test_scale_covariance(self, f, a, c):
        r, s = compute_metrics(f, a), compute_metrics(c * f, c * a)
        assert s.mae == pytest.approx(c * r.mae, rel=1e-12)
        assert s.rmse == pytest.approx(c * r.rmse, rel=1e-12)
        assert s.mape == pytest.approx(r.mape, rel=1e-12)

    def test_zero_guard(self):
        r = compute_metrics([1.0, 2.0, 3.0], [0.0, 2.0, 4.0])
        assert r.n_excluded == 1 and r.mape == pytest.approx(12.5)
        assert compute_metrics([1.0], [0.0]).mape is None

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            compute_metrics([1.0, 2.0], [1.0])
        with pytest.raises(DataError):
            compute_metrics([], [])


@pytest.fixture(scope="module")
def split():
    return split_half(build_design_matrix(synth_dataset(30, seed=4), 2))


class TestForecasters:
    @pytest.mark.parametrize("kind", ["r2tl", "rtl", "tl_ridge", "ridge_raw", "persistence"])
    def test_each_kind_predicts(self, split, kind):
        tr, te = split
        out = make_forecaster(kind, max_iters=3).fit(tr).predict(te, contiguous=True)
        assert out.shape == (te.n,) and np.all(np.isfinite(out))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            make_forecaster("lstm")

    def test_predict_before_fit(self, split):
        with pytest.raises(RuntimeError):
            make_forecaster("rtl").predict(split[1])
