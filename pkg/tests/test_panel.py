import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basisrisk.exceptions import (
    DegenerateGroupError,
    MissingHoursError,
    MissingPriceError,
    MissingStatsError,
)
from basisrisk.panel import (
    FarmSpec,
    check_group,
    daily_farm_losses,
    daily_reference_deltas,
    group_sigma,
    hourly_production_delta,
    hourly_value,
    monthly_stats,
    standardize,
)
from basisrisk.solar import GeoPoint, PanelGeometry, PvParams

EQUATOR = GeoPoint(0.0, 0.0)


def _farm(scheme="market", tariff=0.0, tilt=25.0):
    return FarmSpec(
        farm_id="F1",
        point=EQUATOR,
        panel=PanelGeometry(tilt, 180.0),
        pv=PvParams(capacity_dc_mw=10.0),
        scheme=scheme,
        tariff_eur_mwh=tariff,
    )


def _weather(dates, ssrd_err=0.0, t_err=0.0):
    """Hourly frame at the equator: flat 400 W/m2 while the sun is up."""
    idx = pd.DatetimeIndex(
        np.concatenate([np.datetime64(d, "s") + np.arange(24) * np.timedelta64(1, "h")
                        for d in dates])
    )
    hours = idx.hour.to_numpy()
    day = (hours >= 7) & (hours <= 16)  # inside the (6, 17) window, margin for midpoints
    ssrd_obs = np.where(day, 400.0, 0.0)
    wx = pd.DataFrame(
        {
            "ssrd_fc": ssrd_obs + np.where(day, ssrd_err, 0.0),
            "ssrd_obs": ssrd_obs,
            "dni_fc": np.nan,
            "dni_obs": np.nan,
            "t2m_fc": 25.0 + t_err,
            "t2m_obs": 25.0,
        },
        index=idx,
    )
    return wx


class TestHourlyChain:
    def test_identical_runs_have_zero_delta(self):
        wx = _weather(["2020-03-20"])
        out = hourly_production_delta(wx, _farm())
        assert np.allclose(out["dP_mwh"], 0.0)
        assert (out["p_obs_mwh"] >= 0.0).all()
        assert out["p_obs_mwh"].max() > 0.5  # 10 MW plant under 400 W/m2

    def test_positive_forecast_error_gives_shortfall(self):
        wx = _weather(["2020-03-20"], ssrd_err=50.0)
        out = hourly_production_delta(wx, _farm())
        day = out["p_obs_mwh"] > 0
        assert (out.loc[day, "dP_mwh"] > 0).all()

    def test_supplied_dni_bypasses_erbs(self):
        wx = _weather(["2020-03-20"])
        wx["dni_fc"] = 300.0
        wx["dni_obs"] = 300.0
        out_given = hourly_production_delta(wx, _farm())
        wx2 = wx.copy()
        wx2["dni_fc"] = np.nan
        wx2["dni_obs"] = np.nan
        out_erbs = hourly_production_delta(wx2, _farm())
        mid = out_given["p_obs_mwh"].idxmax()
        assert out_given.loc[mid, "p_obs_mwh"] != pytest.approx(
            out_erbs.loc[mid, "p_obs_mwh"], rel=1e-3
        )


class TestValuation:
    def test_partial_takes_hourly_max(self):
        dp = pd.Series([1.0], index=pd.DatetimeIndex(["2020-01-01T12:00:00"]))
        prices = pd.Series([50.0], index=dp.index)
        out = hourly_value(dp, prices, "partial", tariff=60.0)
        assert out.iloc[0] == pytest.approx(60.0)

    def test_partial_prefers_market_when_higher(self):
        dp = pd.Series([1.0], index=pd.DatetimeIndex(["2020-01-01T12:00:00"]))
        prices = pd.Series([75.0], index=dp.index)
        out = hourly_value(dp, prices, "partial", tariff=60.0)
        assert out.iloc[0] == pytest.approx(75.0)

    def test_feedin_ignores_prices(self):
        dp = pd.Series([2.0], index=pd.DatetimeIndex(["2020-01-01T12:00:00"]))
        out = hourly_value(dp, None, "feedin", tariff=80.0)
        assert out.iloc[0] == pytest.approx(160.0)

    def test_market_requires_prices(self):
        dp = pd.Series([1.0], index=pd.DatetimeIndex(["2020-01-01T12:00:00"]))
        with pytest.raises(MissingPriceError):
            hourly_value(dp, None, "market", tariff=0.0)
        with pytest.raises(MissingPriceError):
            hourly_value(dp, pd.Series(dtype=float), "market", tariff=0.0)

    def test_scheme_validation(self):
        with pytest.raises(ValueError):
            _farm(scheme="subsidy")
        with pytest.raises(ValueError):
            _farm(scheme="feedin", tariff=0.0)


class TestDailyAggregation:
    def test_reference_deltas_window_sums(self):
        wx = _weather(["2020-03-20", "2020-03-21"])
        wx["ssrd_fc"] = wx["ssrd_obs"] + 1.0  # constant +1 across all 24 hours
        wx["dni_fc"] = 0.0
        wx["dni_obs"] = 0.0
        wx["t2m_fc"] = wx["t2m_obs"] + 2.0
        out = daily_reference_deltas(wx, EQUATOR)
        # equator window is (6, 17): 12 hours
        assert len(out) == 2
        assert out["dSSRD"].iloc[0] == pytest.approx(12.0)
        assert out["dDNI"].iloc[0] == pytest.approx(0.0)
        assert out["dT"].iloc[0] == pytest.approx(2.0)

    def test_missing_window_hour_raises(self):
        wx = _weather(["2020-03-20"])
        wx = wx.drop(wx.index[10])  # 10:00 is inside the daylight window
        with pytest.raises(MissingHoursError):
            daily_reference_deltas(wx, EQUATOR)

    def test_polar_dates_are_skipped(self):
        idx = pd.DatetimeIndex(
            np.datetime64("2020-12-21T00:00:00") + np.arange(24) * np.timedelta64(1, "h")
        )
        wx = pd.DataFrame(
            {c: 0.0 for c in ["ssrd_fc", "ssrd_obs", "dni_fc", "dni_obs", "t2m_fc", "t2m_obs"]},
            index=idx,
        )
        out = daily_reference_deltas(wx, GeoPoint(80.0, 0.0))
        assert len(out) == 0

    def test_farm_losses_market_scheme(self):
        wx = _weather(["2020-03-20"], ssrd_err=40.0)
        prices = pd.Series(50.0, index=wx.index)
        out = daily_farm_losses(wx, _farm(), prices)
        assert len(out) == 1
        hourly = hourly_production_delta(wx, _farm())
        expected_dp = hourly["dP_mwh"].sum()  # all hours outside window have dP 0 here
        assert out["dP_mwh"].iloc[0] == pytest.approx(expected_dp)
        assert out["loss_eur"].iloc[0] == pytest.approx(50.0 * expected_dp)
        assert out["dP_mwh"].iloc[0] > 0

    def test_farm_losses_feedin_needs_no_prices(self):
        wx = _weather(["2020-03-20"], ssrd_err=40.0)
        out = daily_farm_losses(wx, _farm(scheme="feedin", tariff=80.0), prices=None)
        assert out["loss_eur"].iloc[0] == pytest.approx(80.0 * out["dP_mwh"].iloc[0])


class TestStationarization:
    def test_three_point_example(self):
        idx = pd.DatetimeIndex(["2020-06-01", "2020-06-02", "2020-06-03"])
        daily = pd.DataFrame({"x": [1.0, 2.0, 3.0]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        assert stats.loc[(2020, 6), "x_mu"] == pytest.approx(2.0)
        assert stats.loc[(2020, 6), "x_sigma"] == pytest.approx(1.0)
        out = standardize(daily, stats, ["x"])
        assert out["x_std"].tolist() == pytest.approx([-1.0, 0.0, 1.0])

    def test_separate_groups_get_separate_stats(self):
        idx = pd.DatetimeIndex(["2020-06-01", "2020-06-02", "2021-06-01", "2021-06-02"])
        daily = pd.DataFrame({"x": [0.0, 2.0, 10.0, 30.0]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        assert stats.loc[(2020, 6), "x_mu"] == pytest.approx(1.0)
        assert stats.loc[(2021, 6), "x_mu"] == pytest.approx(20.0)

    def test_degenerate_group_dropped(self):
        idx = pd.DatetimeIndex(["2020-06-01", "2020-06-02", "2020-07-01", "2020-07-02"])
        daily = pd.DataFrame({"x": [1.0, 1.0, 0.0, 4.0]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        assert np.isnan(stats.loc[(2020, 6), "x_sigma"])
        out = standardize(daily, stats, ["x"])
        assert out["x_std"].isna().sum() == 2
        with pytest.raises(DegenerateGroupError):
            check_group(stats, 2020, 6, "x")
        check_group(stats, 2020, 7, "x")

    def test_single_day_group_dropped(self):
        idx = pd.DatetimeIndex(["2020-06-01"])
        daily = pd.DataFrame({"x": [5.0]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        assert np.isnan(stats.loc[(2020, 6), "x_sigma"])

    def test_group_sigma_lookup(self):
        idx = pd.DatetimeIndex(["2020-06-01", "2020-06-02", "2020-06-03"])
        daily = pd.DataFrame({"x": [1.0, 2.0, 3.0]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        assert group_sigma(stats, pd.Timestamp("2020-06-15"), "x") == pytest.approx(1.0)
        with pytest.raises(MissingStatsError):
            group_sigma(stats, pd.Timestamp("2020-07-01"), "x")

    @given(
        values=st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=40),
        scale=st.floats(0.1, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, values, scale):
        values = [v * scale for v in values]
        idx = pd.DatetimeIndex(pd.Timestamp("2020-06-01") + pd.to_timedelta(range(len(values)), "D"))
        idx = idx[idx.month == 6]
        daily = pd.DataFrame({"x": values[: len(idx)]}, index=idx)
        stats = monthly_stats(daily, ["x"])
        if np.isnan(stats["x_sigma"]).any():
            return  # degenerate draw
        out = standardize(daily, stats, ["x"])
        mu = stats.loc[(2020, 6), "x_mu"]
        sigma = stats.loc[(2020, 6), "x_sigma"]
        back = out["x_std"] * sigma + mu
        np.testing.assert_allclose(back, daily["x"], rtol=1e-9, atol=1e-9)
        # standardized columns have mean ~0 and sample sd ~1 within the group
        assert out["x_std"].mean() == pytest.approx(0.0, abs=1e-9)
        assert out["x_std"].std(ddof=1) == pytest.approx(1.0, rel=1e-9)
