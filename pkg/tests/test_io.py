import numpy as np
import pandas as pd
import pytest

from basisrisk import io
from basisrisk.exceptions import (
    MissingPrerequisiteError,
    MissingStatsError,
    SchemaError,
)
from basisrisk.glm import fit_gaussian
from basisrisk.index import IndexSpec
from basisrisk.panel import group_sigma, monthly_stats
from basisrisk.scenario import CopulaFit, MarginalFit


def _weather_frame(hours=48, location="REF"):
    stamps = pd.date_range("2020-06-01", periods=hours, freq="h")
    rng = np.random.default_rng(0)
    base = np.clip(300.0 * np.sin(np.arange(hours) / 24 * 2 * np.pi), 0, None)
    return pd.DataFrame(
        {
            "timestamp": stamps,
            "location_id": location,
            "ssrd_fc": base + rng.uniform(0, 10, hours),
            "ssrd_obs": base,
            "dni_fc": base * 0.5,
            "dni_obs": base * 0.5,
            "t2m_fc": 15.0,
            "t2m_obs": 15.0,
        }
    )


def _farm_frame():
    return pd.DataFrame(
        {
            "farm_id": ["a1", "b2"],
            "lat": [48.0, 48.5],
            "lon": [11.0, 11.5],
            "capacity_mw": [10.0, 20.0],
            "tilt_deg": [25.0, 30.0],
            "azimuth_deg": [180.0, 180.0],
            "scheme": ["market", "feedin"],
            "tariff_eur_mwh": [0.0, 80.0],
        }
    )


class TestWeather:
    def test_round_trip(self, tmp_path):
        df = _weather_frame()
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        back = io.read_weather(path)
        assert list(back.columns) == io.WEATHER_COLUMNS
        np.testing.assert_allclose(back["ssrd_fc"], df["ssrd_fc"])
        assert (back["timestamp"] == df["timestamp"]).all()

    def test_missing_file_is_prerequisite_error(self, tmp_path):
        with pytest.raises(MissingPrerequisiteError):
            io.read_weather(tmp_path / "nope.csv")

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "weather.csv"
        _weather_frame().drop(columns=["t2m_obs"]).to_csv(path, index=False)
        with pytest.raises(SchemaError, match="header"):
            io.read_weather(path)

    def test_non_numeric_names_line(self, tmp_path):
        df = _weather_frame(hours=5)
        df["ssrd_obs"] = df["ssrd_obs"].astype(object)
        df.loc[2, "ssrd_obs"] = "oops"
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        with pytest.raises(SchemaError, match=r"ssrd_obs.*\[4\]"):
            io.read_weather(path)

    def test_negative_irradiance_rejected(self, tmp_path):
        df = _weather_frame(hours=5)
        df.loc[1, "ssrd_fc"] = -3.0
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        with pytest.raises(SchemaError, match="negative ssrd_fc"):
            io.read_weather(path)

    def test_duplicate_rows_rejected(self, tmp_path):
        df = pd.concat([_weather_frame(hours=4)] * 2, ignore_index=True)
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        with pytest.raises(SchemaError, match="duplicate"):
            io.read_weather(path)

    def test_nan_dni_allowed(self, tmp_path):
        df = _weather_frame(hours=5)
        df["dni_fc"] = np.nan
        df["dni_obs"] = np.nan
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        assert io.read_weather(path)["dni_fc"].isna().all()

    def test_location_block_sorted_and_indexed(self, tmp_path):
        df = pd.concat(
            [_weather_frame(hours=6, location="REF"),
             _weather_frame(hours=6, location="f0")],
            ignore_index=True,
        ).iloc[::-1]
        path = tmp_path / "weather.csv"
        io.write_weather(df, path)
        block = io.weather_for_location(io.read_weather(path), "f0")
        assert block.index.is_monotonic_increasing
        assert "location_id" not in block.columns
        with pytest.raises(SchemaError, match="no weather rows"):
            io.weather_for_location(io.read_weather(path), "ghost")


class TestFarms:
    def test_round_trip_to_specs(self, tmp_path):
        path = tmp_path / "farms.csv"
        io.write_farms(_farm_frame(), path)
        farms = io.read_farms(path)
        assert [f.farm_id for f in farms] == ["a1", "b2"]
        assert farms[0].scheme == "market"
        assert farms[1].tariff_eur_mwh == 80.0
        assert farms[0].pv.capacity_dc_mw == 10.0

    def test_unknown_scheme_names_line(self, tmp_path):
        df = _farm_frame()
        df.loc[1, "scheme"] = "barter"
        path = tmp_path / "farms.csv"
        io.write_farms(df, path)
        with pytest.raises(SchemaError, match="line 3.*barter"):
            io.read_farms(path)

    def test_duplicate_farm_id(self, tmp_path):
        df = _farm_frame()
        df.loc[1, "farm_id"] = "a1"
        path = tmp_path / "farms.csv"
        io.write_farms(df, path)
        with pytest.raises(SchemaError, match="duplicate farm_id"):
            io.read_farms(path)

    def test_invalid_geometry_wrapped_with_line(self, tmp_path):
        df = _farm_frame()
        df.loc[0, "lat"] = 95.0
        path = tmp_path / "farms.csv"
        io.write_farms(df, path)
        with pytest.raises(SchemaError, match="line 2"):
            io.read_farms(path)


class TestPrices:
    def test_round_trip(self, tmp_path):
        stamps = pd.date_range("2020-01-01", periods=24, freq="h")
        df = pd.DataFrame(
            {"timestamp": stamps, "price_eur_mwh": np.linspace(20, 90, 24)}
        )
        path = tmp_path / "prices.csv"
        io.write_prices(df, path)
        series = io.read_prices(path)
        assert series.index.equals(stamps)
        np.testing.assert_allclose(series.to_numpy(), df["price_eur_mwh"])

    def test_duplicate_timestamp_rejected(self, tmp_path):
        stamps = pd.DatetimeIndex(["2020-01-01T00:00:00"] * 2)
        df = pd.DataFrame({"timestamp": stamps, "price_eur_mwh": [10.0, 11.0]})
        path = tmp_path / "prices.csv"
        io.write_prices(df, path)
        with pytest.raises(SchemaError, match="duplicate timestamps"):
            io.read_prices(path)


class TestPanels:
    def _losses(self):
        dates = pd.DatetimeIndex(["2020-01-01", "2020-01-02"])
        return pd.DataFrame(
            {
                "farm_id": ["f0", "f0"],
                "date": dates,
                "dP_mwh": [1.5, -0.5],
                "dSSRD": [120.0, -40.0],
                "dDNI": [80.0, -10.0],
                "dT": [0.0, 0.0],
                "loss_eur": [90.0, -30.0],
                "X_std": [1.1, -0.4],
            }
        )

    def test_losses_round_trip(self, tmp_path):
        path = tmp_path / "losses.csv"
        io.write_losses(self._losses(), path)
        back = io.read_losses(path)
        np.testing.assert_allclose(back["X_std"], [1.1, -0.4])
        assert back["date"].dt.strftime("%Y-%m-%d").tolist() == [
            "2020-01-01", "2020-01-02",
        ]

    def test_panel_round_trip_drops_x_std(self, tmp_path):
        path = tmp_path / "panel.csv"
        io.write_panel(self._losses(), path)
        back = io.read_panel(path)
        assert list(back.columns) == io.PANEL_COLUMNS
        with pytest.raises(SchemaError, match="header"):
            io.read_losses(path)

    def test_covariates_round_trip(self, tmp_path):
        dates = pd.DatetimeIndex(["2020-01-01", "2020-01-02"])
        cov = pd.DataFrame({"Y1": [0.3, -1.2], "Y2": [0.8, 0.1]}, index=dates)
        cov.index.name = "date"
        path = tmp_path / "covariates.csv"
        io.write_covariates(cov, path)
        back = io.read_covariates(path)
        pd.testing.assert_frame_equal(back, cov)

    def test_index_series_round_trip_bool_flag(self, tmp_path):
        dates = pd.DatetimeIndex(["2020-01-01", "2020-01-02"])
        series = pd.DataFrame(
            {"Z": [0.4, 1.9], "above_threshold": [False, True]}, index=dates
        )
        series.index.name = "date"
        path = tmp_path / "index.csv"
        io.write_index_series(series, path)
        back = io.read_index_series(path)
        assert back["above_threshold"].dtype == bool
        assert back["above_threshold"].tolist() == [False, True]

    def test_sharing_round_trip(self, tmp_path):
        df = pd.DataFrame(
            {
                "date": pd.DatetimeIndex(["2020-01-01"] * 2),
                "farm_id": ["f0", "f1"],
                "eps_std": [0.4, -0.4],
                "delta_std": [0.1, -0.1],
                "eps_real": [4.0, -4.0],
                "delta_real": [1.0, -1.0],
            }
        )
        path = tmp_path / "sharing.csv"
        io.write_sharing(df, path)
        back = io.read_sharing(path)
        np.testing.assert_allclose(back["delta_real"], [1.0, -1.0])


class TestMonthlyStats:
    def test_long_wide_round_trip_feeds_group_sigma(self, tmp_path):
        idx = pd.date_range("2020-01-01", periods=90, freq="D")
        daily = pd.DataFrame(
            {"dP_mwh": np.sin(np.arange(90)) * 3.0 + 1.0}, index=idx
        )
        wide = monthly_stats(daily, ["dP_mwh"])
        rows = io.stats_to_rows(wide, "f0", ["dP_mwh"])
        path = tmp_path / "stats.csv"
        io.write_monthly_stats(rows, path)
        back = io.stats_frame(io.read_monthly_stats(path), "f0")
        want = group_sigma(wide, pd.Timestamp("2020-02-15"), "dP_mwh")
        got = group_sigma(back, pd.Timestamp("2020-02-15"), "dP_mwh")
        assert got == pytest.approx(want, rel=1e-12)

    def test_unknown_entity_raises(self, tmp_path):
        rows = pd.DataFrame(
            [["f0", "dP_mwh", 2020, 1, 0.0, 1.0]], columns=io.STATS_COLUMNS
        )
        with pytest.raises(MissingStatsError):
            io.stats_frame(rows, "ghost")

    def test_degenerate_months_left_out(self):
        idx = pd.date_range("2020-01-01", periods=40, freq="D")
        daily = pd.DataFrame({"dP_mwh": np.r_[np.zeros(31), np.arange(9.0)]},
                             index=idx)
        wide = monthly_stats(daily, ["dP_mwh"])
        rows = io.stats_to_rows(wide, "f0", ["dP_mwh"])
        assert rows["month"].tolist() == [2]


class TestJsonArtifacts:
    def test_index_spec_round_trip(self, tmp_path):
        spec = IndexSpec(
            weights=np.array([0.47, 0.16]),
            z0=0.62,
            quantile=0.8,
            reference_location="REF",
            seed=3,
            objective_value=1.25,
        )
        path = tmp_path / "index.json"
        io.write_index_spec(spec, path)
        back = io.read_index_spec(path)
        np.testing.assert_array_equal(back.weights, spec.weights)
        assert back.z0 == spec.z0
        assert back.reference_location == "REF"
        assert back.seed == 3

    def test_index_spec_missing_key(self, tmp_path):
        path = tmp_path / "index.json"
        io.write_json({"weights": [1.0, 0.0]}, path)
        with pytest.raises(SchemaError, match="missing keys"):
            io.read_index_spec(path)

    def test_registry_round_trip_predicts(self, tmp_path):
        rng = np.random.default_rng(1)
        Y = rng.standard_normal((200, 2))
        x = Y @ [0.5, 0.2] + 0.1 * rng.standard_normal(200)
        fit = fit_gaussian(Y, x)
        entry = {
            "farm_id": "f0", "a": fit.coef_, "p": 1.0, "q": 0.0,
            "phi": fit.resid_var_, "deviance": 1.0,
        }
        path = tmp_path / "models.json"
        io.write_model_registry([entry], path)
        model = io.registry_to_models(io.read_model_registry(path))[0]
        np.testing.assert_allclose(model.predict(Y), fit.predict(Y), rtol=1e-12)
        assert model.q == 0.0
        assert model.phi_ == pytest.approx(fit.resid_var_)

    def test_registry_missing_key(self, tmp_path):
        path = tmp_path / "models.json"
        io.write_json([{"farm_id": "f0", "a": [1.0, 0.0]}], path)
        with pytest.raises(SchemaError, match="missing keys"):
            io.read_model_registry(path)

    def test_scenario_model_round_trip(self, tmp_path):
        marginals = [
            MarginalFit(family="normal", params=(0.3, 1.2), loglik=-10.0),
            MarginalFit(family="student_t", params=(5.0, -0.1, 0.8),
                        loglik=-11.0),
        ]
        copula = CopulaFit(corr=np.array([[1.0, 0.6], [0.6, 1.0]]))
        path = tmp_path / "scenario_model.json"
        io.write_scenario_model(marginals, copula, path)
        back_m, back_c = io.read_scenario_model(path)
        assert [m.family for m in back_m] == ["normal", "student_t"]
        assert back_m[1].params == pytest.approx((5.0, -0.1, 0.8))
        np.testing.assert_allclose(back_c.corr, copula.corr)

    def test_scenario_model_unknown_family(self, tmp_path):
        path = tmp_path / "scenario_model.json"
        io.write_json(
            {
                "marginals": [
                    {"family": "cauchy", "params": [0.0], "loglik": 0.0}
                ],
                "correlation": [[1.0]],
            },
            path,
        )
        with pytest.raises(SchemaError, match="unknown family"):
            io.read_scenario_model(path)

    def test_bad_json_is_schema_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(SchemaError, match="invalid JSON"):
            io.read_json(path)

    def test_missing_json_is_prerequisite_error(self, tmp_path):
        with pytest.raises(MissingPrerequisiteError):
            io.read_json(tmp_path / "absent.json")

    def test_write_json_is_deterministic(self, tmp_path):
        payload = {"b": [1.0, 2.5], "a": {"z": 0.1, "k": None}}
        io.write_json(payload, tmp_path / "one.json")
        io.write_json(payload, tmp_path / "two.json")
        assert (tmp_path / "one.json").read_bytes() == (
            tmp_path / "two.json"
        ).read_bytes()


class TestCumulativeToHourly:
    def test_hand_case_within_day(self):
        idx = pd.date_range("2020-01-01 00:00", periods=3, freq="h")
        cum = pd.Series([3600.0, 7200.0, 14400.0], index=idx)
        out = io.cumulative_to_hourly(cum)
        np.testing.assert_allclose(out.to_numpy(), [1.0, 1.0, 2.0])

    def test_day_boundary_resets(self):
        idx = pd.DatetimeIndex(
            ["2020-01-01 22:00", "2020-01-01 23:00", "2020-01-02 00:00"]
        )
        cum = pd.Series([7200.0, 10800.0, 3600.0], index=idx)
        out = io.cumulative_to_hourly(cum)
        np.testing.assert_allclose(out.to_numpy(), [2.0, 1.0, 1.0])

    def test_decreasing_within_day_rejected(self):
        idx = pd.date_range("2020-01-01", periods=2, freq="h")
        with pytest.raises(ValueError, match="decreases"):
            io.cumulative_to_hourly(pd.Series([7200.0, 3600.0], index=idx))

    def test_requires_datetime_index(self):
        with pytest.raises(ValueError, match="indexed by timestamps"):
            io.cumulative_to_hourly(pd.Series([1.0, 2.0]))
