"""Tests for autocorrelation, attention profiles and significance tables."""
import numpy as np
import pandas as pd
import pytest

from pbca_forecast.analysis import (
    autocorrelation,
    average_attention,
    profile_from_weights,
    significance_table,
    write_columns,
)
from pbca_forecast.const import SIGNIFICANCE_MARKER
from pbca_forecast.exceptions import ContractError, DataError
from pbca_forecast.model import ForecastModel


class TestAutocorrelation:
    """Test the sample autocorrelation function."""

    def test_lag_zero(self, rng):
        """Test r(0) = 1."""
        assert autocorrelation(rng.normal(size=50), 5)[0] == 1.0

    def test_sine_period(self):
        """Test a peak at the period of a sine."""
        x = np.sin(2 * np.pi * np.arange(10000) / 8)
        acf = autocorrelation(x, 16)
        assert acf[8] >= 0.999
        assert acf[8] == pytest.approx(1.0, abs=1e-3)
        assert acf[4] == pytest.approx(-1.0, abs=1e-3)
        np.testing.assert_allclose(x[8:], x[:-8], atol=1e-9)

    def test_white_noise(self):
        """Test that independent noise has small correlations."""
        x = np.random.default_rng(0).normal(size=10000)
        assert np.all(np.abs(autocorrelation(x, 10)[1:]) < 0.05)

    def test_affine_invariance(self, rng):
        """Test that shifting and scaling the series changes nothing."""
        x = rng.normal(size=200).cumsum()
        np.testing.assert_allclose(autocorrelation(3.0 * x + 7.0, 10), autocorrelation(x, 10), atol=1e-12)

    def test_constant_series(self):
        """Test that a flat series has no autocorrelation."""
        with pytest.raises(DataError):
            autocorrelation(np.ones(20), 3)

    @pytest.mark.parametrize("max_lag", [-1, 20])
    def test_lag_range(self, rng, max_lag):
        """Test that max_lag must lie below the length."""
        with pytest.raises(ContractError):
            autocorrelation(rng.normal(size=20), max_lag)


class TestProfile:
    """Test attention averaging."""

    def test_single_step(self):
        """Test T' = 1, where lag l sits at position T + 1 - l."""
        weights = np.array([[[0.1, 0.2, 0.7]], [[0.3, 0.4, 0.3]]])  # (N=2, T'=1, T=3)
        profile = profile_from_weights([weights])
        np.testing.assert_allclose(profile.position_weights, [0.2, 0.3, 0.5])
        np.testing.assert_allclose(profile.lag_weights, [0.5, 0.3, 0.2])
        np.testing.assert_allclose(profile.visible_lag_weights, [0.5, 0.3, 0.2])
        assert profile.peak_lag == 1
        assert profile.examples == 2

    def test_lags_over_steps(self):
        """Test the full-grid lag mean against the mean over steps that see each lag."""
        # T = 3, T' = 2; step 2 masks position 1
        weights = np.array([[[0.2, 0.3, 0.5], [0.0, 0.6, 0.4]]])
        profile = profile_from_weights([weights])
        # full grid: lag l is position T + 1 - l averaged over both steps
        np.testing.assert_allclose(profile.lag_weights, [0.45, 0.45, 0.1])
        # visible steps only
        # lag 1: step 1 position 3 -> 0.5
        # lag 2: step 1 position 2 (0.3), step 2 position 3 (0.4)
        # lag 3: step 1 position 1 (0.2), step 2 position 2 (0.6)
        np.testing.assert_allclose(profile.visible_lag_weights, [0.5, 0.35, 0.4])
        np.testing.assert_allclose(profile.position_weights, [0.1, 0.45, 0.45])
        assert profile.peak_lag == 1

    def test_blocks_are_averaged(self):
        """Test one row per attention block and their mean."""
        a = np.array([[[1.0, 0.0]]])
        b = np.array([[[0.0, 1.0]]])
        profile = profile_from_weights([a, b])
        assert profile.per_block.tolist() == [[1.0, 0.0], [0.0, 1.0]]
        assert profile.position_weights.tolist() == [0.5, 0.5]

    def test_frame(self):
        """Test the exported columns."""
        frame = profile_from_weights([np.array([[[0.25, 0.75]]])]).to_frame()
        assert list(frame.columns) == ["lag", "mean_weight", "visible_mean_weight"]
        assert frame["lag"].tolist() == [1, 2]
        assert frame["mean_weight"].tolist() == [0.75, 0.25]
        assert frame["visible_mean_weight"].tolist() == [0.75, 0.25]

    def test_empty(self):
        """Test that there must be weights to average."""
        with pytest.raises(ContractError):
            profile_from_weights([])

    def test_zero_parameter_model_is_flat(self, make_model, rng):
        """Test a flat 1/T profile for an all-zero content model."""
        model = make_model("A")
        params = {name: np.zeros_like(value) for name, value in model.params.items()}
        profile = average_attention(ForecastModel(config=model.config, params=params), rng.normal(size=(4, 8, 1)))
        np.testing.assert_allclose(profile.position_weights, np.full(8, 1 / 8))
        np.testing.assert_allclose(profile.lag_weights, np.full(8, 1 / 8))

    def test_masked_position_weight(self, make_model, rng):
        """Test that the lag beyond the history pulls position 1 down for π models."""
        profile = average_attention(make_model("pi1"), rng.normal(size=(3, 8, 1)))
        assert profile.T == 8 and profile.T_prime == 2
        assert profile.position_weights.sum() == pytest.approx(1.0)
        assert np.isfinite(profile.lag_weights).all()
        # position 1 is masked at step 2, so it averages in a 0 over both steps
        assert profile.lag_weights[-1] == profile.position_weights[0] <= 0.5
        np.testing.assert_array_equal(profile.lag_weights, profile.position_weights[::-1])

    def test_empty_inputs(self, make_model):
        """Test that an empty test set is refused."""
        with pytest.raises(ContractError):
            average_attention(make_model("A"), np.zeros((0, 8, 1)))


class TestSignificanceTable:
    """Test comparison tables."""

    def test_marks_significantly_worse(self, rng):
        """Test that the clearly worse method is starred and the best is not."""
        base = rng.normal(1.0, 0.1, size=40)
        errors = {
            "pi1": base,
            "A": base + 0.5 + rng.normal(scale=0.05, size=40),
            "pi2": base + rng.normal(scale=0.05, size=40),
        }
        rows = {row.method: row for row in significance_table(errors)}
        best = min(errors, key=lambda name: errors[name].mean())
        assert rows[best].best
        assert rows[best].marker == ""
        assert rows["A"].marker == SIGNIFICANCE_MARKER
        assert rows["A"].p < 0.05

    def test_row_order(self):
        """Test that rows follow the input order."""
        errors = {"b": np.array([2.0, 3.0, 2.5]), "a": np.array([1.0, 1.5, 1.2])}
        assert [row.method for row in significance_table(errors)] == ["b", "a"]

    def test_empty(self):
        """Test that a table needs methods."""
        with pytest.raises(ContractError):
            significance_table({})


def test_write_columns(tmp_path):
    """Test the plot-ready CSV."""
    path = tmp_path / "acf.csv"
    write_columns(path, pd.DataFrame({"lag": [0, 1], "acf": [1.0, 0.5]}))
    assert path.read_text().splitlines() == ["lag,acf", "0,1", "1,0.5"]
