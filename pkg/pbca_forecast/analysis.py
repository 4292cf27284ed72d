"""Autocorrelation, averaged attention weights and significance tables."""
from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .const import SIGNIFICANCE_LEVEL, SIGNIFICANCE_MARKER
from .exceptions import ContractError, DataError
from .metrics import paired_ttest
from .model import DecoderMode, ForecastModel, predict_many

_LOGGER = logging.getLogger(__name__)


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """
    Return ``r(0..max_lag)`` of a series.

    ``r(l) = Σ_t (x_t - x̄)(x_{t+l} - x̄) / Σ_t (x_t - x̄)²``, so ``r(0) = 1``.

    Raises:
        ContractError: If max_lag is negative or not below the series length
        DataError: If the series is constant

    """
    x = np.asarray(series, dtype=np.float64).ravel()
    if max_lag < 0 or x.size <= max_lag:
        raise ContractError(f"max_lag {max_lag} needs a series longer than {max_lag}, got {x.size}")
    centred = x - x.mean()
    denominator = float(np.dot(centred, centred))
    if denominator <= 0:
        raise DataError("Autocorrelation of a constant series is undefined")
    values = np.empty(max_lag + 1)
    values[0] = 1.0
    for lag in range(1, max_lag + 1):
        values[lag] = float(np.dot(centred[:-lag], centred[lag:])) / denominator
    return values


@dataclass(frozen=True)
class AttentionProfile:
    """
    Attention weights averaged over examples and horizon steps.

    ``position_weights[j-1]`` is the mean of ``α_ij`` for input position j
    over every example, every step i and every attention block, masked
    entries counting as 0. ``lag_weights`` is the same series indexed by
    the lag ``l = T + 1 - j`` from the first forecast step, so
    ``lag_weights[l-1] = position_weights[T-l]``.

    ``visible_lag_weights[l-1]`` averages the weight on lag ``l = i + T - j``
    over the steps i that can see that lag only.
    """

    position_weights: np.ndarray
    lag_weights: np.ndarray
    visible_lag_weights: np.ndarray
    per_block: np.ndarray
    T: int
    T_prime: int
    examples: int

    @property
    def peak_lag(self) -> int:
        """Return the lag with the largest mean weight."""
        return int(np.argmax(self.lag_weights)) + 1

    def to_frame(self) -> pd.DataFrame:
        """Return ``(lag, mean_weight, visible_mean_weight)`` rows for lags ``1..T``."""
        return pd.DataFrame(
            {
                "lag": np.arange(1, self.T + 1),
                "mean_weight": self.lag_weights,
                "visible_mean_weight": self.visible_lag_weights,
            }
        )


def profile_from_weights(weights: list[np.ndarray]) -> AttentionProfile:
    """
    Average ``(N, T', T)`` weight stacks, one per attention block.

    Raises:
        ContractError: If there is no block or no example

    """
    if not weights or len(weights[0]) == 0:
        raise ContractError("No attention weights to average")
    stacked = np.stack(weights)  # (B, N, T', T)
    _, count, T_prime, T = stacked.shape
    per_block = stacked.mean(axis=(1, 2))
    by_step = stacked.mean(axis=(0, 1))  # (T', T)
    position_weights = per_block.mean(axis=0)

    visible = np.zeros(T)
    for lag in range(1, T + 1):
        # step i sees lag l at position j = i + T - l, valid while j <= T
        steps = np.arange(1, min(lag, T_prime) + 1)
        visible[lag - 1] = by_step[steps - 1, steps + T - lag - 1].mean()
    return AttentionProfile(
        position_weights=position_weights,
        lag_weights=position_weights[::-1].copy(),
        visible_lag_weights=visible,
        per_block=per_block,
        T=T,
        T_prime=T_prime,
        examples=count,
    )


def average_attention(model: ForecastModel, inputs: np.ndarray) -> AttentionProfile:
    """
    Run the model free-running over a test set and average its attention.

    Args:
        model: Trained forecaster
        inputs: Test windows ``(N, T, K)``

    Returns:
        The averaged profile

    Raises:
        ContractError: If the test set is empty

    """
    if len(inputs) == 0:
        raise ContractError("Cannot average attention over an empty test set")
    _, weights = predict_many(model, inputs, DecoderMode.FREE_RUNNING)
    profile = profile_from_weights(weights)
    _LOGGER.info(
        "Averaged attention over %d examples; peak at lag %d", profile.examples, profile.peak_lag
    )
    return profile


@dataclass(frozen=True)
class SignificanceRow:
    """One method of a comparison table."""

    method: str
    mean_error: float
    p: float | None
    marker: str

    @property
    def best(self) -> bool:
        """Return True for the reference (lowest error) method."""
        return self.p is None


def significance_table(
    errors: Mapping[str, np.ndarray], alpha: float = SIGNIFICANCE_LEVEL
) -> list[SignificanceRow]:
    """
    Compare methods against the one with the lowest mean error.

    Every other method gets a paired t-test against the best one and the
    significance marker when it is significantly worse.

    Raises:
        ContractError: If no method is given

    """
    if not errors:
        raise ContractError("No methods to compare")
    means = {name: float(np.mean(values)) for name, values in errors.items()}
    best = min(means, key=means.__getitem__)
    rows = []
    for name, values in errors.items():
        if name == best:
            rows.append(SignificanceRow(method=name, mean_error=means[name], p=None, marker=""))
            continue
        result = paired_ttest(values, errors[best], alpha)
        marker = SIGNIFICANCE_MARKER if result.significant and means[name] > means[best] else ""
        rows.append(SignificanceRow(method=name, mean_error=means[name], p=result.p, marker=marker))
    return rows


def write_columns(path: str | Path, frame: pd.DataFrame) -> None:
    """Write a plot-ready CSV."""
    frame.to_csv(path, index=False, float_format="%.10g")
    _LOGGER.info("Wrote %d rows to %s", len(frame), path)
