"""Forecast error metrics and the paired t-test."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .const import SIGNIFICANCE_LEVEL
from .exceptions import ContractError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricReport:
    """MSE and SMAPE with their per-example terms."""

    mse: float
    smape: float
    squared_errors: np.ndarray
    smape_terms: np.ndarray

    @property
    def count(self) -> int:
        """Return the number of examples."""
        return len(self.squared_errors)


@dataclass(frozen=True)
class TTestResult:
    """Two-sided paired t-test outcome."""

    t: float
    df: int
    p: float
    significant: bool


def _pair(pred: np.ndarray, true: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    true = np.atleast_1d(np.asarray(true, dtype=np.float64))
    if pred.size == 0:
        raise ContractError("No predictions to score")
    if pred.shape != true.shape:
        raise ContractError(f"Predictions of shape {pred.shape} for targets of shape {true.shape}")
    return pred, true


def _smape_terms(pred: np.ndarray, true: np.ndarray) -> np.ndarray:
    denominator = np.abs(pred) + np.abs(true)
    numerator = 2.0 * np.abs(pred - true)
    # 0/0 terms count as 0
    return np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)


def mse(pred: np.ndarray, true: np.ndarray) -> float:
    """
    Return the mean squared error over every example and horizon point.

    Raises:
        ContractError: If the inputs are empty or differ in shape

    """
    pred, true = _pair(pred, true)
    return float(np.mean((pred - true) ** 2))


def smape(pred: np.ndarray, true: np.ndarray) -> float:
    """
    Return the mean of ``2|ŷ - y| / (|ŷ| + |y|)``, a value in ``[0, 2]``.

    Raises:
        ContractError: If the inputs are empty or differ in shape

    """
    pred, true = _pair(pred, true)
    return float(np.mean(_smape_terms(pred, true)))


def evaluate_predictions(pred: np.ndarray, true: np.ndarray) -> MetricReport:
    """
    Score ``(N, T')`` predictions.

    Returns:
        The overall metrics plus per-example squared errors (mean over the
        horizon) and per-example SMAPE terms

    """
    pred, true = _pair(pred, true)
    if pred.ndim == 1:
        pred, true = pred.reshape(-1, 1), true.reshape(-1, 1)
    squared = np.mean((pred - true) ** 2, axis=1)
    terms = np.mean(_smape_terms(pred, true), axis=1)
    return MetricReport(
        mse=float(np.mean(squared)),
        smape=float(np.mean(terms)),
        squared_errors=squared,
        smape_terms=terms,
    )


def student_t_two_sided(t: float, df: int) -> float:
    """Return ``P(|T| >= |t|)`` for a Student-t variable with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_ttest(
    errors_a: np.ndarray, errors_b: np.ndarray, alpha: float = SIGNIFICANCE_LEVEL
) -> TTestResult:
    """
    Test whether paired errors differ in mean.

    With ``d = a - b``, ``t = mean(d) / (std(d) / sqrt(N))`` using the N-1
    divisor. If every difference is 0 the result is ``t = 0, p = 1``; if the
    differences are constant but not 0 it is ``t = ±inf, p = 0``.

    Args:
        errors_a: Per-example errors of the first method
        errors_b: Per-example errors of the second method, same order
        alpha: Significance level

    Returns:
        t statistic, degrees of freedom, two-sided p-value and verdict

    Raises:
        ContractError: If the lengths differ or are below 2

    """
    a = np.asarray(errors_a, dtype=np.float64).ravel()
    b = np.asarray(errors_b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ContractError(f"Paired errors of lengths {a.size} and {b.size}")
    if a.size < 2:
        raise ContractError(f"A paired t-test needs at least 2 pairs, got {a.size}")

    diff = a - b
    df = diff.size - 1
    mean = float(diff.mean())
    std = float(diff.std(ddof=1))
    if std == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / (std / math.sqrt(diff.size))
        p = min(max(student_t_two_sided(t, df), 0.0), 1.0)
    _LOGGER.debug("Paired t-test over %d pairs: t=%.6g, p=%.6g", diff.size, t, p)
    return TTestResult(t=t, df=df, p=p, significant=p < alpha)
