"""Time series ingestion, gap repair, scaling, windowing and splitting."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .config import ForecastConfig, Scaling
from .const import (
    DEFAULT_MISSING_TOKEN,
    PARTITION_TEST,
    PARTITION_TRAIN,
    PARTITION_VALIDATION,
    TRAIN_FRACTION,
    TRAIN_VALIDATION_FRACTION,
)
from .exceptions import ContractError, DataError, ParseError, SchemaError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawSeries:
    """Rows of K variables in temporal order; missing entries are NaN."""

    names: tuple[str, ...]
    rows: np.ndarray
    sampling: str = ""

    def __post_init__(self) -> None:
        """Check that every row has one entry per variable."""
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.names):
            raise SchemaError(f"Rows of shape {self.rows.shape} for {len(self.names)} variables")

    @property
    def missing(self) -> np.ndarray:
        """Return the missing-entry mask."""
        return np.isnan(self.rows)


@dataclass(frozen=True)
class ScalingStats:
    """Per-variable offset and divisor of a scaling scheme."""

    scheme: Scaling
    center: np.ndarray
    scale: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Scale ``(L, K)`` values."""
        return (values - self.center) / self.scale

    def inverse(self, values: np.ndarray, variable: int | None = None) -> np.ndarray:
        """Undo the scaling, for all variables or a single one."""
        if variable is None:
            return values * self.scale + self.center
        return values * self.scale[variable] + self.center[variable]


@dataclass(frozen=True)
class CleanSeries:
    """Gap-free ``(L, K)`` values and the scaling applied to them, if any."""

    names: tuple[str, ...]
    values: np.ndarray
    stats: ScalingStats | None = None

    def __post_init__(self) -> None:
        """Reject missing values."""
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise SchemaError(f"Values of shape {self.values.shape} for {len(self.names)} variables")
        if np.isnan(self.values).any():
            raise DataError("A clean series cannot hold missing values")

    @property
    def length(self) -> int:
        """Return the number of rows L."""
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        """Return one variable by name."""
        try:
            return self.values[:, self.names.index(name)]
        except ValueError as err:
            raise SchemaError(f"No variable named {name!r}") from err


@dataclass(frozen=True)
class Partition:
    """Examples of one split block and their indices in the full dataset."""

    name: str
    inputs: np.ndarray
    targets: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        """Return the example count."""
        return len(self.indices)


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding-window examples ``(N, T, K)`` and their horizons ``(N, T')``."""

    inputs: np.ndarray
    targets: np.ndarray
    T: int
    T_prime: int
    target: int
    boundaries: tuple[int, int] | None = None
    strict: bool = False
    stats: ScalingStats | None = None
    names: tuple[str, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        """Return the example count N."""
        return len(self.inputs)

    @property
    def is_split(self) -> bool:
        """Return True once partition boundaries are set."""
        return self.boundaries is not None

    def _ranges(self) -> dict[str, range]:
        if self.boundaries is None:
            raise ContractError("The dataset has not been split")
        train_end, validation_end = self.boundaries
        # a strict split drops windows whose span reaches into the next block
        span = self.T + self.T_prime - 1 if self.strict else 0
        return {
            PARTITION_TRAIN: range(0, max(train_end - span, 0)),
            PARTITION_VALIDATION: range(train_end, max(validation_end - span, train_end)),
            PARTITION_TEST: range(validation_end, len(self)),
        }

    def partition(self, name: str) -> Partition:
        """
        Return one block of the split.

        Raises:
            ContractError: If the dataset is not split or the name is unknown

        """
        ranges = self._ranges()
        if name not in ranges:
            raise ContractError(f"Unknown partition {name!r}")
        indices = np.arange(ranges[name].start, ranges[name].stop)
        return Partition(
            name=name, inputs=self.inputs[indices], targets=self.targets[indices], indices=indices
        )

    @property
    def train(self) -> Partition:
        """Return the training block."""
        return self.partition(PARTITION_TRAIN)

    @property
    def validation(self) -> Partition:
        """Return the validation block."""
        return self.partition(PARTITION_VALIDATION)

    @property
    def test(self) -> Partition:
        """Return the test block."""
        return self.partition(PARTITION_TEST)


@dataclass(frozen=True)
class SynthSpec:
    """Sum of sines plus a linear trend and seeded Gaussian noise."""

    length: int
    components: tuple[tuple[float, float], ...]
    noise_std: float = 0.0
    slope: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        """Check the spec."""
        if not self.components:
            raise ContractError("A synthetic series needs at least one component")
        if any(period <= 0 for period, _ in self.components):
            raise ContractError(f"Periods must be positive: {self.components}")
        if self.noise_std < 0:
            raise ContractError(f"Noise stddev must be non-negative, got {self.noise_std}")
        if self.length <= self.max_period:
            raise ContractError(f"Length {self.length} must exceed the longest period {self.max_period}")

    @property
    def max_period(self) -> float:
        """Return the longest period."""
        return max(period for period, _ in self.components)

    def check_window(self, T: int, T_prime: int) -> None:
        """
        Check that the series is long enough for the given window.

        Raises:
            ContractError: If ``length <= max period + T + T'``

        """
        if self.length <= self.max_period + T + T_prime:
            raise ContractError(
                f"Length {self.length} must exceed max period {self.max_period} + T {T} + T' {T_prime}"
            )

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "SynthSpec":
        """Build a spec from validated synthetic-series settings."""
        return cls(
            length=int(data["length"]),
            components=tuple(zip(data["periods"], data["amplitudes"])),
            noise_std=float(data.get("noise_std", 0.0)),
            slope=float(data.get("slope", 0.0)),
            seed=int(data.get("seed", 0)),
        )


def load_csv(
    path: str | Path,
    columns: tuple[str, ...] | list[str] | None = None,
    missing_token: str | None = DEFAULT_MISSING_TOKEN,
    timestamp_column: str | None = None,
    sampling: str = "",
) -> RawSeries:
    """
    Read a comma separated file with a header row.

    Args:
        path: CSV file
        columns: Variables to read, in this order; all non-timestamp columns
            when omitted
        missing_token: Cell text meaning "missing" (empty cells always are)
        timestamp_column: Column ignored for the numbers
        sampling: Free-text sampling rate kept with the series

    Returns:
        The parsed rows in file order

    Raises:
        DataError: If the file cannot be read
        SchemaError: If a requested column is missing
        ParseError: If a cell is not a number

    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise DataError(f"Cannot read {path}: {err}") from err

    header = [str(name).strip() for name in frame.columns]
    frame.columns = header
    if columns:
        absent = [name for name in columns if name not in header]
        if absent:
            raise SchemaError(f"{path} has no column(s) {absent}; header is {header}")
        names = tuple(columns)
    else:
        names = tuple(name for name in header if name != timestamp_column)
    if not names:
        raise SchemaError(f"{path} has no value columns")

    rows = np.empty((len(frame), len(names)))
    for k, name in enumerate(names):
        cells = frame[name].str.strip()
        missing = cells.eq("")
        if missing_token:
            missing |= cells.eq(missing_token)
        numbers = pd.to_numeric(cells.where(~missing), errors="coerce")
        bad = numbers.isna() & ~missing
        if bad.any():
            first = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(first + 1, name, cells.iloc[first])
        rows[:, k] = numbers.to_numpy(dtype=np.float64)

    series = RawSeries(names=names, rows=rows, sampling=sampling)
    _LOGGER.info(
        "Loaded %d rows of %s from %s (%d missing entries, sampling %s)",
        len(rows),
        ", ".join(names),
        path,
        int(series.missing.sum()),
        sampling or "unspecified",
    )
    return series


def interpolate_missing(raw: RawSeries) -> CleanSeries:
    """
    Fill gaps by straight lines between the nearest present neighbours.

    Leading and trailing gaps take the nearest present value.

    Raises:
        DataError: If a variable has no present value

    """
    values = raw.rows.copy()
    positions = np.arange(len(values))
    for k, name in enumerate(raw.names):
        missing = np.isnan(values[:, k])
        if missing.all():
            raise DataError(f"Variable {name!r} has no values")
        if missing.any():
            _LOGGER.warning("Interpolating %d missing values of %s", int(missing.sum()), name)
            values[missing, k] = np.interp(positions[missing], positions[~missing], values[~missing, k])
    return CleanSeries(names=raw.names, values=values)


def compute_stats(values: np.ndarray, scheme: Scaling = Scaling.ZSCORE, names: tuple[str, ...] = ()) -> ScalingStats:
    """
    Compute scaling statistics of ``(L, K)`` values.

    Raises:
        DataError: If a variable is constant under z-score or min-max scaling

    """
    k = values.shape[1]
    if scheme is Scaling.NONE:
        return ScalingStats(scheme=scheme, center=np.zeros(k), scale=np.ones(k))
    if scheme is Scaling.ZSCORE:
        center, scale = values.mean(axis=0), values.std(axis=0)
    else:
        center, scale = values.min(axis=0), values.max(axis=0) - values.min(axis=0)
    flat = np.flatnonzero(scale <= 0)
    if flat.size:
        label = names[flat[0]] if names else str(flat[0])
        raise DataError(f"Variable {label} has zero variance")
    return ScalingStats(scheme=scheme, center=center, scale=scale)


def standardize(
    series: CleanSeries,
    stats: ScalingStats | None = None,
    scheme: Scaling = Scaling.ZSCORE,
    rows: int | None = None,
) -> CleanSeries:
    """
    Scale each variable.

    Args:
        series: Unscaled series
        stats: Statistics to apply; computed when omitted
        scheme: Scheme used when computing statistics
        rows: Use only the first ``rows`` rows for the statistics

    Returns:
        The scaled series carrying the statistics for the inverse transform

    Raises:
        DataError: If a variable has zero variance

    """
    if stats is None:
        sample = series.values if rows is None else series.values[:rows]
        stats = compute_stats(sample, scheme, series.names)
    return CleanSeries(names=series.names, values=stats.apply(series.values), stats=stats)


def inverse(series: CleanSeries) -> CleanSeries:
    """Undo the scaling of a standardized series."""
    if series.stats is None:
        raise ContractError("Series carries no scaling statistics")
    return CleanSeries(names=series.names, values=series.stats.inverse(series.values))


def window(series: CleanSeries, T: int, T_prime: int, target: int = 0) -> WindowedDataset:
    """
    Cut stride-1 examples out of a series.

    Example ``e`` reads rows ``e .. e+T-1`` of every variable and predicts
    rows ``e+T .. e+T+T'-1`` of the target variable.

    Raises:
        ContractError: If T, T' or the target index are invalid
        DataError: If the series is shorter than ``T + T'``

    """
    if T < 1 or T_prime < 1:
        raise ContractError(f"T={T} and T'={T_prime} must be positive")
    if not 0 <= target < series.values.shape[1]:
        raise ContractError(f"Target {target} outside 0..{series.values.shape[1] - 1}")
    if series.length < T + T_prime:
        raise DataError(f"Series of length {series.length} is shorter than T + T' = {T + T_prime}")

    count = series.length - T - T_prime + 1
    # (N, K, T) views, moved to (N, T, K)
    inputs = sliding_window_view(series.values[: count + T - 1], T, axis=0).transpose(0, 2, 1)
    targets = sliding_window_view(series.values[T:, target], T_prime)[:count]
    return WindowedDataset(
        inputs=np.ascontiguousarray(inputs),
        targets=np.ascontiguousarray(targets),
        T=T,
        T_prime=T_prime,
        target=target,
        stats=series.stats,
        names=series.names,
    )


def split_boundaries(count: int) -> tuple[int, int]:
    """
    Return the first validation and first test example index.

    Raises:
        DataError: If a block would be empty

    """
    train_end = math.floor(TRAIN_FRACTION * count)
    validation_end = math.floor(TRAIN_VALIDATION_FRACTION * count)
    if not 0 < train_end < validation_end < count:
        raise DataError(
            f"{count} examples leave an empty partition ({train_end}/{validation_end - train_end}/"
            f"{count - validation_end})"
        )
    return train_end, validation_end


def split(dataset: WindowedDataset, strict: bool = False) -> WindowedDataset:
    """
    Partition examples into train, validation and test blocks.

    Windows are assigned by their first input index; ``strict`` drops the
    train and validation windows whose horizon reaches into the next block.

    Raises:
        DataError: If a partition is empty

    """
    boundaries = split_boundaries(len(dataset))
    result = replace(dataset, boundaries=boundaries, strict=strict)
    sizes = {name: len(result.partition(name)) for name in (PARTITION_TRAIN, PARTITION_VALIDATION, PARTITION_TEST)}
    empty = [name for name, size in sizes.items() if size == 0]
    if empty:
        raise DataError(f"Strict split leaves empty partition(s) {empty}")
    _LOGGER.debug("Split %d examples into %s", len(dataset), sizes)
    return result


def training_rows(count: int, T: int, T_prime: int) -> int:
    """Return how many leading rows the training windows touch."""
    train_end, _ = split_boundaries(count)
    return train_end - 1 + T + T_prime


def prepare_dataset(series: CleanSeries, config: ForecastConfig) -> WindowedDataset:
    """
    Scale, window and split a clean series for a forecaster.

    Scaling statistics come from the rows the training windows touch.

    Raises:
        DataError: If the series is too short or a variable is constant
        SchemaError: If the configured columns are not in the series

    """
    if config.columns:
        order = [series.names.index(name) for name in config.columns if name in series.names]
        if len(order) != len(config.columns):
            raise SchemaError(f"Series has {series.names}, config needs {config.columns}")
        series = CleanSeries(names=tuple(config.columns), values=series.values[:, order])
    if series.values.shape[1] != config.K:
        raise SchemaError(f"Series has {series.values.shape[1]} variables, config needs K={config.K}")
    count = series.length - config.T - config.T_prime + 1
    if count < 3:
        raise DataError(f"Series of length {series.length} yields {max(count, 0)} examples, need 3")
    scaled = standardize(series, scheme=config.scaling, rows=training_rows(count, config.T, config.T_prime))
    dataset = split(window(scaled, config.T, config.T_prime, config.target), strict=config.strict_split)
    _LOGGER.info(
        "Prepared %d examples: %d train, %d validation, %d test",
        len(dataset),
        len(dataset.train),
        len(dataset.validation),
        len(dataset.test),
    )
    return dataset


def load_dataset(path: str | Path, config: ForecastConfig) -> WindowedDataset:
    """Read, repair, scale, window and split a CSV file."""
    raw = load_csv(
        path,
        columns=config.columns or None,
        missing_token=config.missing_token,
        timestamp_column=config.timestamp_column,
        sampling=config.sampling,
    )
    return prepare_dataset(interpolate_missing(raw), config)


def synth_periodic(spec: SynthSpec) -> CleanSeries:
    """
    Generate ``x_t = Σ a_c sin(2πt/p_c) + slope·t + noise`` for ``t = 0..L-1``.

    The noise is drawn from ``numpy.random.default_rng(spec.seed)``.
    """
    t = np.arange(spec.length, dtype=np.float64)
    values = spec.slope * t
    for period, amplitude in spec.components:
        values = values + amplitude * np.sin(2.0 * np.pi * t / period)
    if spec.noise_std > 0:
        values = values + np.random.default_rng(spec.seed).normal(0.0, spec.noise_std, size=spec.length)
    return CleanSeries(names=("x",), values=values.reshape(-1, 1))


def write_csv(series: CleanSeries, path: str | Path) -> None:
    """Write a series with a header row of variable names."""
    frame = pd.DataFrame(series.values, columns=list(series.names))
    frame.to_csv(path, index=False, float_format="%.17g")
    _LOGGER.info("Wrote %d rows to %s", series.length, path)
