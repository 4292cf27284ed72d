"""Configuration files for training runs and synthetic series."""
from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from ._compat import StrEnum
from pathlib import Path
from typing import Any

import voluptuous as vol

from .attention import AttentionVariant
from .const import (
    DATASET_PRESETS,
    DEFAULT_ATTENTION_UNITS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_HIDDEN,
    DEFAULT_L2,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_EPOCHS,
    DEFAULT_MISSING_TOKEN,
    DEFAULT_PATIENCE,
    DEFAULT_SEED,
)
from .exceptions import ConfigError

_LOGGER = logging.getLogger(__name__)


class Variant(StrEnum):
    """Forecaster architectures."""

    @classmethod
    def parse(cls, value: str) -> "Variant":
        """
        Parse a string into a Variant enum.

        Args:
            value: The string to parse

        Returns:
            The corresponding Variant enum value

        Raises:
            ValueError: If the string doesn't match any Variant

        """
        try:
            return cls(value.strip())
        except ValueError:
            raise ValueError(f"'{value}' is not a valid Variant")

    A = "A"
    PI1 = "pi1"
    PI2 = "pi2"
    PI3 = "pi3"
    MULTI_A = "multi-A"
    MULTI_PI1 = "multi-pi1"
    MULTI_PI2 = "multi-pi2"

    @property
    def attention(self) -> AttentionVariant:
        """Return the scoring mechanism used by this architecture."""
        return AttentionVariant(self.value.removeprefix("multi-"))

    @property
    def per_variable(self) -> bool:
        """Return True if each variable has its own attention block."""
        return self.value.startswith("multi-")

    @property
    def multivariate(self) -> bool:
        """Return True if every variable is encoded."""
        return self.per_variable or self is Variant.PI3


class Scaling(StrEnum):
    """Series scaling schemes."""

    NONE = "none"
    ZSCORE = "zscore"
    MINMAX = "minmax"


def _name_list(value: Any) -> tuple[str, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(str(item).strip() for item in value)
    return tuple(item.strip() for item in str(value).split(",") if item.strip())


def _number_list(kind: type) -> Any:
    def coerce(value: Any) -> tuple:
        try:
            return tuple(kind(item) for item in _name_list(value))
        except ValueError as err:
            raise vol.Invalid(f"expected a comma separated list of {kind.__name__}") from err

    return coerce


_POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
_NON_NEGATIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=0))
_NON_NEGATIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0.0))

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional("preset"): vol.All(str, vol.Upper, vol.In(list(DATASET_PRESETS))),
        vol.Optional("T"): _POSITIVE_INT,
        vol.Optional("T_prime"): _POSITIVE_INT,
        vol.Optional("n"): _POSITIVE_INT,
        vol.Optional("m"): _POSITIVE_INT,
        vol.Optional("K"): _POSITIVE_INT,
        vol.Optional("target"): _NON_NEGATIVE_INT,
        vol.Optional("variant"): vol.All(
            str, vol.Strip, vol.In([variant.value for variant in Variant]), vol.Coerce(Variant)
        ),
        vol.Optional("learning_rate"): vol.All(vol.Coerce(float), vol.Range(min=0.0, min_included=False)),
        vol.Optional("l2"): _NON_NEGATIVE_FLOAT,
        vol.Optional("batch_size"): _POSITIVE_INT,
        vol.Optional("max_epochs"): _NON_NEGATIVE_INT,
        vol.Optional("patience"): _POSITIVE_INT,
        vol.Optional("seed"): _NON_NEGATIVE_INT,
        vol.Optional("scaling"): vol.All(str, vol.Lower, vol.Coerce(Scaling)),
        vol.Optional("strict_split"): vol.Boolean(),
        vol.Optional("masking"): vol.Boolean(),
        vol.Optional("literal_mask"): vol.Boolean(),
        vol.Optional("regularize_all"): vol.Boolean(),
        vol.Optional("clip_norm"): _NON_NEGATIVE_FLOAT,
        vol.Optional("threads"): _POSITIVE_INT,
        vol.Optional("teacher_forcing"): vol.Boolean(),
        vol.Optional("columns"): _name_list,
        vol.Optional("missing_token"): vol.Any(None, str),
        vol.Optional("timestamp_column"): vol.Any(None, str),
        vol.Optional("sampling"): vol.All(str, vol.Strip),
    },
    extra=vol.PREVENT_EXTRA,
)

SYNTH_SCHEMA = vol.Schema(
    {
        vol.Required("length"): _POSITIVE_INT,
        vol.Required("periods"): _number_list(float),
        vol.Optional("amplitudes"): _number_list(float),
        vol.Optional("noise_std", default=0.0): _NON_NEGATIVE_FLOAT,
        vol.Optional("slope", default=0.0): vol.Coerce(float),
        vol.Optional("seed", default=DEFAULT_SEED): _NON_NEGATIVE_INT,
    },
    extra=vol.PREVENT_EXTRA,
)


@dataclass(frozen=True)
class ForecastConfig:
    """Hyperparameters of one forecaster and its data pipeline."""

    T: int
    T_prime: int
    n: int = DEFAULT_HIDDEN
    m: int = DEFAULT_ATTENTION_UNITS
    K: int = 1
    target: int = 0
    variant: Variant = Variant.PI1
    learning_rate: float = DEFAULT_LEARNING_RATE
    l2: float = DEFAULT_L2
    batch_size: int = DEFAULT_BATCH_SIZE
    max_epochs: int = DEFAULT_MAX_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = DEFAULT_SEED
    scaling: Scaling = Scaling.ZSCORE
    strict_split: bool = False
    masking: bool = True
    literal_mask: bool = False
    regularize_all: bool = False
    clip_norm: float = 0.0
    threads: int = 1
    teacher_forcing: bool = True
    columns: tuple[str, ...] = field(default_factory=tuple)
    missing_token: str | None = DEFAULT_MISSING_TOKEN
    timestamp_column: str | None = None
    sampling: str = ""

    def __post_init__(self) -> None:
        """Check cross-field constraints."""
        if self.T < 1 or self.T_prime < 1 or self.K < 1:
            raise ConfigError(f"T={self.T}, T_prime={self.T_prime} and K={self.K} must be positive")
        if not 0 <= self.target < self.K:
            raise ConfigError(f"target {self.target} is not a variable index below K={self.K}")
        if self.columns and len(self.columns) != self.K:
            raise ConfigError(f"{len(self.columns)} columns listed for K={self.K}")

    @property
    def encoded_variables(self) -> tuple[int, ...]:
        """Return the variable indices fed to the encoders."""
        if self.variant.multivariate:
            return tuple(range(self.K))
        return (self.target,)

    @property
    def context_dim(self) -> int:
        """Return the size of the decoder's context input."""
        return 2 * self.n * len(self.encoded_variables)

    def with_overrides(self, **changes: Any) -> "ForecastConfig":
        """Return a copy with some fields replaced."""
        return replace(self, **changes)

    def to_lines(self) -> list[str]:
        """Serialize to ``key = value`` lines."""
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(value)
            elif value is None:
                continue
            lines.append(f"{key} = {value}")
        return lines

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "ForecastConfig":
        """
        Build a config from raw (string) values.

        A preset fills T, T_prime and, for presets with known columns, the
        variable list and target before the explicit keys are applied.

        Raises:
            ConfigError: On unknown keys, invalid values or missing T/T_prime

        """
        try:
            data = CONFIG_SCHEMA(dict(raw))
        except vol.Invalid as err:
            raise ConfigError(f"Invalid configuration: {err}") from err

        merged: dict[str, Any] = {}
        preset_name = data.pop("preset", None)
        if preset_name:
            preset = DATASET_PRESETS[preset_name]
            merged.update(T=preset["T"], T_prime=preset["T_prime"], sampling=preset["sampling"])
            if preset["variables"]:
                merged["columns"] = tuple(preset["variables"])
                merged["K"] = len(preset["variables"])
                merged["target"] = preset["variables"].index(preset["target"])
            elif preset["target"]:
                merged.update(columns=(preset["target"],), K=1, target=0)
            _LOGGER.debug("Applied preset %s: %s", preset_name, merged)
        merged.update(data)
        if "columns" in data and "K" not in data:
            merged["K"] = len(data["columns"])
        for required in ("T", "T_prime"):
            if required not in merged:
                raise ConfigError(f"Configuration needs {required} (or a preset)")
        known = {f.name for f in fields(cls)}
        return cls(**{key: value for key, value in merged.items() if key in known})


def parse_lines(lines: Iterable[str]) -> dict[str, str]:
    """
    Parse flat ``key = value`` lines.

    Blank lines and lines starting with ``#`` are skipped.

    Raises:
        ConfigError: On a line without ``=`` or a repeated key

    """
    values: dict[str, str] = {}
    for number, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise ConfigError(f"Line {number}: expected 'key = value', got {text!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key in values:
            raise ConfigError(f"Line {number}: duplicate key {key!r}")
        values[key] = value
    return values


def _read(path: str | Path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise ConfigError(f"Cannot read configuration {path}: {err}") from err


def load_config(path: str | Path, **overrides: Any) -> ForecastConfig:
    """
    Load a forecaster configuration file.

    Args:
        path: Path of the ``key = value`` file
        overrides: Raw values taking precedence over the file

    Returns:
        The validated configuration

    Raises:
        ConfigError: If the file cannot be read or is invalid

    """
    raw: dict[str, Any] = parse_lines(_read(path))
    raw.update({key: value for key, value in overrides.items() if value is not None})
    config = ForecastConfig.from_mapping(raw)
    _LOGGER.info("Loaded configuration from %s (variant %s)", path, config.variant)
    return config


def load_synth_spec(path: str | Path) -> dict[str, Any]:
    """
    Load and validate a synthetic-series file.

    Returns:
        Validated values; amplitudes default to 1 for each period

    Raises:
        ConfigError: If the file is invalid

    """
    try:
        data = SYNTH_SCHEMA(parse_lines(_read(path)))
    except vol.Invalid as err:
        raise ConfigError(f"Invalid synthetic series spec: {err}") from err
    amplitudes = data.get("amplitudes") or tuple(1.0 for _ in data["periods"])
    if len(amplitudes) != len(data["periods"]):
        raise ConfigError(
            f"{len(data['periods'])} periods but {len(amplitudes)} amplitudes"
        )
    data["amplitudes"] = amplitudes
    return data
