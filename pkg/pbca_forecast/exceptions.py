"""Exceptions raised by the forecaster."""
from .const import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE


class ForecastError(Exception):
    """Base class for all forecaster errors."""

    exit_code: int = EXIT_USAGE


class ContractError(ForecastError):
    """Exception for violated preconditions."""


class ConfigError(ForecastError):
    """Exception for invalid configuration files or checkpoints."""


class ShapeError(ForecastError):
    """Exception for dimension mismatches between tensors."""


class NumericError(ForecastError):
    """Exception for non-finite values."""

    exit_code = EXIT_NUMERIC


class DataError(ForecastError):
    """Exception for unusable data."""

    exit_code = EXIT_DATA


class SchemaError(DataError):
    """Exception for CSV files whose header does not match the schema."""


class ParseError(DataError):
    """Exception for CSV cells that are not numbers."""

    def __init__(self, row: int, column: str, cell: str) -> None:
        """
        Initialize the parse error.

        Args:
            row: 1-based data row (header excluded)
            column: Column name
            cell: The offending text

        """
        super().__init__(f"Cannot parse {cell!r} as a number at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.cell = cell
