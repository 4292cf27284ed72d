"""Sequence-to-sequence forecasting with position-based content attention."""
from .config import ForecastConfig, Variant
from .const import VERSION
from .model import DecoderMode, ForecastModel, forward

__version__ = VERSION

__all__ = ["DecoderMode", "ForecastConfig", "ForecastModel", "Variant", "forward", "__version__"]
