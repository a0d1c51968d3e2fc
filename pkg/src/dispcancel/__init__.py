"""Dispersion-cancelled low-coherence interferometry from spectrally resolved frames.

Simulate or ingest one spectrometer frame per stage position, multiply the
intensities of frequency pairs that sum to 2*omega0 across the two output
ports, and fit the resulting dip.
"""

from .errors import (
    ConfigError,
    DispCancelError,
    ParseError,
    PipelineError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DispCancelError",
    "ParseError",
    "PipelineError",
    "ValidationError",
    "__version__",
]
