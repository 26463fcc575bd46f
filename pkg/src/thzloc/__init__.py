"""thzloc: THz/mmWave MIMO localization simulator.

Channel synthesis (LOS / RIS / NLOS, plane- and spherical-wave,
array-of-subarrays beamforming with beam split and hardware impairments),
Fisher-information error bounds (PEB / OEB / EFIM / constrained CRB),
direct and multi-stage estimators, RIS and beam optimization, and a
scenario/sweep runner with CSV/JSON output.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DomainError,
    InsufficientMeasurementsError,
    NumericalError,
    ThzLocError,
    UnidentifiableError,
)

__all__ = [
    "ConfigError",
    "DegenerateGeometryError",
    "DomainError",
    "InsufficientMeasurementsError",
    "NumericalError",
    "ThzLocError",
    "UnidentifiableError",
    "__version__",
]
