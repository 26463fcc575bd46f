"""Labeled state/measurement parameter vectors with explicit index layout.

Every scalar unknown carries a unique name and a parameter class; the class
drives finite-difference step selection (parameters span many orders of
magnitude: delays in seconds vs. positions in meters vs. unit amplitudes).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, auto

import numpy as np

from ..errors import ConfigError

__all__ = ["ParamKind", "ParamLayout", "ParamVectors", "fd_step"]


class ParamKind(Enum):
    POSITION = auto()  # meters
    ORIENTATION = auto()  # radians (Euler)
    ANGLE = auto()  # radians (AOA/AOD)
    PHASE = auto()  # radians (carrier phase)
    DELAY = auto()  # seconds
    AMPLITUDE = auto()  # dimensionless channel gain
    OFFSET = auto()  # seconds (clock)


_BASE_STEP = {
    ParamKind.POSITION: 1e-4,
    ParamKind.ORIENTATION: 1e-6,
    ParamKind.ANGLE: 1e-6,
    ParamKind.PHASE: 1e-6,
    ParamKind.DELAY: 1e-13,
    ParamKind.AMPLITUDE: 0.0,  # purely relative
    ParamKind.OFFSET: 1e-13,
}


def fd_step(kind: ParamKind, value: float, scale: float = 1.0) -> float:
    """Central-difference step: max(1e-6 |x|, class base), times `scale`."""
    base = _BASE_STEP[kind]
    if kind is ParamKind.AMPLITUDE:
        base = 1e-6 * max(abs(value), 1e-12)
    return scale * max(1e-6 * abs(value), base)


@dataclass(frozen=True)
class ParamLayout:
    """Ordered labeled scalar parameters with an active mask.

    Inactive entries are known constants: they keep their slot (so values
    and Jacobian columns stay addressable by name) but are excluded from
    estimation and bound computations.
    """

    names: tuple
    kinds: tuple
    active: np.ndarray

    def __post_init__(self):
        if len(self.names) != len(set(self.names)):
            raise ConfigError("parameter names must be unique")
        if not (len(self.names) == len(self.kinds) == len(self.active)):
            raise ConfigError("layout component lengths differ")
        object.__setattr__(self, "active", np.asarray(self.active, dtype=bool))

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no parameter named {name!r}") from None

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def active_names(self) -> list:
        return [n for n, a in zip(self.names, self.active) if a]

    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def mask_for(self, predicate) -> np.ndarray:
        """Boolean mask over ACTIVE entries whose name satisfies `predicate`."""
        return np.array([predicate(n) for n in self.active_names], dtype=bool)

    def block(self, prefixes) -> np.ndarray:
        if isinstance(prefixes, str):
            prefixes = (prefixes,)
        return self.mask_for(lambda n: any(n.startswith(p) for p in prefixes))


class LayoutBuilder:
    def __init__(self):
        self._names = []
        self._kinds = []
        self._active = []
        self._values = []

    def add(self, name: str, kind: ParamKind, value: float, active: bool = True):
        self._names.append(name)
        self._kinds.append(kind)
        self._active.append(bool(active))
        self._values.append(float(value))

    def build(self) -> tuple[ParamLayout, np.ndarray]:
        layout = ParamLayout(tuple(self._names), tuple(self._kinds), np.array(self._active))
        return layout, np.array(self._values)


@dataclass
class ParamVectors:
    """State vector s and measurement vector gamma with their true values."""

    state: ParamLayout
    state_values: np.ndarray
    meas: ParamLayout
    meas_values: np.ndarray
