"""Planar arrays, array-of-subarrays layout, steering vectors and array factors.

Layout convention: an array lies on the local YZ plane (local X is the
array normal).  Subarray (SA) centers form a centered uniform grid with
pitch ``sa_spacing``; antenna elements (AE) inside each SA form a centered
grid with pitch ``ae_spacing``.  Grids are indexed row-major with the
y-axis fastest: index = row * n_cols + col, rows advance along +z and
columns along +y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto
from functools import cached_property

import numpy as np

from .constants import SPEED_OF_LIGHT as C
from .errors import ConfigError, DomainError
from .geometry import AnglePair, Pose, direction_from_angles

__all__ = [
    "ArraySpec",
    "GainModel",
    "Role",
    "array_factor",
    "array_factor_with_gradient",
    "beamforming_vector",
    "sector_gain",
    "steering_vector",
    "steering_with_gradient",
]


class Role(Enum):
    BS = auto()
    UE = auto()
    RIS = auto()


@dataclass(frozen=True)
class GainModel:
    """Ideal sector antenna gain: sqrt(g0) inside the half-power sector, 0 outside.

    ``omni()`` yields unit gain everywhere.
    """

    sector: bool = False
    g0: float = 1.0
    az_hpbw: float = np.pi
    el_hpbw: float = np.pi

    def __post_init__(self):
        if self.g0 <= 0:
            raise ConfigError("gain g0 must be positive")
        if not (0 < self.az_hpbw <= np.pi and 0 < self.el_hpbw <= np.pi):
            raise ConfigError("half-power beamwidths must lie in (0, pi]")

    @staticmethod
    def omni() -> "GainModel":
        return GainModel(sector=False)


def sector_gain(gain: GainModel, a: AnglePair | tuple) -> float:
    """Amplitude gain of the ideal sector model at a local angle pair."""
    if not gain.sector:
        return 1.0
    az, el = (a.azimuth, a.elevation) if isinstance(a, AnglePair) else a
    if abs(az) <= gain.az_hpbw / 2 and abs(el) <= gain.el_hpbw / 2:
        return float(np.sqrt(gain.g0))
    return 0.0


@dataclass(frozen=True)
class ArraySpec:
    """Planar array of subarrays attached to a pose.

    For a conventional (non-AOSA) array use ae_shape = (1, 1): each SA is a
    single element.  RIS arrays must have single-element SAs.
    """

    role: Role
    pose: Pose
    sa_shape: tuple[int, int] = (1, 1)
    ae_shape: tuple[int, int] = (1, 1)
    ae_spacing: float = 0.5e-3
    sa_spacing: float | None = None
    gain: GainModel = field(default_factory=GainModel.omni)

    def __post_init__(self):
        if min(self.sa_shape) < 1 or min(self.ae_shape) < 1:
            raise ConfigError("array counts must be >= 1")
        if self.ae_spacing <= 0:
            raise ConfigError("ae_spacing must be positive")
        if self.sa_spacing is not None and self.sa_spacing <= 0:
            raise ConfigError("sa_spacing must be positive")
        if self.role is Role.RIS and self.ae_shape != (1, 1):
            raise ConfigError("RIS subarrays must be single-element (1x1)")

    @property
    def n_sa(self) -> int:
        return self.sa_shape[0] * self.sa_shape[1]

    @property
    def n_ae(self) -> int:
        return self.ae_shape[0] * self.ae_shape[1]

    @property
    def n_elements(self) -> int:
        return self.n_sa * self.n_ae

    @property
    def pitch_sa(self) -> float:
        # Default: contiguous tiling of the AE grid (preserves Table-style footprints).
        if self.sa_spacing is not None:
            return self.sa_spacing
        return self.ae_shape[0] * self.ae_spacing

    @cached_property
    def sa_centers_local(self) -> np.ndarray:
        """(n_sa, 3) local SA center positions on the YZ plane."""
        return _centered_grid(self.sa_shape, self.pitch_sa)

    @cached_property
    def ae_offsets_local(self) -> np.ndarray:
        """(n_ae, 3) local AE offsets within one SA."""
        return _centered_grid(self.ae_shape, self.ae_spacing)

    def element_positions(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-SA (SA center local position, (n_ae, 3) AE local positions)."""
        return [(c, c + self.ae_offsets_local) for c in self.sa_centers_local]

    def sa_centers_global(self) -> np.ndarray:
        """(n_sa, 3) SA centers in the global frame (Eq.-style R p + p_center)."""
        R = self.pose.rotation
        return self.sa_centers_local @ R.T + self.pose.position

    def aperture(self) -> float:
        """Largest extent of the full element grid (aperture diameter proxy)."""
        all_local = (self.sa_centers_local[:, None, :] + self.ae_offsets_local[None, :, :]).reshape(-1, 3)
        span = all_local.max(axis=0) - all_local.min(axis=0)
        return float(np.linalg.norm(span))


def _centered_grid(shape: tuple[int, int], pitch: float) -> np.ndarray:
    rows, cols = shape
    z_idx = np.arange(rows) - (rows - 1) / 2
    y_idx = np.arange(cols) - (cols - 1) / 2
    zz, yy = np.meshgrid(z_idx, y_idx, indexing="ij")  # row-major, y fastest
    out = np.zeros((rows * cols, 3))
    out[:, 1] = yy.ravel() * pitch
    out[:, 2] = zz.ravel() * pitch
    return out


def _as_direction(a) -> np.ndarray:
    if isinstance(a, AnglePair):
        return direction_from_angles(a)
    a = np.asarray(a, dtype=float)
    if a.shape == (2,):
        return direction_from_angles(a)
    if a.shape == (3,):
        return a
    raise DomainError("expected AnglePair, (az, el) or 3-vector direction")


def steering_vector(positions: np.ndarray, f: float, a) -> np.ndarray:
    """Steering vector entries exp(+j 2 pi f / c * p_q . t) for local positions."""
    if f <= 0:
        raise DomainError("frequency must be positive")
    t = _as_direction(a)
    phase = (2 * np.pi * f / C) * (np.asarray(positions) @ t)
    return np.exp(1j * phase)


def steering_with_gradient(positions: np.ndarray, f: float, t_local: np.ndarray):
    """Steering vector and its (n, 3) gradient w.r.t. the local direction."""
    positions = np.asarray(positions)
    k = 2 * np.pi * f / C
    a = np.exp(1j * k * (positions @ t_local))
    grad = 1j * k * positions * a[:, None]
    return a, grad


def beamforming_vector(positions: np.ndarray, f: float, beam) -> np.ndarray:
    """Phase-shifter beamforming vector: conjugate-matched to steering_vector."""
    if f <= 0:
        raise DomainError("frequency must be positive")
    t = _as_direction(beam)
    phase = (2 * np.pi * f / C) * (np.asarray(positions) @ t)
    return np.exp(-1j * phase)


def array_factor(ae_positions: np.ndarray, f_k: float, f_c: float, steer, beam, bse: bool = False) -> complex:
    """Per-SA analog beamforming gain.

    Without beam split (bse=False) the phase-shifter response tracks the
    subcarrier frequency; with bse=True the beamforming phase stays pinned
    at f_c while the propagation phase runs at f_k, so off-center
    subcarriers lose gain.  |result| <= sqrt(n_ae) with equality at a
    matched beam (and f_k = f_c when bse is on).
    """
    value, _ = array_factor_with_gradient(ae_positions, f_k, f_c, _as_direction(steer), _as_direction(beam), bse)
    return value


def array_factor_with_gradient(
    ae_positions: np.ndarray,
    f_k: float,
    f_c: float,
    t_steer: np.ndarray,
    t_beam: np.ndarray,
    bse: bool,
):
    """Array factor plus its 3-vector gradient w.r.t. the steering direction."""
    if f_k <= 0 or f_c <= 0:
        raise DomainError("frequencies must be positive")
    ae_positions = np.asarray(ae_positions)
    n = ae_positions.shape[0]
    psi_steer = ae_positions @ t_steer
    psi_beam = ae_positions @ t_beam
    f_beam = f_c if bse else f_k
    phase = (2 * np.pi / C) * (f_k * psi_steer - f_beam * psi_beam)
    terms = np.exp(1j * phase)
    value = terms.sum() / np.sqrt(n)
    grad = (1j * 2 * np.pi * f_k / C) * (ae_positions * terms[:, None]).sum(axis=0) / np.sqrt(n)
    return complex(value), grad
