"""Coordinate systems, rotations, direction vectors and angle conversions.

Conventions: positions are 3-vectors in meters, orientations are Euler
angles (alpha, beta, gamma) in radians applied in Z-Y-X order, azimuth is
measured from the local X-axis in the XY plane via atan2 and elevation
from the XY plane via asin.  A device array lies on its local YZ plane
with the local X-axis as the array normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, DomainError

__all__ = [
    "AnglePair",
    "Pose",
    "angles_from_direction",
    "angles_with_jacobian",
    "direction_and_distance",
    "direction_from_angles",
    "direction_jacobian",
    "euler_from_rotation",
    "global_to_local",
    "local_to_global",
    "rotation_derivatives",
    "rotation_from_euler",
]

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class AnglePair:
    """Azimuth/elevation pair in radians: az in (-pi, pi], el in [-pi/2, pi/2]."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (-np.pi - 1e-12 < self.azimuth <= np.pi + 1e-12):
            raise DomainError(f"azimuth {self.azimuth} outside (-pi, pi]")
        if abs(self.elevation) > np.pi / 2 + 1e-12:
            raise DomainError(f"elevation {self.elevation} outside [-pi/2, pi/2]")

    def as_array(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation])


@dataclass(frozen=True)
class Pose:
    """Position plus Z-Y-X Euler orientation of a device (array center)."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float).reshape(3))
        a, b, g = self.orientation
        if not (-np.pi - 1e-12 < a <= np.pi + 1e-12):
            raise DomainError(f"alpha {a} outside (-pi, pi]")
        if abs(b) > np.pi / 2 + 1e-12:
            raise DomainError(f"beta {b} outside [-pi/2, pi/2]")
        if not (-np.pi - 1e-12 < g <= np.pi + 1e-12):
            raise DomainError(f"gamma {g} outside (-pi, pi]")

    @property
    def rotation(self) -> np.ndarray:
        return rotation_from_euler(self.orientation)


def rotation_from_euler(o) -> np.ndarray:
    """3x3 rotation matrix from Z-Y-X Euler angles (alpha, beta, gamma)."""
    o = np.asarray(o, dtype=float).reshape(3)
    a, b, g = o
    if not (-np.pi - 1e-12 < a <= np.pi + 1e-12):
        raise DomainError(f"alpha {a} outside (-pi, pi]")
    if abs(b) > np.pi / 2 + 1e-12:
        raise DomainError(f"beta {b} outside [-pi/2, pi/2]")
    if not (-np.pi - 1e-12 < g <= np.pi + 1e-12):
        raise DomainError(f"gamma {g} outside (-pi, pi]")
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    return np.array(
        [
            [ca * cb, ca * sb * sg - cg * sa, sa * sg + ca * cg * sb],
            [cb * sa, ca * cg + sa * sb * sg, cg * sa * sb - ca * sg],
            [-sb, cb * sg, cb * cg],
        ]
    )


def rotation_derivatives(o) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partial derivatives of rotation_from_euler w.r.t. (alpha, beta, gamma)."""
    o = np.asarray(o, dtype=float).reshape(3)
    a, b, g = o
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cg, sg = np.cos(g), np.sin(g)
    d_alpha = np.array(
        [
            [-sa * cb, -sa * sb * sg - cg * ca, ca * sg - sa * cg * sb],
            [cb * ca, -sa * cg + ca * sb * sg, cg * ca * sb + sa * sg],
            [0.0, 0.0, 0.0],
        ]
    )
    d_beta = np.array(
        [
            [-ca * sb, ca * cb * sg, ca * cg * cb],
            [-sb * sa, sa * cb * sg, cg * sa * cb],
            [-cb, -sb * sg, -sb * cg],
        ]
    )
    d_gamma = np.array(
        [
            [0.0, ca * sb * cg + sg * sa, sa * cg - ca * sg * sb],
            [0.0, -ca * sg + sa * sb * cg, -sg * sa * sb - ca * cg],
            [0.0, cb * cg, -cb * sg],
        ]
    )
    return d_alpha, d_beta, d_gamma


def euler_from_rotation(R) -> np.ndarray:
    """Recover Z-Y-X Euler angles from a rotation matrix.

    Gimbal-locked inputs (beta = +/- pi/2) are resolved with gamma = 0 and
    the remaining yaw absorbed into alpha.
    """
    R = np.asarray(R, dtype=float).reshape(3, 3)
    if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-8 or np.linalg.det(R) < 0:
        raise DomainError("input is not a proper rotation matrix")
    sb = -R[2, 0]
    sb = min(1.0, max(-1.0, sb))
    beta = np.arcsin(sb)
    if abs(sb) > 1.0 - 1e-12:
        # Gimbal lock: alpha and gamma share an axis; convention gamma = 0.
        gamma = 0.0
        if sb > 0:
            alpha = np.arctan2(R[1, 2], R[1, 1])
        else:
            alpha = np.arctan2(-R[0, 1], R[1, 1])
    else:
        alpha = np.arctan2(R[1, 0], R[0, 0])
        gamma = np.arctan2(R[2, 1], R[2, 2])
    return np.array([alpha, beta, gamma])


def local_to_global(p_local, pose: Pose) -> np.ndarray:
    """Map a local point into the global frame: p = R p_local + p_center."""
    p_local = np.asarray(p_local, dtype=float)
    return pose.rotation @ p_local + pose.position


def global_to_local(p, pose: Pose) -> np.ndarray:
    """Map a global point into the device frame: R^T (p - p_center)."""
    p = np.asarray(p, dtype=float)
    return pose.rotation.T @ (p - pose.position)


def direction_and_distance(p_a, p_b) -> tuple[np.ndarray, float]:
    """Unit direction from A to B and the Euclidean distance."""
    p_a = np.asarray(p_a, dtype=float).reshape(3)
    p_b = np.asarray(p_b, dtype=float).reshape(3)
    delta = p_b - p_a
    d = float(np.linalg.norm(delta))
    if d < 1e-12:
        raise DegenerateGeometryError("coincident endpoints: direction undefined")
    return delta / d, d


def direction_from_angles(a: AnglePair) -> np.ndarray:
    """Unit direction [cos(az)cos(el), sin(az)cos(el), sin(el)]."""
    az, el = (a.azimuth, a.elevation) if isinstance(a, AnglePair) else np.asarray(a, dtype=float)
    ce = np.cos(el)
    return np.array([np.cos(az) * ce, np.sin(az) * ce, np.sin(el)])


def direction_jacobian(a) -> np.ndarray:
    """3x2 Jacobian of direction_from_angles w.r.t. (azimuth, elevation)."""
    az, el = (a.azimuth, a.elevation) if isinstance(a, AnglePair) else np.asarray(a, dtype=float)
    ca, sa = np.cos(az), np.sin(az)
    ce, se = np.cos(el), np.sin(el)
    return np.array([[-sa * ce, -ca * se], [ca * ce, -sa * se], [0.0, ce]])


def angles_from_direction(t) -> AnglePair:
    """Azimuth/elevation of a unit direction; azimuth 0 at the +/-z poles."""
    t = np.asarray(t, dtype=float).reshape(3)
    n = np.linalg.norm(t)
    if abs(n - 1.0) > 1e-9:
        raise DomainError(f"direction norm {n} != 1")
    tz = min(1.0, max(-1.0, t[2]))
    if abs(t[0]) < 1e-15 and abs(t[1]) < 1e-15:
        return AnglePair(0.0, np.arcsin(tz))
    return AnglePair(float(np.arctan2(t[1], t[0])), float(np.arcsin(tz)))


def angles_with_jacobian(v) -> tuple[float, float, np.ndarray]:
    """Azimuth/elevation of a general (not necessarily unit) vector plus the
    2x3 Jacobian d(az, el)/dv.  Used by the Fisher-information machinery."""
    v = np.asarray(v, dtype=float).reshape(3)
    x, y, z = v
    rxy2 = x * x + y * y
    r2 = rxy2 + z * z
    r = np.sqrt(r2)
    if r < 1e-15 or rxy2 < 1e-30:
        raise DegenerateGeometryError("angle Jacobian undefined at the pole/origin")
    az = np.arctan2(y, x)
    el = np.arcsin(z / r)
    rxy = np.sqrt(rxy2)
    d_az = np.array([-y / rxy2, x / rxy2, 0.0])
    # el = asin(z/r): d(z/r)/dv = [-zx/r^3, -zy/r^3, 1/r - z^2/r^3], 1/sqrt(1-(z/r)^2) = r/rxy
    d_el = np.array([-z * x, -z * y, rxy2]) / (r2 * rxy)
    return float(az), float(el), np.vstack([d_az, d_el])
