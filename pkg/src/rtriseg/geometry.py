"""Rigid transforms, body frames and spatial twists."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CollinearTriplet, NonPositiveDt

ORTHO_TOL = 1e-9
# triangles below this area (m^2) give an unstable normal
EPS_AREA = 1e-6


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = skew(k)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True, eq=False)
class Pose:
    """Element of SE(3): x -> R x + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose has non-finite entries")
        if np.abs(R.T @ R - np.eye(3)).max() >= ORTHO_TOL or np.linalg.det(R) <= 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform (..., 3) points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol)
                and np.allclose(self.translation, other.translation, atol=atol))

    def __repr__(self):
        return f"Pose(R={self.rotation.tolist()}, t={self.translation.tolist()})"


@dataclass(frozen=True, eq=False)
class Twist:
    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        w = np.array(self.angular, dtype=float).reshape(3)
        v = np.array(self.linear, dtype=float).reshape(3)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise ValueError("twist has non-finite components")
        object.__setattr__(self, "angular", w)
        object.__setattr__(self, "linear", v)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    @classmethod
    def from_vector(cls, x) -> "Twist":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:])

    def __repr__(self):
        return f"Twist(w={self.angular.tolist()}, v={self.linear.tolist()})"


@dataclass(frozen=True, eq=False)
class BodyFrame:
    pose: Pose
    origin_pixel: tuple[float, float]


def twist_from_bracket(m: np.ndarray) -> Twist:
    """Read (w, v) off a 4x4 [V]; the rotational block is symmetrized first."""
    W = m[:3, :3]
    W = 0.5 * (W - W.T)
    return Twist(vee(W), m[:3, 3].copy())


def spatial_twist(T_prev: Pose, T_curr: Pose, dt: float = 1.0) -> Twist:
    """Spatial twist of a frame seen at two instants.

    The pose derivative is a forward difference over ``dt``, so the result is
    Tdot T^-1 = (T_curr T_prev^-1 - I) / dt. Any two frames fixed to one rigid
    body share T_curr T_prev^-1, hence the same twist.
    """
    if not dt > 0:
        raise NonPositiveDt(f"dt must be positive, got {dt}")
    Tdot = (T_curr.matrix() - T_prev.matrix()) / dt
    return twist_from_bracket(Tdot @ T_prev.inverse().matrix())


def spatial_twist_from_derivative(T: Pose, Tdot: np.ndarray) -> Twist:
    return twist_from_bracket(np.asarray(Tdot, dtype=float) @ T.inverse().matrix())


def frame_from_triplet(p0, p1, p2) -> Pose:
    """Body frame on three points: origin p0, y toward p1, x along the normal."""
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    a = p1 - p0
    b = p2 - p0
    n = np.cross(a, b)
    area = 0.5 * np.linalg.norm(n)
    if not area > EPS_AREA:
        raise CollinearTriplet(f"triangle area {area:.3g} m^2 too small")
    y = a / np.linalg.norm(a)
    x = n / np.linalg.norm(n)
    z = np.cross(x, y)
    R = np.column_stack([x, y, z])
    # re-orthonormalize against rounding
    u, _, vt = np.linalg.svd(R)
    return Pose(u @ vt, p0)
