"""Pinhole camera, expected flow from camera motion and effective flow.

Pixels are (u, v) with u the column and v the row; arrays are indexed
[row, col]. Flow vectors are stored as (du, dv).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidDepth
from .geometry import Pose

# rays closer than this to the image plane count as behind the camera
MIN_Z = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def default(cls) -> "Intrinsics":
        return cls(fx=400.0, fy=400.0, cx=79.5, cy=59.5, width=160, height=120)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) coordinate arrays of shape (H, W)."""
        v, u = np.mgrid[0:self.height, 0:self.width].astype(float)
        return u, v

    def rays(self) -> np.ndarray:
        """(H, W, 3) camera-frame rays with unit z component."""
        u, v = self.pixel_grid()
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy,
                         np.ones_like(u)], axis=-1)

    def project(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        z = p[..., 2]
        return np.stack([self.fx * p[..., 0] / z + self.cx,
                         self.fy * p[..., 1] / z + self.cy], axis=-1)

    def in_bounds(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return ((uv[..., 0] >= -0.5) & (uv[..., 0] < self.width - 0.5)
                & (uv[..., 1] >= -0.5) & (uv[..., 1] < self.height - 0.5))

    def meters_to_pixels(self, length: float, depth: float) -> float:
        return length * 0.5 * (self.fx + self.fy) / depth


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        ok = np.asarray(self.valid, dtype=bool) & np.isfinite(vals) & (vals > 0)
        object.__setattr__(self, "values", np.where(ok, vals, 0.0))
        object.__setattr__(self, "valid", ok)

    @classmethod
    def from_array(cls, values) -> "DepthMap":
        values = np.asarray(values, dtype=float)
        return cls(values, values > 0)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class FlowField:
    vectors: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float)
        ok = np.asarray(self.valid, dtype=bool) & np.all(np.isfinite(vec), axis=-1)
        object.__setattr__(self, "vectors", np.where(ok[..., None], vec, 0.0))
        object.__setattr__(self, "valid", ok)

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(tuple(shape) + (2,)), np.ones(shape, dtype=bool))

    @property
    def shape(self):
        return self.valid.shape

    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=-1)

    def with_noise(self, sigma: float, rng: np.random.Generator) -> "FlowField":
        if sigma <= 0:
            return self
        noise = rng.normal(0.0, sigma, self.vectors.shape)
        return FlowField(self.vectors + noise, self.valid)


@dataclass(frozen=True, eq=False)
class RGBDFrame:
    rgb: np.ndarray
    depth: DepthMap


def back_project(pixel, depth: float, k: Intrinsics) -> np.ndarray:
    u, v = float(pixel[0]), float(pixel[1])
    if not depth > 0 or not np.isfinite(depth):
        raise InvalidDepth(f"depth {depth} at pixel ({u}, {v})")
    if not (-0.5 <= u < k.width - 0.5 and -0.5 <= v < k.height - 0.5):
        raise InvalidDepth(f"pixel ({u}, {v}) outside the image")
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])


def back_project_map(depth: DepthMap, k: Intrinsics) -> np.ndarray:
    """dMap: (H, W, 3) camera-frame points; invalid pixels hold zeros."""
    return k.rays() * depth.values[..., None]


def project_points(points: np.ndarray, k: Intrinsics):
    """Project (..., 3) points; returns (uv, ok) with ok false when behind or off-image."""
    z = points[..., 2]
    front = z > MIN_Z
    safe = np.where(front[..., None], points, np.array([0.0, 0.0, 1.0]))
    uv = k.project(safe)
    return uv, front & k.in_bounds(uv)


def expected_flow(depth_prev: DepthMap, cam_motion: Pose, k: Intrinsics) -> FlowField:
    """Flow a static scene would show when the camera moves by ``cam_motion``.

    ``cam_motion`` maps camera coordinates at t-1 to camera coordinates at t.
    """
    if depth_prev.shape != k.shape:
        raise DimensionMismatch(f"depth {depth_prev.shape} vs image {k.shape}")
    pts = cam_motion.apply(back_project_map(depth_prev, k))
    uv, ok = project_points(pts, k)
    u, v = k.pixel_grid()
    vec = uv - np.stack([u, v], axis=-1)
    return FlowField(vec, ok & depth_prev.valid)


def effective_flow(observed: FlowField, expected: FlowField) -> FlowField:
    if observed.shape != expected.shape:
        raise DimensionMismatch(f"{observed.shape} vs {expected.shape}")
    return FlowField(observed.vectors - expected.vectors, observed.valid & expected.valid)


def camera_motion(world_to_cam_prev: Pose, world_to_cam_curr: Pose) -> Pose:
    """Transform taking camera-frame coordinates at t-1 to those at t."""
    return world_to_cam_curr @ world_to_cam_prev.inverse()
