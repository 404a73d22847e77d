"""Push selection: table extraction, clustering of unsegmented pixels, push validation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.cluster import KMeans

from .errors import EmptyMask, NoPlaneFound
from .flow import DepthMap, Intrinsics, back_project_map

# points used to score RANSAC hypotheses
SCORE_POINTS = 4000


@dataclass(frozen=True)
class PushAction:
    contact: tuple[int, int]
    direction: tuple[float, float]
    distance: float
    contact_point: tuple[float, float, float] | None = None

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9 or not self.distance > 0:
            raise ValueError("push needs a unit direction and positive distance")

    def record(self) -> str:
        u, v = self.contact
        du, dv = self.direction
        return f"push {u} {v} {du:.9f} {dv:.9f} {self.distance:.6f}"

    @classmethod
    def parse(cls, line: str) -> "PushAction | None":
        parts = line.split()
        if parts == ["none"]:
            return None
        if len(parts) != 6 or parts[0] != "push":
            raise ValueError(f"bad action record: {line!r}")
        du, dv = float(parts[3]), float(parts[4])
        n = np.hypot(du, dv)
        return cls((int(parts[1]), int(parts[2])), (du / n, dv / n), float(parts[5]))


@dataclass(frozen=True, eq=False)
class TableModel:
    normal: np.ndarray
    offset: float
    inlier_threshold: float

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points) @ self.normal + self.offset


@dataclass(frozen=True)
class ActionConfig:
    d_push: float = 0.02
    l_act: float = 0.3
    footprint_width: float = 0.03
    k_max: int = 8
    elbow_ratio: float = 0.5
    ransac_iters: int = 500
    ransac_threshold: float = 0.005
    min_inlier_fraction: float = 0.3
    min_unsegmented: int = 30
    seed: int = 0


def fit_table(depth: DepthMap, k: Intrinsics, iters: int = 500, threshold: float = 0.005,
              seed: int = 0, min_inlier_fraction: float = 0.3) -> TableModel:
    """RANSAC plane over back-projected depth, refined by least squares on inliers.
    The normal is oriented toward the camera."""
    pts = back_project_map(depth, k)[depth.valid]
    if len(pts) < 3:
        raise NoPlaneFound("not enough valid depth")
    rng = np.random.default_rng(seed)
    tri = pts[np.array([rng.choice(len(pts), 3, replace=False) for _ in range(iters)])]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(normals, axis=1)
    ok = norm >= 1e-12
    normals, anchors = normals[ok] / norm[ok, None], tri[ok, 0]
    offsets = -np.einsum("ij,ij->i", anchors, normals)
    # hypotheses are scored on a fixed random subset; the refit below uses every point
    sub = pts if len(pts) <= SCORE_POINTS else pts[rng.choice(len(pts), SCORE_POINTS, replace=False)]
    counts = np.zeros(len(normals), dtype=int)
    for s in range(0, len(normals), 64):
        dist = sub @ normals[s:s + 64].T + offsets[s:s + 64]
        counts[s:s + 64] = (np.abs(dist) < threshold).sum(axis=0)
    if counts.size == 0 or counts.max() < min_inlier_fraction * len(sub):
        raise NoPlaneFound(f"best plane has {counts.max(initial=0)} of {len(sub)} scored inliers")
    i = int(np.argmax(counts))  # first best, as in a sequential scan
    n, d = normals[i], offsets[i]
    inl = pts[np.abs(pts @ n + d) < threshold]
    centroid = inl.mean(axis=0)
    _, _, vt = np.linalg.svd(inl - centroid, full_matrices=False)
    n = vt[-1]
    d = -centroid @ n
    # camera sits at the origin: make it lie on the positive side
    if d < 0:
        n, d = -n, -d
    return TableModel(n / np.linalg.norm(n), float(d), threshold)


def objs_above_table(depth: DepthMap, k: Intrinsics, threshold: float = 0.005, iters: int = 500,
                     seed: int = 0, min_inlier_fraction: float = 0.3,
                     plane_threshold: float | None = None) -> np.ndarray:
    """objMask: pixels lying more than ``threshold`` above the fitted table plane."""
    table = fit_table(depth, k, iters, plane_threshold or threshold, seed, min_inlier_fraction)
    height = table.signed_distance(back_project_map(depth, k))
    return (height > threshold) & depth.valid


def binarize_mask(labels) -> np.ndarray:
    return (np.asarray(labels) > 0).astype(np.uint8)


def cluster_unsegmented(objs_to_segment, k_max: int = 8, seed: int = 0,
                        elbow_ratio: float = 0.5):
    """K-Means with elbow-selected k, run per connected component.

    Returns a list of (center (u, v), member pixels (N, 2) as (u, v)).
    """
    mask = np.asarray(objs_to_segment) > 0
    if not mask.any():
        raise EmptyMask("nothing to cluster")
    comps, n = ndimage.label(mask)
    out = []
    for c in range(1, n + 1):
        v, u = np.nonzero(comps == c)
        pts = np.column_stack([u, v]).astype(float)
        out.extend(_elbow_kmeans(pts, k_max, seed, elbow_ratio))
    return out


def _elbow_kmeans(pts, k_max, seed, elbow_ratio):
    fits = []
    prev = None
    for k in range(1, min(k_max, len(pts)) + 1):
        km = KMeans(n_clusters=k, n_init=4, random_state=seed).fit(pts)
        if prev is not None:
            gain = (prev.inertia_ - km.inertia_) / prev.inertia_ if prev.inertia_ > 0 else 0.0
            if gain < elbow_ratio:
                break
        fits.append(km)
        prev = km
    km = fits[-1]
    result = []
    for j in range(km.n_clusters):
        members = pts[km.labels_ == j].astype(int)
        result.append((tuple(km.cluster_centers_[j]), members))
    return result


def boundary(points) -> list[tuple[int, int]]:
    """Cluster pixels with a 4-neighbour outside the set, ordered by angle about the centre."""
    pts = np.asarray(points, dtype=int).reshape(-1, 2)
    members = set(map(tuple, pts.tolist()))
    bnd = [p for p in members
           if any((p[0] + du, p[1] + dv) not in members for du, dv in ((1, 0), (-1, 0), (0, 1), (0, -1)))]
    center = pts.mean(axis=0)
    bnd.sort(key=lambda p: (np.arctan2(p[1] - center[1], p[0] - center[0]), p[0], p[1]))
    return bnd


def _median_depth(points, depth: DepthMap) -> float:
    pts = np.asarray(points, dtype=int)
    vals = depth.values[pts[:, 1], pts[:, 0]]
    vals = vals[depth.valid[pts[:, 1], pts[:, 0]]]
    return float(np.median(vals)) if vals.size else float(np.median(depth.values[depth.valid]))


def push_shift(direction, d_push_px: float) -> tuple[int, int]:
    return (int(np.floor(direction[0] * d_push_px + 0.5)), int(np.floor(direction[1] * d_push_px + 0.5)))


def approach_footprint(b, direction, length_px: float, width_px: float, shape) -> np.ndarray:
    """Rectangle behind b (opposite the push direction), length x width in pixels."""
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    # only the square of radius length + width around b can be inside
    r = int(np.ceil(length_px + width_px)) + 1
    u0, u1 = max(b[0] - r, 0), min(b[0] + r + 1, w)
    v0, v1 = max(b[1] - r, 0), min(b[1] + r + 1, h)
    if u0 >= u1 or v0 >= v1:
        return out
    v, u = np.mgrid[v0:v1, u0:u1]
    du, dv = u - b[0], v - b[1]
    back = -(du * direction[0] + dv * direction[1])
    across = du * -direction[1] + dv * direction[0]
    out[v0:v1, u0:u1] = (back > 0) & (back <= length_px) & (np.abs(across) <= width_px / 2)
    return out


def overlap_ratio(points, shift, obj_mask) -> float:
    """|isect| / |P| where isect = (P + shift) hits objMask outside P."""
    pts = np.asarray(points, dtype=int).reshape(-1, 2)
    h, w = obj_mask.shape
    in_p = np.zeros((h, w), dtype=bool)
    in_p[pts[:, 1], pts[:, 0]] = True
    moved = pts + np.asarray(shift, dtype=int)
    ok = (moved[:, 0] >= 0) & (moved[:, 0] < w) & (moved[:, 1] >= 0) & (moved[:, 1] < h)
    moved = moved[ok]
    hit = obj_mask[moved[:, 1], moved[:, 0]].astype(bool) & ~in_p[moved[:, 1], moved[:, 0]]
    return int(np.count_nonzero(hit)) / len(pts)


def is_valid_push(b, direction, d_push: float, l_act: float, points, obj_mask, c,
                  k: Intrinsics, depth: DepthMap, footprint_width: float = 0.03) -> bool:
    obj_mask = np.asarray(obj_mask).astype(bool)
    h, w = obj_mask.shape
    cu, cv = int(np.floor(c[0] + 0.5)), int(np.floor(c[1] + 0.5))
    if not (0 <= cu < w and 0 <= cv < h and obj_mask[cv, cu]):
        return False
    z = _median_depth(points, depth)
    length_px = k.meters_to_pixels(d_push, z)
    width_px = k.meters_to_pixels(footprint_width, z)
    pts = np.asarray(points, dtype=int).reshape(-1, 2)
    obstacles = obj_mask.copy()
    obstacles[pts[:, 1], pts[:, 0]] = False
    if (approach_footprint(b, direction, length_px, width_px, obj_mask.shape) & obstacles).any():
        return False
    return overlap_ratio(pts, push_shift(direction, length_px), obj_mask) <= l_act


def objs_to_segment(obj_mask, labels, min_size: int = 30) -> np.ndarray:
    """objMask - binL clamped at zero, with slivers and specks removed."""
    diff = (np.asarray(obj_mask).astype(int) - binarize_mask(labels)).clip(0, 1).astype(bool)
    diff = ndimage.binary_opening(diff, structure=np.ones((3, 3), dtype=bool))
    comps, n = ndimage.label(diff)
    if n:
        sizes = ndimage.sum(diff, comps, index=np.arange(1, n + 1))
        diff = np.isin(comps, 1 + np.flatnonzero(sizes >= min_size))
    return diff.astype(np.uint8)


def candidates(labels, depth: DepthMap, k: Intrinsics, cfg: ActionConfig = ActionConfig(),
               obj_mask=None):
    """Ordered (center, points, boundary point, direction) candidates plus objMask."""
    if obj_mask is None:
        obj_mask = objs_above_table(depth, k, cfg.ransac_threshold, cfg.ransac_iters, cfg.seed,
                                    cfg.min_inlier_fraction)
    todo = objs_to_segment(obj_mask, labels, cfg.min_unsegmented)
    if not todo.any():
        return obj_mask, []
    clusters = cluster_unsegmented(todo, cfg.k_max, cfg.seed, cfg.elbow_ratio)
    ov, ou = np.nonzero(obj_mask)
    scene_c = np.array([ou.mean(), ov.mean()])

    def far(p):
        return -float(np.hypot(p[0] - scene_c[0], p[1] - scene_c[1]))

    clusters = sorted(clusters, key=lambda cp: (far(cp[0]), cp[0]))
    out = []
    for center, pts in clusters:
        for b in sorted(boundary(pts), key=far):
            d = np.array([center[0] - b[0], center[1] - b[1]])
            n = np.linalg.norm(d)
            if n < 1e-9:
                continue
            out.append((center, pts, b, tuple(d / n)))
    return obj_mask, out


def find_action(labels, depth: DepthMap, k: Intrinsics, cfg: ActionConfig = ActionConfig(),
                obj_mask=None) -> PushAction | None:
    obj_mask, cands = candidates(labels, depth, k, cfg, obj_mask)
    for center, pts, b, d in cands:
        if is_valid_push(b, d, cfg.d_push, cfg.l_act, pts, obj_mask, center, k, depth,
                         cfg.footprint_width):
            return PushAction((int(b[0]), int(b[1])), d, cfg.d_push)
    return None
