"""Body-frame sampling on moving pixels and BFIF computation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollinearTriplet
from .flow import DepthMap, FlowField, Intrinsics, back_project
from .geometry import BodyFrame, Pose, Twist, frame_from_triplet, spatial_twist

# depth spread (m) tolerated in the 2x2 neighbourhood used for sub-pixel lookup
DEPTH_STEP_TOL = 2e-3


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 30
    d_a: float = 40.0
    tau_motion: float = 1.0
    rng_seed: int = 0
    flow_window: int = 3
    rigid_tol: float = 0.003

    def __post_init__(self):
        if self.n_samples < 3:
            raise ValueError("n_samples must be >= 3")
        if not (self.d_a > 0 and self.tau_motion > 0):
            raise ValueError("d_a and tau_motion must be positive")
        if self.flow_window < 0 or not self.rigid_tol > 0:
            raise ValueError("flow_window must be >= 0 and rigid_tol positive")


@dataclass(frozen=True, eq=False)
class FramePair:
    prev: BodyFrame
    curr: BodyFrame
    pixels: tuple


def motion_region(x: FlowField, tau_motion: float) -> np.ndarray:
    return x.valid & (x.magnitude() > tau_motion)


def sample_motion_pixels(x: FlowField, cfg: SamplerConfig, rng=None) -> list[tuple[int, int]]:
    """Up to n_samples distinct (u, v) pixels where the effective flow exceeds tau_motion."""
    rows, cols = np.nonzero(motion_region(x, cfg.tau_motion))
    if rows.size == 0:
        return []
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    take = rng.choice(rows.size, size=min(cfg.n_samples, rows.size), replace=False)
    return [(int(cols[i]), int(rows[i])) for i in take]


def _depth_at(depth: DepthMap, u: float, v: float):
    """Bilinear depth at a sub-pixel location, or None across a depth step."""
    h, w = depth.shape
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        return None
    u0, v0 = min(int(np.floor(u)), w - 2), min(int(np.floor(v)), h - 2)
    u0, v0 = max(u0, 0), max(v0, 0)
    patch_ok = depth.valid[v0:v0 + 2, u0:u0 + 2]
    if not patch_ok.all():
        return None
    patch = depth.values[v0:v0 + 2, u0:u0 + 2]
    if patch.max() - patch.min() > DEPTH_STEP_TOL:
        return None
    a, b = u - u0, v - v0
    return float((1 - b) * ((1 - a) * patch[0, 0] + a * patch[0, 1])
                 + b * ((1 - a) * patch[1, 0] + a * patch[1, 1]))


def local_flow(o: FlowField, depth: DepthMap, u: int, v: int, radius: int) -> np.ndarray:
    """Observed flow at (u, v) from an affine fit over the surrounding window.

    Only pixels on the same surface (depth within DEPTH_STEP_TOL) take part,
    so the fit does not mix objects. Rigid motion makes flow locally affine,
    hence the fit is exact on clean flow and averages out per-pixel noise.
    Falls back to the raw vector when too few pixels qualify.
    """
    if radius <= 0:
        return o.vectors[v, u]
    h, w = depth.shape
    u0, u1, v0, v1 = max(u - radius, 0), min(u + radius + 1, w), max(v - radius, 0), min(v + radius + 1, h)
    win = (slice(v0, v1), slice(u0, u1))
    sel = o.valid[win] & depth.valid[win] & (np.abs(depth.values[win] - depth.values[v, u]) < DEPTH_STEP_TOL)
    if sel.sum() < 6:
        return o.vectors[v, u]
    vv, uu = np.mgrid[v0:v1, u0:u1]
    A = np.column_stack([uu[sel] - u, vv[sel] - v, np.ones(sel.sum())])
    coef = np.linalg.lstsq(A, o.vectors[win][sel], rcond=None)[0]
    return coef[2]


def _pick_partners(anchor, pool, d_a):
    """Pair of pool indices forming the largest pixel triangle with ``anchor``
    while keeping every side within d_a. Candidates are ranked by area so the
    caller can fall back when 3-D construction fails."""
    near = [i for i, p in enumerate(pool) if np.hypot(p[0] - anchor[0], p[1] - anchor[1]) <= d_a]
    ranked = []
    for ii, i in enumerate(near):
        for j in near[ii + 1:]:
            p, q = pool[i], pool[j]
            if np.hypot(p[0] - q[0], p[1] - q[1]) > d_a:
                continue
            area = abs((p[0] - anchor[0]) * (q[1] - anchor[1])
                       - (q[0] - anchor[0]) * (p[1] - anchor[1]))
            if area > 0:
                ranked.append((-area, i, j))
    ranked.sort()
    return [(i, j) for _, i, j in ranked]


def build_frame_pairs(pixels, x: FlowField, o: FlowField, depth_prev: DepthMap,
                      depth_curr: DepthMap, cam_motion: Pose, k: Intrinsics,
                      cfg: SamplerConfig, max_attempts: int = 8) -> list[FramePair]:
    """Group sampled pixels into disjoint triplets and track each frame to t.

    The previous pose lives in the camera frame at t-1 (the space frame). The
    current pose is rebuilt from the same three pixels advected by the observed
    flow, back-projected with the current depth and mapped back into the space
    frame. Triplets that fail any step are dropped, as are triplets whose side
    lengths change by more than rigid_tol (they straddle bodies or were
    tracked onto another surface).
    """
    to_space = cam_motion.inverse()
    pool = list(pixels)
    pairs = []
    while len(pool) >= 3:
        anchor = pool.pop(0)
        made = None
        for i, j in _pick_partners(anchor, pool, cfg.d_a)[:max_attempts]:
            made = _make_pair((anchor, pool[i], pool[j]), x, o, depth_prev, depth_curr,
                              to_space, k, cfg)
            if made is not None:
                for idx in sorted((i, j), reverse=True):
                    pool.pop(idx)
                break
        if made is not None:
            pairs.append(made)
    return pairs


def _make_pair(trip, x, o, depth_prev, depth_curr, to_space, k, cfg):
    prev_pts, curr_pts, curr_pix = [], [], []
    for (u, v) in trip:
        if not (x.valid[v, u] and o.valid[v, u] and depth_prev.valid[v, u]):
            return None
        prev_pts.append(back_project((u, v), depth_prev.values[v, u], k))
        du, dv = local_flow(o, depth_prev, u, v, cfg.flow_window)
        uc, vc = u + du, v + dv
        z = _depth_at(depth_curr, uc, vc)
        if z is None:
            return None
        curr_pts.append(to_space.apply(back_project((uc, vc), z, k)))
        curr_pix.append((float(uc), float(vc)))
    for a, b in ((0, 1), (0, 2), (1, 2)):
        stretch = np.linalg.norm(prev_pts[a] - prev_pts[b]) - np.linalg.norm(curr_pts[a] - curr_pts[b])
        if abs(stretch) > cfg.rigid_tol:
            return None
    try:
        pose_prev = frame_from_triplet(*prev_pts)
        pose_curr = frame_from_triplet(*curr_pts)
    except CollinearTriplet:
        return None
    return FramePair(BodyFrame(pose_prev, (float(trip[0][0]), float(trip[0][1]))),
                     BodyFrame(pose_curr, curr_pix[0]), tuple(trip))


def bfifs_from_pairs(pairs) -> list[Twist]:
    return [spatial_twist(p.prev.pose, p.curr.pose, 1.0) for p in pairs]
