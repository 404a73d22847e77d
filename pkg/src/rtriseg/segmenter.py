"""Mask propagation, seeded flood fill and the per-frame segmentation step."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterConfig, group_bfifs
from .errors import DimensionMismatch
from .flow import FlowField, Intrinsics, RGBDFrame, camera_motion, effective_flow, expected_flow
from .frames import (SamplerConfig, bfifs_from_pairs, build_frame_pairs, motion_region,
                     sample_motion_pixels)
from .geometry import Pose

_N4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_N8 = _N4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class SegmenterConfig:
    tau_flow: float = 0.5
    fill_connectivity: int = 4
    min_region: int = 25
    overlap_merge_fraction: float = 0.5
    propagation: str = "affine"

    def __post_init__(self):
        if not self.tau_flow > 0:
            raise ValueError("tau_flow must be positive")
        if self.fill_connectivity not in (4, 8):
            raise ValueError("fill_connectivity must be 4 or 8")
        if self.min_region < 1 or not 0 <= self.overlap_merge_fraction <= 1:
            raise ValueError("bad min_region / overlap_merge_fraction")
        if self.propagation not in ("affine", "pixel"):
            raise ValueError(f"unknown propagation {self.propagation!r}")


def _round_half_up(x):
    return np.floor(x + 0.5).astype(np.int64)


def propagate_with_residual(labels: np.ndarray, o: FlowField, residual: np.ndarray | None = None):
    """Forward-warp labels through the observed flow.

    Each labelled pixel carries a sub-pixel offset so that slow motion (below
    half a pixel per frame) still accumulates. Collisions keep the source with
    the larger flow magnitude, then the earlier source in raster order. Pixels
    whose flow is invalid (occluded, left the view) are dropped.
    """
    labels = np.asarray(labels)
    if labels.shape != o.shape:
        raise DimensionMismatch(f"mask {labels.shape} vs flow {o.shape}")
    h, w = labels.shape
    if residual is None:
        residual = np.zeros((h, w, 2))
    out = np.zeros_like(labels)
    out_res = np.zeros((h, w, 2))
    src = np.flatnonzero((labels > 0) & o.valid)
    if src.size == 0:
        return out, out_res
    v, u = np.divmod(src, w)
    flat_vec = o.vectors.reshape(-1, 2)[src]
    flat_res = residual.reshape(-1, 2)[src]
    pu = u + flat_res[:, 0] + flat_vec[:, 0]
    pv = v + flat_res[:, 1] + flat_vec[:, 1]
    tu, tv = _round_half_up(pu), _round_half_up(pv)
    inside = (tu >= 0) & (tu < w) & (tv >= 0) & (tv < h)
    src, pu, pv, tu, tv = src[inside], pu[inside], pv[inside], tu[inside], tv[inside]
    mag = np.linalg.norm(o.vectors.reshape(-1, 2)[src], axis=1)
    tgt = tv * w + tu
    order = np.lexsort((src, -mag, tgt))
    tgt_sorted = tgt[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = tgt_sorted[1:] != tgt_sorted[:-1]
    win = order[first]
    out.reshape(-1)[tgt[win]] = labels.reshape(-1)[src[win]]
    out_res.reshape(-1, 2)[tgt[win]] = np.stack([pu[win] - tu[win], pv[win] - tv[win]], axis=1)
    return out, out_res


def label_affine_flow(labels: np.ndarray, o: FlowField, min_pixels: int = 6,
                      outlier_k: float = 3.0) -> FlowField:
    """Replace the flow inside every label by an affine fit to its valid vectors.

    Labels are rigid objects seen under small motion, so their image flow is
    close to affine; fitting over hundreds of pixels removes per-pixel noise
    before the forward warp. One refit after dropping residuals beyond
    ``outlier_k`` median absolute deviations. Labels with too few valid
    pixels keep their raw flow. Validity is unchanged.
    """
    labels = np.asarray(labels)
    vec = o.vectors.copy()
    v, u = np.nonzero((labels > 0) & o.valid)
    if v.size == 0:
        return o
    lab = labels[v, u]
    for ell in np.unique(lab):
        sel = lab == ell
        if sel.sum() < min_pixels:
            continue
        A = np.column_stack([u[sel], v[sel], np.ones(sel.sum())]).astype(float)
        b = o.vectors[v[sel], u[sel]]
        coef = np.linalg.lstsq(A, b, rcond=None)[0]
        r = np.linalg.norm(A @ coef - b, axis=1)
        keep = r <= outlier_k * max(np.median(r), 1e-9) * 1.4826
        if min_pixels <= keep.sum() < sel.sum():
            coef = np.linalg.lstsq(A[keep], b[keep], rcond=None)[0]
        allv, allu = np.nonzero(labels == ell)
        full = np.column_stack([allu, allv, np.ones(allu.size)]) @ coef
        vec[allv, allu] = full
    return FlowField(vec, o.valid)


def propagate_mask(labels: np.ndarray, o: FlowField) -> np.ndarray:
    return propagate_with_residual(labels, o)[0]


def warp_region(region: np.ndarray, o: FlowField) -> tuple[np.ndarray, FlowField]:
    """Carry a t-1 pixel set, and the observed flow, onto the t grid."""
    h, w = region.shape
    out = np.zeros((h, w), dtype=bool)
    vec = np.zeros((h, w, 2))
    has = np.zeros((h, w), dtype=bool)
    v, u = np.nonzero(o.valid)
    if v.size:
        d = o.vectors[v, u]
        tu = _round_half_up(u + d[:, 0])
        tv = _round_half_up(v + d[:, 1])
        ok = (tu >= 0) & (tu < w) & (tv >= 0) & (tv < h)
        # moving sources written last so they win collisions
        mov = region[v, u]
        for sel in (ok & ~mov, ok & mov):
            vec[tv[sel], tu[sel]] = d[sel]
            has[tv[sel], tu[sel]] = True
        out[tv[ok & mov], tu[ok & mov]] = True
    return out, FlowField(vec, has)


def seed_pixels(group, pairs, shape) -> list[tuple[int, int]]:
    h, w = shape
    seeds = []
    for idx in group:
        u, v = pairs[idx].curr.origin_pixel
        iu, iv = int(np.floor(u + 0.5)), int(np.floor(v + 0.5))
        if 0 <= iu < w and 0 <= iv < h and (iu, iv) not in seeds:
            seeds.append((iu, iv))
    return seeds


def seed_and_fill(mask: np.ndarray, groups, pairs, o: FlowField, region: np.ndarray,
                  cfg: SegmenterConfig = SegmenterConfig(), next_id: int | None = None):
    """Seed an object ID per BFIF group and grow it by breadth-first search.

    ``o`` and ``region`` must be on the grid of ``mask``. A group adopts an
    existing ID when at least ``overlap_merge_fraction`` of its seeds already
    carry it; otherwise it gets a fresh ID. Growth enters a 4/8-neighbour q of
    an ID pixel p when q is in ``region``, is background (or already that ID)
    and |o(p) - o(q)| < tau_flow. Fresh regions smaller than ``min_region``
    revert to background; their IDs are not reused.

    Returns (labels, next_id, new_seeds) where new_seeds maps each surviving
    fresh ID to its seed pixels.
    """
    labels = np.array(mask, copy=True)
    if labels.shape != region.shape or labels.shape != o.shape:
        raise DimensionMismatch("mask, flow and region must share a grid")
    if next_id is None:
        next_id = int(labels.max()) + 1 if labels.size else 1
    next_id = max(next_id, int(labels.max()) + 1 if labels.size else 1)
    h, w = labels.shape
    nbrs = _N4 if cfg.fill_connectivity == 4 else _N8
    vec = o.vectors
    new_seeds = {}
    for group in sorted(groups, key=lambda g: (-len(g), min(g))):
        seeds = seed_pixels(group, pairs, labels.shape)
        if not seeds:
            continue
        counts = Counter(int(labels[v, u]) for u, v in seeds if labels[v, u] > 0)
        fresh = True
        if counts:
            lab, c = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            if c >= cfg.overlap_merge_fraction * len(seeds):
                ell, fresh = lab, False
        if fresh:
            ell = next_id
            next_id += 1
        added = np.zeros((h, w), dtype=bool)
        queue = deque()
        seen = np.zeros((h, w), dtype=bool)
        placed = []
        for u, v in seeds:
            if labels[v, u] == 0:
                labels[v, u] = ell
                added[v, u] = True
            if labels[v, u] == ell:
                seen[v, u] = True
                queue.append((u, v))
                placed.append((u, v))
        while queue:
            u, v = queue.popleft()
            fu, fv = vec[v, u]
            for du, dv in nbrs:
                qu, qv = u + du, v + dv
                if not (0 <= qu < w and 0 <= qv < h) or seen[qv, qu] or not region[qv, qu]:
                    continue
                lq = labels[qv, qu]
                if lq != 0 and lq != ell:
                    continue
                gu, gv = vec[qv, qu]
                if (fu - gu) ** 2 + (fv - gv) ** 2 >= cfg.tau_flow ** 2:
                    continue
                seen[qv, qu] = True
                if lq == 0:
                    labels[qv, qu] = ell
                    added[qv, qu] = True
                queue.append((qu, qv))
        if fresh:
            if added.sum() < cfg.min_region:
                labels[added] = 0
            else:
                new_seeds[ell] = placed
    return labels, next_id, new_seeds


@dataclass
class StepResult:
    labels: np.ndarray
    pairs: list
    groups: list
    new_seeds: dict
    moving: np.ndarray


@dataclass
class Segmenter:
    """Per-episode segmentation state: the evolving mask and ID counter."""

    k: Intrinsics
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    seg: SegmenterConfig = field(default_factory=SegmenterConfig)
    labels: np.ndarray | None = None
    next_id: int = 1

    def __post_init__(self):
        if self.labels is None:
            self.labels = np.zeros(self.k.shape, dtype=np.int32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        self.next_id = max(self.next_id, int(self.labels.max()) + 1)
        self._residual = np.zeros(self.k.shape + (2,))
        self._rng = np.random.default_rng(self.sampler.rng_seed)

    def step(self, prev: RGBDFrame, curr: RGBDFrame, pose_prev: Pose, pose_curr: Pose,
             observed: FlowField) -> StepResult:
        cam = camera_motion(pose_prev, pose_curr)
        x = effective_flow(observed, expected_flow(prev.depth, cam, self.k))
        moving = motion_region(x, self.sampler.tau_motion)
        pixels = sample_motion_pixels(x, self.sampler, rng=self._rng)
        pairs = build_frame_pairs(pixels, x, observed, prev.depth, curr.depth, cam,
                                  self.k, self.sampler)
        groups = group_bfifs(bfifs_from_pairs(pairs), self.cluster)
        carry = label_affine_flow(self.labels, observed) if self.seg.propagation == "affine" else observed
        labels, self._residual = propagate_with_residual(self.labels, carry, self._residual)
        new_seeds = {}
        if groups:
            region_t, flow_t = warp_region(moving, observed)
            before = labels > 0
            labels, self.next_id, new_seeds = seed_and_fill(
                labels, groups, pairs, flow_t, region_t, self.seg, self.next_id)
            self._residual[(labels > 0) & ~before] = 0.0
        self.labels = labels.astype(np.int32)
        return StepResult(self.labels, pairs, groups, new_seeds, moving)


def segment_objs(prev_img: RGBDFrame, curr_img: RGBDFrame, pose_prev: Pose, pose_curr: Pose,
                 prev_mask: np.ndarray, observed: FlowField, k: Intrinsics,
                 sampler: SamplerConfig = SamplerConfig(), cluster: ClusterConfig = ClusterConfig(),
                 seg: SegmenterConfig = SegmenterConfig(), next_id: int | None = None) -> np.ndarray:
    """One stateless update L_{t-1} -> L_t."""
    s = Segmenter(k, sampler, cluster, seg, labels=prev_mask, next_id=next_id or 1)
    return s.step(prev_img, curr_img, pose_prev, pose_curr, observed).labels
