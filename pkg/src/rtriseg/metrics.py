"""Instance matching plus Overlap / Boundary precision, recall and F-measure."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatch


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f_measure: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "PRF":
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(float(p), float(r), float(f))


@dataclass(frozen=True)
class Assignment:
    """One-to-one matching between predicted and GT instance IDs."""

    pred_ids: tuple
    gt_ids: tuple
    pairs: tuple  # (pred_id, gt_id, overlap F)
    f_matrix: np.ndarray

    def gt_score(self, gid) -> float:
        for _, g, f in self.pairs:
            if g == gid:
                return f
        return 0.0


def _ids(mask) -> np.ndarray:
    u = np.unique(mask)
    return u[u > 0]


def _check(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def overlap_counts(pred, gt):
    """Intersection table (n_pred, n_gt) and per-instance pixel counts."""
    pred, gt = _check(pred, gt)
    pids, gids = _ids(pred), _ids(gt)
    pi = np.searchsorted(pids, pred.ravel())
    gi = np.searchsorted(gids, gt.ravel())
    fg = (pred.ravel() > 0) & (gt.ravel() > 0)
    inter = np.zeros((len(pids), len(gids)))
    np.add.at(inter, (pi[fg], gi[fg]), 1)
    psize = np.array([np.count_nonzero(pred == i) for i in pids], dtype=float)
    gsize = np.array([np.count_nonzero(gt == i) for i in gids], dtype=float)
    return pids, gids, inter, psize, gsize


def match_instances(pred, gt) -> Assignment:
    """Hungarian matching maximising summed pairwise Overlap F; pairs with no
    overlap are left unmatched."""
    pids, gids, inter, psize, gsize = overlap_counts(pred, gt)
    if len(pids) == 0 or len(gids) == 0:
        return Assignment(tuple(pids.tolist()), tuple(gids.tolist()), (), np.zeros((len(pids), len(gids))))
    F = 2 * inter / (psize[:, None] + gsize[None, :])
    rows, cols = linear_sum_assignment(F, maximize=True)
    pairs = tuple((int(pids[r]), int(gids[c]), float(F[r, c])) for r, c in zip(rows, cols) if inter[r, c] > 0)
    return Assignment(tuple(pids.tolist()), tuple(gids.tolist()), pairs, F)


def overlap_prf(pred, gt, assignment: Assignment | None = None) -> PRF:
    pred, gt = _check(pred, gt)
    if assignment is None:
        assignment = match_instances(pred, gt)
    tp = sum(np.count_nonzero((pred == p) & (gt == g)) for p, g, _ in assignment.pairs)
    n_pred = np.count_nonzero(pred > 0)
    n_gt = np.count_nonzero(gt > 0)
    # empty prediction is vacuously precise; empty GT is vacuously recalled
    p = tp / n_pred if n_pred else 1.0
    r = tp / n_gt if n_gt else 1.0
    return PRF.from_pr(p, r)


def instance_boundary(mask) -> np.ndarray:
    """Pixels of a binary mask with a 4-neighbour outside it; the image edge is
    not a transition (edge padding)."""
    m = np.asarray(mask, dtype=bool)
    p = np.pad(m, 1, mode="edge")
    inner = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~inner


def _near(a, b, dilation: int) -> np.ndarray:
    """Pixels of a within Chebyshev distance ``dilation`` of some pixel of b."""
    if dilation <= 0:
        return a & b
    grown = ndimage.binary_dilation(b, structure=np.ones((2 * dilation + 1,) * 2, dtype=bool))
    return a & grown


def boundary_prf(pred, gt, assignment: Assignment | None = None, dilation: int = 2) -> PRF:
    pred, gt = _check(pred, gt)
    if assignment is None:
        assignment = match_instances(pred, gt)
    pb = {int(i): instance_boundary(pred == i) for i in assignment.pred_ids}
    gb = {int(i): instance_boundary(gt == i) for i in assignment.gt_ids}
    tp_p = tp_g = 0
    for p, g, _ in assignment.pairs:
        tp_p += np.count_nonzero(_near(pb[p], gb[g], dilation))
        tp_g += np.count_nonzero(_near(gb[g], pb[p], dilation))
    n_p = sum(np.count_nonzero(b) for b in pb.values())
    n_g = sum(np.count_nonzero(b) for b in gb.values())
    return PRF.from_pr(tp_p / n_p if n_p else 1.0, tp_g / n_g if n_g else 1.0)


def correct_segment_rate(pred, gt, threshold: float = 0.75, assignment: Assignment | None = None) -> float:
    """Fraction of GT objects whose matched prediction reaches Overlap F >= threshold."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    pred, gt = _check(pred, gt)
    if assignment is None:
        assignment = match_instances(pred, gt)
    if not assignment.gt_ids:
        return 1.0
    hits = sum(1 for _, _, f in assignment.pairs if f >= threshold)
    return hits / len(assignment.gt_ids)


@dataclass(frozen=True)
class MetricRow:
    scene: str
    step: int | str
    overlap: PRF
    boundary: PRF
    correct_rate: float

    def values(self) -> list[float]:
        o, b = self.overlap, self.boundary
        return [o.precision, o.recall, o.f_measure, b.precision, b.recall, b.f_measure, self.correct_rate]


def evaluate(pred, gt, scene: str = "scene", step: int | str = 0, threshold: float = 0.75,
             dilation: int = 2) -> MetricRow:
    a = match_instances(pred, gt)
    return MetricRow(scene, step, overlap_prf(pred, gt, a), boundary_prf(pred, gt, a, dilation),
                     correct_segment_rate(pred, gt, threshold, a))


HEADER = ("scene", "step", "overlap_P", "overlap_R", "overlap_F",
          "boundary_P", "boundary_R", "boundary_F", "correct_rate")


def final_rows(rows) -> list[MetricRow]:
    """Last row of every scene, in order of first appearance."""
    last: dict[str, MetricRow] = {}
    for r in rows:
        last[r.scene] = r
    return list(last.values())


def aggregate(rows) -> MetricRow:
    """Column means over the final step of every scene."""
    rows = final_rows(rows)
    if not rows:
        raise ValueError("no rows to aggregate")
    m = np.mean([r.values() for r in rows], axis=0)
    return MetricRow("mean", "final", PRF(*m[0:3]), PRF(*m[3:6]), float(m[6]))


def format_report(rows, with_aggregate: bool = True) -> str:
    rows = list(rows)
    lines = ["\t".join(HEADER)]
    body = rows + ([aggregate(rows)] if with_aggregate and rows else [])
    for r in body:
        lines.append("\t".join([str(r.scene), str(r.step)] + [f"{x:.6f}" for x in r.values()]))
    return "\n".join(lines) + "\n"


def rate_curve(rows, n_steps: int | None = None) -> np.ndarray:
    """Mean correct-segment rate per interaction step over scenes. A scene that
    stopped early keeps its last value for the remaining steps."""
    per: dict[str, dict[int, float]] = {}
    for r in rows:
        if isinstance(r.step, int):
            per.setdefault(r.scene, {})[r.step] = r.correct_rate
    if not per:
        return np.zeros(0)
    top = max(max(d) for d in per.values()) if n_steps is None else n_steps
    curves = []
    for d in per.values():
        c, last = [], 0.0
        for s in range(top + 1):
            last = d.get(s, last)
            c.append(last)
        curves.append(c)
    return np.mean(curves, axis=0)


def parse_report(text: str) -> list[MetricRow]:
    rows = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0] == "scene":
            continue
        vals = [float(x) for x in parts[2:9]]
        step = int(parts[1]) if parts[1].lstrip("-").isdigit() else parts[1]
        rows.append(MetricRow(parts[0], step, PRF(*vals[0:3]), PRF(*vals[3:6]), vals[6]))
    return rows
