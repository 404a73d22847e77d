"""The observe-while-interacting episode loop, episode recording and replay."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .action import PushAction, find_action
from .config import EpisodeConfig, save_config
from .errors import ContactMiss, EpisodeError, SceneParseError
from .flow import FlowField, Intrinsics, RGBDFrame
from .geometry import Pose
from .metrics import MetricRow, evaluate
from .segmenter import Segmenter
from .simulator import Scene, apply_push, gt_flow, load_scene, random_scene, render


@dataclass
class EpisodeRecord:
    """Frames of one episode. flows[i] is the flow from frame i to i+1 and
    boundaries[j] the index of the last frame of interaction j+1."""

    k: Intrinsics
    rgb: list = field(default_factory=list)
    depth: list = field(default_factory=list)
    gt: list = field(default_factory=list)
    poses: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    boundaries: list = field(default_factory=list)

    def add(self, rendered, pose: Pose, flow: FlowField | None = None):
        rgb, depth, labels = rendered
        self.rgb.append(rgb)
        self.depth.append(depth)
        self.gt.append(labels)
        self.poses.append(pose)
        if flow is not None:
            self.flows.append(flow)

    def frame(self, i: int) -> RGBDFrame:
        return RGBDFrame(self.rgb[i], self.depth[i])

    def __len__(self):
        return len(self.rgb)


@dataclass
class EpisodeResult:
    name: str
    final_mask: np.ndarray
    snapshots: list          # L_t* at every interaction boundary, step 0 first
    rows: list               # one MetricRow per snapshot
    actions: list
    masks: list              # mask after every frame
    prompts: list            # per frame: {new id: seed pixels}
    record: EpisodeRecord
    frame_ms: list = field(default_factory=list)


def scene_for(cfg: EpisodeConfig) -> tuple[Scene, str]:
    if cfg.scene:
        try:
            return load_scene(cfg.scene), Path(cfg.scene).stem
        except OSError as e:
            raise SceneParseError(f"cannot read scene {cfg.scene}: {e}") from e
    return random_scene(cfg.seed, cfg.n_objects), f"seed{cfg.seed}"


def _push(scene: Scene, a: PushAction, k: Intrinsics, sub_steps: int, i: int) -> list[Scene]:
    try:
        return apply_push(scene, a, k, sub_steps)
    except ContactMiss as e:
        raise EpisodeError(f"interaction {i}: {e}") from e


def run_episode(cfg: EpisodeConfig, scene: Scene | None = None, name: str | None = None) -> EpisodeResult:
    """Alternate push selection and per-frame segmentation until no valid push
    remains or the interaction budget is spent."""
    k = cfg.camera
    if scene is None:
        scene, default_name = scene_for(cfg)
        name = name or default_name
    name = name or f"seed{cfg.seed}"
    noise_rng = np.random.default_rng([cfg.seed, 7])
    seg = Segmenter(k, cfg.sampler, cfg.cluster, cfg.seg)
    rec = EpisodeRecord(k)
    cur = render(scene, k)
    rec.add(cur, scene.camera_pose())
    masks, prompts = [seg.labels.copy()], [{}]
    snaps = [seg.labels.copy()]
    ev = cfg.eval
    rows = [evaluate(seg.labels, cur[2], name, 0, ev.correct_threshold, ev.boundary_dilation)]
    actions, times = [], []
    for i in range(1, cfg.max_interactions + 1):
        a = find_action(seg.labels, cur[1], k, cfg.action)
        if a is None:
            break
        actions.append(a)
        rec.actions.append(a)
        for nxt_scene in _push(scene, a, k, cfg.sub_steps, i):
            nxt = render(nxt_scene, k)
            o = gt_flow(scene, nxt_scene, k, (cur, nxt))
            rec.add(nxt, nxt_scene.camera_pose(), o)
            o = o.with_noise(cfg.flow_noise, noise_rng)
            t0 = time.perf_counter()
            res = seg.step(RGBDFrame(cur[0], cur[1]), RGBDFrame(nxt[0], nxt[1]),
                           scene.camera_pose(), nxt_scene.camera_pose(), o)
            times.append(1000 * (time.perf_counter() - t0))
            masks.append(res.labels.copy())
            prompts.append(res.new_seeds)
            scene, cur = nxt_scene, nxt
        rec.boundaries.append(len(rec) - 1)
        snaps.append(seg.labels.copy())
        rows.append(evaluate(seg.labels, cur[2], name, i, ev.correct_threshold, ev.boundary_dilation))
    return EpisodeResult(name, seg.labels.copy(), snaps, rows, actions, masks, prompts, rec, times)


def simulate_episode(cfg: EpisodeConfig, scene: Scene | None = None) -> EpisodeRecord:
    """Record an episode without running the segmenter.

    Pushes are chosen as if the segmentation were perfect: objects already
    pushed count as segmented (their GT labels form the mask).
    """
    k = cfg.camera
    if scene is None:
        scene, _ = scene_for(cfg)
    rec = EpisodeRecord(k)
    cur = render(scene, k)
    rec.add(cur, scene.camera_pose())
    pushed: set[int] = set()
    for i in range(1, cfg.max_interactions + 1):
        oracle = np.where(np.isin(cur[2], list(pushed)), cur[2], 0)
        a = find_action(oracle, cur[1], k, cfg.action)
        if a is None:
            break
        pushed.add(int(cur[2][a.contact[1], a.contact[0]]))
        rec.actions.append(a)
        for nxt_scene in _push(scene, a, k, cfg.sub_steps, i):
            nxt = render(nxt_scene, k)
            rec.add(nxt, nxt_scene.camera_pose(), gt_flow(scene, nxt_scene, k, (cur, nxt)))
            scene, cur = nxt_scene, nxt
        rec.boundaries.append(len(rec) - 1)
    return rec


def segment_record(rec: EpisodeRecord, cfg: EpisodeConfig, flows=None):
    """Run the segmenter over every consecutive frame pair of a record.

    ``flows`` replaces the record's GT flow (e.g. flow read from files).
    Returns (masks per frame, prompts per frame)."""
    flows = rec.flows if flows is None else flows
    if len(flows) != len(rec) - 1:
        raise EpisodeError(f"{len(rec)} frames need {len(rec) - 1} flow fields, got {len(flows)}")
    rng = np.random.default_rng([cfg.seed, 7])
    seg = Segmenter(rec.k, cfg.sampler, cfg.cluster, cfg.seg)
    masks, prompts = [seg.labels.copy()], [{}]
    for t in range(1, len(rec)):
        o = flows[t - 1].with_noise(cfg.flow_noise, rng)
        res = seg.step(rec.frame(t - 1), rec.frame(t), rec.poses[t - 1], rec.poses[t], o)
        masks.append(res.labels.copy())
        prompts.append(res.new_seeds)
    return masks, prompts


# ---- episode directories -------------------------------------------------

def intrinsics_dict(k: Intrinsics) -> dict:
    return {f.name: getattr(k, f.name) for f in dataclasses.fields(k)}


def save_record(rec: EpisodeRecord, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for t in range(len(rec)):
        fileio.write_ppm(out / f"rgb_{t:04d}.ppm", rec.rgb[t])
        fileio.write_pfm(out / f"depth_{t:04d}.pfm", rec.depth[t])
        fileio.write_pgm16(out / f"gtmask_{t:04d}.pgm", rec.gt[t])
        fileio.write_pose(out / f"pose_{t:04d}.txt", rec.poses[t])
        if t > 0:
            fileio.write_flo(out / f"gtflow_{t:04d}.flo", rec.flows[t - 1])
    meta = dict(intrinsics_dict(rec.k), frames=len(rec),
                boundaries=" ".join(str(b) for b in rec.boundaries) or "none")
    fileio.write_keyvalue(out / "episode.txt", meta)
    (out / "actions.txt").write_text("".join(a.record() + "\n" for a in rec.actions))
    return out


def load_record(path, flow_prefix: str = "gtflow") -> EpisodeRecord:
    path = Path(path)
    meta = fileio.read_keyvalue(path / "episode.txt")
    k = Intrinsics(float(meta["fx"]), float(meta["fy"]), float(meta["cx"]), float(meta["cy"]),
                   int(meta["width"]), int(meta["height"]))
    rec = EpisodeRecord(k)
    n = int(meta["frames"])
    for t in range(n):
        rec.rgb.append(fileio.read_ppm(path / f"rgb_{t:04d}.ppm"))
        rec.depth.append(fileio.read_pfm(path / f"depth_{t:04d}.pfm"))
        gt = path / f"gtmask_{t:04d}.pgm"
        rec.gt.append(fileio.read_pgm(gt) if gt.exists() else None)
        rec.poses.append(fileio.read_pose(path / f"pose_{t:04d}.txt"))
        if t > 0:
            rec.flows.append(fileio.read_flo(path / f"{flow_prefix}_{t:04d}.flo"))
    if meta.get("boundaries", "none") != "none":
        rec.boundaries = [int(b) for b in meta["boundaries"].split()]
    acts = path / "actions.txt"
    if acts.exists():
        rec.actions = [a for a in map(PushAction.parse, acts.read_text().splitlines()) if a]
    return rec


def save_masks(masks, prompts, out) -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for t, m in enumerate(masks):
        fileio.write_pgm16(out / f"mask_{t:04d}.pgm", m)
        fileio.write_prompts(out / f"prompts_{t:04d}.txt", prompts[t])


def save_result(res: EpisodeResult, out, cfg: EpisodeConfig | None = None) -> Path:
    out = Path(out)
    save_record(res.record, out)
    save_masks(res.masks, res.prompts, out)
    for i, m in enumerate(res.snapshots):
        fileio.write_pgm16(out / f"lstar_{i:02d}.pgm", m)
    if cfg is not None:
        save_config(out / "config.txt", cfg)
    return out


def evaluate_dirs(pred_dir, gt_dir, name: str | None = None, threshold: float = 0.75,
                  dilation: int = 2, pattern: str = "mask_*.pgm") -> list[MetricRow]:
    """Score ``mask_NNNN.pgm`` files against ``gtmask_NNNN.pgm`` of the same index."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    name = name or gt_dir.name
    rows = []
    files = sorted(pred_dir.glob(pattern))
    if not files:
        raise FileNotFoundError(f"no {pattern} files in {pred_dir}")
    for f in files:
        idx = f.stem.rsplit("_", 1)[-1]
        gt = gt_dir / f"gtmask_{idx}.pgm"
        if not gt.exists():
            continue
        rows.append(evaluate(fileio.read_pgm(f), fileio.read_pgm(gt), name, int(idx), threshold, dilation))
    if not rows:
        raise FileNotFoundError(f"no prediction in {pred_dir} has a matching GT mask in {gt_dir}")
    return rows

