"""Deterministic 2.5-D tabletop world with a downward-looking camera.

Objects are vertical prisms (a footprint polygon extruded to a height) resting
on a horizontal table. The world frame has z up; the table top is the plane
z = table_height. Cameras look along -z.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon

from .action import PushAction
from .errors import ContactMiss, SceneParseError
from .flow import DepthMap, FlowField, Intrinsics, RGBDFrame, project_points
from .geometry import Pose, rot_x, rot_z

TABLE_RGB = (245, 245, 245)
# rad of spin per cm pushed when the contact is off the centroid
SPIN_PER_CM = 0.02
SECONDARY_FRACTION = 0.4
# lever arm (m) below which a push counts as through the centroid
LEVER_EPS = 1e-3
# depth slack (m) when testing whether a point is still visible
VIS_TOL = 1e-3

PALETTE = [(200, 50, 50), (50, 160, 60), (50, 80, 200), (220, 170, 30), (150, 60, 170),
           (30, 170, 170), (230, 110, 40), (120, 120, 120)]


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    footprint: np.ndarray  # (N, 2) vertices about the centroid, object frame
    height: float
    color: tuple[int, int, int]
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def world_polygon(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        R = np.array([[c, -s], [s, c]])
        return self.footprint @ R.T + np.array([self.x, self.y])

    def shape(self) -> Polygon:
        return Polygon(self.world_polygon())

    def pose(self) -> Pose:
        return Pose(rot_z(self.yaw), (self.x, self.y, 0.0))

    def moved(self, dx: float, dy: float, dyaw: float = 0.0) -> "SceneObject":
        return dataclasses.replace(self, x=self.x + dx, y=self.y + dy, yaw=self.yaw + dyaw)

    @classmethod
    def from_world(cls, id, vertices, height, color) -> "SceneObject":
        verts = np.asarray(vertices, dtype=float).reshape(-1, 2)
        poly = Polygon(verts)
        if not poly.is_valid or poly.area <= 0:
            raise SceneParseError(f"object {id}: footprint is not a simple polygon")
        if height <= 0:
            raise SceneParseError(f"object {id}: height must be positive")
        c = np.array(poly.centroid.coords[0])
        return cls(int(id), verts - c, float(height), tuple(int(x) for x in color), c[0], c[1], 0.0)


@dataclass(frozen=True)
class CameraTrack:
    """Camera pose as a function of the step: position and yaw move at constant
    rates; ``follow_push`` makes it ride along with pushes like a wrist camera."""

    x: float = 0.0
    y: float = 0.0
    height: float = 0.6
    yaw: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw_rate: float = 0.0
    pitch: float = 0.0
    pitch_rate: float = 0.0
    follow_push: bool = True


@dataclass(frozen=True, eq=False)
class Scene:
    table_height: float
    objects: tuple
    track: CameraTrack = field(default_factory=CameraTrack)
    step: int = 0
    shift: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids) or any(i <= 0 for i in ids):
            raise SceneParseError("object ids must be unique positive integers")

    def camera_pose(self, t: int | None = None) -> Pose:
        """World -> camera transform at step t (defaults to the scene's step)."""
        t = self.step if t is None else t
        tr = self.track
        centre = np.array([tr.x + tr.vx * t, tr.y + tr.vy * t,
                           self.table_height + tr.height + tr.vz * t]) + np.array(self.shift)
        yaw = tr.yaw + tr.yaw_rate * t
        pitch = tr.pitch + tr.pitch_rate * t
        # camera axes for yaw 0: x along world x, y along world -y, z down
        down = np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]])
        R_c2w = rot_z(yaw) @ down @ rot_x(pitch)
        return Pose(R_c2w.T, -R_c2w.T @ centre)

    def object(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)

    def replace_object(self, obj: SceneObject) -> "Scene":
        objs = tuple(obj if o.id == obj.id else o for o in self.objects)
        return dataclasses.replace(self, objects=objs)

    def advance(self, n: int = 1) -> "Scene":
        return dataclasses.replace(self, step=self.step + n)


def _inside(px, py, poly):
    """Crossing-number point-in-polygon, vectorised over points."""
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < xint)
    return inside


def _world_rays(scene: Scene, k: Intrinsics, t=None):
    pose = scene.camera_pose(t)
    c2w = pose.inverse()
    return c2w.translation, k.rays() @ c2w.rotation.T, pose


def _prism_hit(C, D, obj: SceneObject, z0: float) -> np.ndarray:
    """Ray parameter of the first hit on an extruded prism (inf if missed)."""
    ztop = z0 + obj.height
    poly = obj.world_polygon()
    best = np.full(D.shape[:2], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (ztop - C[2]) / D[..., 2]
        px, py = C[0] + s * D[..., 0], C[1] + s * D[..., 1]
        top = (s > 0) & _inside(px, py, poly)
        best = np.where(top, s, best)
        rx, ry = D[..., 0], D[..., 1]
        for i in range(len(poly)):
            a = poly[i]
            e = poly[(i + 1) % len(poly)] - a
            den = rx * e[1] - ry * e[0]
            ax, ay = a[0] - C[0], a[1] - C[1]
            s = (ax * e[1] - ay * e[0]) / den
            w = (ax * ry - ay * rx) / den
            z = C[2] + s * D[..., 2]
            ok = (np.abs(den) > 1e-15) & (w >= 0) & (w <= 1) & (s > 0) & (z >= z0) & (z <= ztop)
            best = np.where(ok & (s < best), s, best)
    return best


def render(scene: Scene, k: Intrinsics, t: int | None = None):
    """Ray-cast the scene; returns (rgb uint8 HxWx3, DepthMap, GT labels int32).

    Rays carry unit camera-z, so the hit parameter is the depth directly.
    """
    C, D, _ = _world_rays(scene, k, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_table = (scene.table_height - C[2]) / D[..., 2]
    depth = np.where(s_table > 0, s_table, np.inf)
    labels = np.zeros(k.shape, dtype=np.int32)
    for obj in scene.objects:
        s = _prism_hit(C, D, obj, scene.table_height)
        closer = s < depth
        depth = np.where(closer, s, depth)
        labels[closer] = obj.id
    valid = np.isfinite(depth)
    rgb = np.empty(k.shape + (3,), dtype=np.uint8)
    rgb[:] = TABLE_RGB
    for obj in scene.objects:
        rgb[labels == obj.id] = obj.color
    return rgb, DepthMap(np.where(valid, depth, 0.0), valid), labels


def render_frame(scene: Scene, k: Intrinsics) -> tuple[RGBDFrame, np.ndarray]:
    rgb, depth, labels = render(scene, k)
    return RGBDFrame(rgb, depth), labels


def gt_flow(scene_prev: Scene, scene_curr: Scene, k: Intrinsics, rendered=None) -> FlowField:
    """Exact optical flow from t-1 to t.

    Every visible surface point at t-1 is carried by its object's rigid motion
    (the table stays put), then projected through the camera at t. Targets
    that leave the view or end up behind a nearer surface are invalid.
    """
    if rendered is None:
        rendered = (render(scene_prev, k), render(scene_curr, k))
    (_, depth0, lab0), (_, depth1, _) = rendered
    C, D, _ = _world_rays(scene_prev, k)
    pts = C + D * depth0.values[..., None]
    moved = pts.copy()
    for obj in scene_prev.objects:
        sel = lab0 == obj.id
        if not sel.any():
            continue
        now = scene_curr.object(obj.id)
        motion = now.pose() @ obj.pose().inverse()
        moved[sel] = motion.apply(pts[sel])
    cam = scene_curr.camera_pose().apply(moved)
    uv, ok = project_points(cam, k)
    ok &= depth0.valid
    u, v = k.pixel_grid()
    tu = np.clip(np.floor(uv[..., 0] + 0.5).astype(int), 0, k.width - 1)
    tv = np.clip(np.floor(uv[..., 1] + 0.5).astype(int), 0, k.height - 1)
    seen = depth1.valid[tv, tu] & (cam[..., 2] <= depth1.values[tv, tu] + VIS_TOL)
    return FlowField(uv - np.stack([u, v], axis=-1), ok & seen)


def pixel_to_world(scene: Scene, k: Intrinsics, pixel, depth: float) -> np.ndarray:
    c2w = scene.camera_pose().inverse()
    u, v = pixel
    p = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0]) * depth
    return c2w.apply(p)


def apply_push(scene: Scene, action: PushAction, k: Intrinsics, sub_steps: int = 10) -> list[Scene]:
    """Quasi-static push split into ``sub_steps`` increments.

    The contacted object slides along the push and spins about its centroid at
    SPIN_PER_CM when the push line misses the centroid. Any object it overlaps
    after an increment slides SECONDARY_FRACTION as far, away from the overlap.
    Returns the scene after each increment.
    """
    if sub_steps < 1:
        raise ValueError("sub_steps must be >= 1")
    _, depth, labels = render(scene, k)
    u, v = action.contact
    if not (0 <= u < k.width and 0 <= v < k.height) or labels[v, u] == 0:
        raise ContactMiss(f"contact pixel ({u}, {v}) hits no object")
    oid = int(labels[v, u])
    z = depth.values[v, u]
    p0 = pixel_to_world(scene, k, (u, v), z)
    p1 = pixel_to_world(scene, k, (u + action.direction[0], v + action.direction[1]), z)
    dxy = (p1 - p0)[:2]
    dxy = dxy / np.linalg.norm(dxy)
    step = action.distance / sub_steps
    obj = scene.object(oid)
    r = p0[:2] - np.array([obj.x, obj.y])
    lever = r[0] * dxy[1] - r[1] * dxy[0]
    spin = np.sign(lever) * SPIN_PER_CM * step / 0.01 if abs(lever) > LEVER_EPS else 0.0

    out = []
    cur = scene
    for _ in range(sub_steps):
        a = cur.object(oid).moved(step * dxy[0], step * dxy[1], spin)
        cur = cur.replace_object(a)
        shape_a = a.shape()
        for other in cur.objects:
            if other.id == oid:
                continue
            inter = shape_a.intersection(other.shape())
            if inter.area <= 1e-12:
                continue
            n = np.array([other.x, other.y]) - np.array(inter.centroid.coords[0])
            if np.linalg.norm(n) < 1e-12:
                n = dxy.copy()
            n = n / np.linalg.norm(n)
            d = SECONDARY_FRACTION * step
            cur = cur.replace_object(other.moved(d * n[0], d * n[1]))
        shift = cur.shift
        if cur.track.follow_push:
            shift = (shift[0] + step * dxy[0], shift[1] + step * dxy[1], shift[2])
        cur = dataclasses.replace(cur, step=cur.step + 1, shift=shift)
        out.append(cur)
    return out


def random_scene(seed: int, n_objects: int = 4, track: CameraTrack | None = None,
                 gap: tuple[float, float] = (0.015, 0.035), max_restarts: int = 200) -> Scene:
    """Cluttered but non-overlapping scene of boxes and convex polygons.

    Every object keeps at least gap[0] and at most gap[1] to its nearest
    neighbour. Greedy placement restarts when it paints itself into a corner.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_restarts):
        objs = _place_objects(rng, n_objects, gap)
        if objs is not None:
            return Scene(0.0, tuple(objs), track or CameraTrack())
    raise RuntimeError("could not place objects")


def _place_objects(rng, n_objects, gap, tries_per_object=200):
    objs, shapes = [], []
    tries = 0
    while len(objs) < n_objects:
        tries += 1
        if tries > tries_per_object * n_objects:
            return None
        if rng.random() < 0.6:
            w, h = rng.uniform(0.035, 0.05, size=2)
            verts = np.array([[-w, -h], [w, -h], [w, h], [-w, h]]) / 2
        else:
            m = int(rng.integers(5, 8))
            rad = rng.uniform(0.02, 0.027)
            ang = np.linspace(0, 2 * np.pi, m, endpoint=False) + rng.uniform(-0.2, 0.2, m)
            verts = np.column_stack([np.cos(ang), np.sin(ang)]) * rad
        yaw = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(yaw), np.sin(yaw)
        verts = verts @ np.array([[c, -s], [s, c]]).T
        centre = rng.uniform([-0.06, -0.04], [0.06, 0.04])
        cand = Polygon(verts + centre)
        if not cand.is_valid:
            continue
        dists = [cand.distance(sh) for sh in shapes]
        if dists and (min(dists) < gap[0] or min(dists) > gap[1]):
            continue
        shapes.append(cand)
        oid = len(objs) + 1
        objs.append(SceneObject.from_world(oid, verts + centre, float(rng.uniform(0.025, 0.06)),
                                           PALETTE[(oid - 1) % len(PALETTE)]))
    return objs


def load_scene(path) -> Scene:
    """Parse a scene file.

    Format (``#`` starts a comment)::

        <table_height>
        <id> <height> <color> <x1> <y1> <x2> <y2> ...     (one line per object)
        camera <x> <y> <height> [<yaw> <vx> <vy> <vz> <yaw_rate> <pitch> <pitch_rate> <follow>]

    ``color`` is ``#rrggbb`` or ``r,g,b``; vertices are world metres.
    """
    with open(path) as fh:
        return parse_scene(fh.read())


def parse_scene(text: str) -> Scene:
    table = None
    objs = []
    track = CameraTrack()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        parts = line.split()
        try:
            if table is None:
                if len(parts) != 1:
                    raise SceneParseError(f"line {lineno}: expected table height")
                table = float(parts[0])
            elif parts[0] == "camera":
                vals = [float(p) for p in parts[1:]]
                if len(vals) not in (3, 4, 8, 10, 11):
                    raise SceneParseError(f"line {lineno}: bad camera parameters")
                names = ["x", "y", "height", "yaw", "vx", "vy", "vz", "yaw_rate", "pitch",
                         "pitch_rate", "follow_push"]
                kw = dict(zip(names, vals))
                if "follow_push" in kw:
                    kw["follow_push"] = bool(kw["follow_push"])
                track = CameraTrack(**kw)
            else:
                coords = [float(p) for p in parts[3:]]
                if len(coords) < 6 or len(coords) % 2:
                    raise SceneParseError(f"line {lineno}: need >= 3 vertex pairs")
                objs.append(SceneObject.from_world(int(parts[0]), coords, float(parts[1]),
                                                   _parse_color(parts[2])))
        except SceneParseError:
            raise
        except (ValueError, TypeError) as exc:
            raise SceneParseError(f"line {lineno}: {exc}") from exc
    if table is None:
        raise SceneParseError("missing table height")
    return Scene(table, tuple(objs), track)


def _strip_comment(raw: str) -> str:
    # '#rrggbb' after the first field is a colour, not a comment
    out = []
    for tok in raw.split():
        if tok.startswith("#") and not (out and _is_hex_color(tok)):
            break
        out.append(tok)
    return " ".join(out)


def _is_hex_color(tok: str) -> bool:
    return len(tok) == 7 and all(ch in "0123456789abcdefABCDEF" for ch in tok[1:])


def _parse_color(tok: str):
    if tok.startswith("#"):
        if not _is_hex_color(tok):
            raise SceneParseError(f"bad colour {tok!r}")
        return tuple(int(tok[i:i + 2], 16) for i in (1, 3, 5))
    vals = [int(x) for x in tok.split(",")]
    if len(vals) != 3 or not all(0 <= x <= 255 for x in vals):
        raise SceneParseError(f"bad colour {tok!r}")
    return tuple(vals)


def format_scene(scene: Scene) -> str:
    lines = [repr(float(scene.table_height))]
    for o in scene.objects:
        color = "#%02x%02x%02x" % tuple(o.color)
        verts = " ".join(f"{float(x)!r} {float(y)!r}" for x, y in o.world_polygon())
        lines.append(f"{o.id} {float(o.height)!r} {color} {verts}")
    t = scene.track
    lines.append("camera " + " ".join(repr(float(x)) for x in (
        t.x, t.y, t.height, t.yaw, t.vx, t.vy, t.vz, t.yaw_rate, t.pitch, t.pitch_rate))
        + f" {int(t.follow_push)}")
    return "\n".join(lines) + "\n"
