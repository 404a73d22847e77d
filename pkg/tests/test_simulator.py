import numpy as np
import pytest

from conftest import box, still_scene
from rtriseg.action import PushAction
from rtriseg.errors import ContactMiss, SceneParseError
from rtriseg.flow import camera_motion, expected_flow
from rtriseg.simulator import (SECONDARY_FRACTION, CameraTrack, format_scene, gt_flow, parse_scene,
                               random_scene, render)
from rtriseg.simulator import apply_push


def pixel_of(k, x, y, z_cam):
    # camera at (0, 0, 0.6) looking down: camera x = world x, camera y = -world y
    return k.fx * x / z_cam + k.cx, k.fy * -y / z_cam + k.cy


def test_render_depth_and_labels(k):
    scene = still_scene(box(3, 0.03, 0.02, 0.04, 0.04, height=0.05))
    rgb, depth, labels = render(scene, k)
    assert depth.valid.all()
    assert depth.values[0, 0] == pytest.approx(0.6)
    u, v = pixel_of(k, 0.03, 0.02, 0.55)
    iu, iv = int(round(u)), int(round(v))
    assert labels[iv, iu] == 3 and depth.values[iv, iu] == pytest.approx(0.55)
    assert tuple(rgb[iv, iu]) == (200, 50, 50)
    # top face spans 0.04 m * fx / 0.55 pixels across
    assert np.count_nonzero(np.isclose(depth.values[iv], 0.55)) == pytest.approx(0.04 * k.fx / 0.55, abs=1.5)


def test_side_walls_visible_off_axis(k):
    scene = still_scene(box(1, 0.08, 0.0, 0.03, 0.03, height=0.06))
    _, depth, labels = render(scene, k)
    d = depth.values[labels == 1]
    walls = (d > 0.54 + 1e-6) & (d < 0.6)
    assert walls.any()


def test_gt_flow_translation(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04, height=0.04))
    s1 = s0.replace_object(s0.object(1).moved(0.003, -0.002)).advance()
    r0 = render(s0, k)
    o = gt_flow(s0, s1, k)
    top = np.isclose(r0[1].values, 0.56) & (r0[2] == 1)
    want = (0.003 * k.fx / 0.56, 0.002 * k.fy / 0.56)
    assert np.allclose(o.vectors[top & o.valid], want, atol=1e-9)
    table = r0[2] == 0
    assert np.abs(o.vectors[table & o.valid]).max() < 1e-9
    # table just in front of the box gets covered at t: invalid
    assert not o.valid[r0[2] == 0].all()


def test_gt_flow_camera_only_equals_expected(k):
    track = CameraTrack(vx=0.002, vy=-0.001, yaw_rate=0.004, vz=0.001, follow_push=False)
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04), box(2, 0.05, 0.03, 0.03, 0.03), track=track)
    s1 = s0.advance()
    r0, r1 = render(s0, k), render(s1, k)
    o = gt_flow(s0, s1, k, (r0, r1))
    e = expected_flow(r0[1], camera_motion(s0.camera_pose(), s1.camera_pose()), k)
    ok = o.valid & e.valid
    assert ok.mean() > 0.9
    assert np.abs(o.vectors[ok] - e.vectors[ok]).max() < 1e-9


def test_push_centre_translates_without_spin(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04))
    u, v = pixel_of(k, 0.0, 0.0, 0.56)
    steps = apply_push(s0, PushAction((int(round(u)), int(round(v))), (1.0, 0.0), 0.02), k, 10)
    assert len(steps) == 10 and [s.step for s in steps] == list(range(1, 11))
    xs = [s.object(1).x for s in steps]
    assert np.allclose(np.diff([0.0] + xs), 0.002, atol=2e-5)
    assert abs(steps[-1].object(1).yaw) < 1e-12
    assert steps[-1].object(1).x == pytest.approx(0.02, abs=2e-4)


def test_push_off_centre_spins(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04))
    u, v = pixel_of(k, 0.0, 0.015, 0.56)
    steps = apply_push(s0, PushAction((int(round(u)), int(round(v))), (1.0, 0.0), 0.02), k, 10)
    assert abs(steps[-1].object(1).yaw) == pytest.approx(0.04, rel=1e-9)


def test_push_moves_touching_neighbour(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04), box(2, 0.041, 0.0, 0.04, 0.04))
    u, v = pixel_of(k, 0.0, 0.0, 0.56)
    steps = apply_push(s0, PushAction((int(round(u)), int(round(v))), (1.0, 0.0), 0.01), k, 5)
    moved = steps[-1].object(2).x - 0.041
    assert 0 < moved <= SECONDARY_FRACTION * 0.01 + 1e-12
    assert steps[-1].object(2).y == pytest.approx(0.0, abs=1e-9)


def test_camera_follows_push(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.04, 0.04), track=CameraTrack())
    u, v = pixel_of(k, 0.0, 0.0, 0.56)
    steps = apply_push(s0, PushAction((int(round(u)), int(round(v))), (0.0, 1.0), 0.02), k, 4)
    # image +v is world -y
    assert steps[-1].shift[1] == pytest.approx(-0.02)
    assert steps[-1].object(1).y == pytest.approx(-0.02, abs=2e-4)


def test_push_contact_miss(k):
    s0 = still_scene(box(1, 0.0, 0.0, 0.02, 0.02))
    with pytest.raises(ContactMiss):
        apply_push(s0, PushAction((2, 2), (1.0, 0.0), 0.02), k)
    with pytest.raises(ValueError):
        apply_push(s0, PushAction((80, 60), (1.0, 0.0), 0.02), k, 0)


def test_random_scene_constraints():
    a, b = random_scene(5), random_scene(5)
    assert format_scene(a) == format_scene(b)
    assert format_scene(a) != format_scene(random_scene(6))
    shapes = [o.shape() for o in a.objects]
    assert len(shapes) == 4
    for i, s in enumerate(shapes):
        d = min(s.distance(t) for j, t in enumerate(shapes) if j != i)
        assert 0.015 - 1e-12 <= d <= 0.035 + 1e-12


def test_scene_text_round_trip():
    text = """# two objects
0.0
1 0.04 #ff8000 -0.02 -0.02 0.02 -0.02 0.02 0.02 -0.02 0.02   # a box
2 0.03 10,20,30 0.05 0.0 0.07 0.0 0.06 0.02
camera 0.01 0.0 0.5
"""
    s = parse_scene(text)
    assert [o.id for o in s.objects] == [1, 2]
    assert s.objects[0].color == (255, 128, 0) and s.objects[1].color == (10, 20, 30)
    assert s.track.height == 0.5 and s.track.x == 0.01
    s2 = parse_scene(format_scene(s))
    for a, b in zip(s.objects, s2.objects):
        assert np.allclose(a.world_polygon(), b.world_polygon(), atol=1e-15)
        assert a.height == b.height and a.color == b.color
    assert s2.track == s.track


@pytest.mark.parametrize("text", [
    "",
    "0.0 1",
    "0.0\n1 0.04 #ff8000 0 0 1 0",
    "0.0\n1 -0.04 #ff8000 0 0 1 0 0 1",
    "0.0\n1 0.04 #ff80 0 0 1 0 0 1",
    "0.0\n1 0.04 #ff8000 0 0 1 0 0 1\n1 0.04 #ff8000 2 0 3 0 2 1",
    "0.0\ncamera 1 2",
    "0.0\n1 0.04 red 0 0 1 0 0 1",
])
def test_scene_parse_errors(text):
    with pytest.raises(SceneParseError):
        parse_scene(text)
