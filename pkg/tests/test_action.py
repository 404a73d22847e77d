import numpy as np
import pytest

from conftest import box, still_scene
from oracles import brute_boundary, brute_push_valid
from rtriseg.action import (ActionConfig, PushAction, approach_footprint, boundary, candidates,
                            cluster_unsegmented, find_action, fit_table, is_valid_push,
                            objs_above_table, objs_to_segment, overlap_ratio, push_shift)
from rtriseg.errors import EmptyMask, NoPlaneFound
from rtriseg.flow import DepthMap
from rtriseg.simulator import render


def test_push_record_round_trip():
    a = PushAction((12, 40), (0.6, -0.8), 0.02)
    b = PushAction.parse(a.record())
    assert b.contact == (12, 40) and np.allclose(b.direction, (0.6, -0.8)) and b.distance == 0.02
    assert PushAction.parse("none") is None
    with pytest.raises(ValueError):
        PushAction.parse("push 1 2 3")
    with pytest.raises(ValueError):
        PushAction((0, 0), (1.0, 1.0), 0.02)


def test_fit_table_and_obj_mask(k):
    scene = still_scene(box(1, -0.04, 0.02, 0.05, 0.04), box(2, 0.05, -0.02, 0.04, 0.06, 0.03))
    _, depth, labels = render(scene, k)
    table = fit_table(depth, k)
    # camera 0.6 m above a table facing straight down: n = -z_cam, offset 0.6
    assert np.allclose(table.normal, (0, 0, -1), atol=1e-9)
    assert table.offset == pytest.approx(0.6, abs=1e-9)
    obj = objs_above_table(depth, k)
    assert not (obj & (labels == 0)).any()
    assert np.count_nonzero(obj) >= 0.95 * np.count_nonzero(labels)


def test_fit_table_failures(k):
    with pytest.raises(NoPlaneFound):
        fit_table(DepthMap(np.zeros(k.shape), np.zeros(k.shape, bool)), k)
    rng = np.random.default_rng(0)
    with pytest.raises(NoPlaneFound):
        fit_table(DepthMap.from_array(rng.uniform(0.3, 1.0, k.shape)), k, iters=20)


def test_cluster_counts():
    m = np.zeros((60, 80), np.uint8)
    m[10:30, 10:30] = 1
    assert len(cluster_unsegmented(m)) == 1
    m[35:55, 50:75] = 1
    cl = cluster_unsegmented(m)
    assert len(cl) == 2
    assert sum(len(p) for _, p in cl) == np.count_nonzero(m)
    with pytest.raises(EmptyMask):
        cluster_unsegmented(np.zeros((5, 5)))


def test_boundary_matches_brute_force(rng):
    pts = np.argwhere(rng.random((20, 20)) < 0.7)[:, ::-1]
    got = boundary(pts)
    assert set(got) == brute_boundary(pts)
    c = pts.mean(axis=0)
    ang = [np.arctan2(v - c[1], u - c[0]) for u, v in got]
    assert ang == sorted(ang)


def test_push_shift_and_footprint():
    assert push_shift((1.0, 0.0), 13.3) == (13, 0)
    assert push_shift((0.6, -0.8), 10.0) == (6, -8)
    fp = approach_footprint((10, 10), (1.0, 0.0), 5, 2, (20, 20))
    assert np.argwhere(fp)[:, ::-1].tolist() == [[u, v] for v in (9, 10, 11) for u in range(5, 10)]


def test_overlap_ratio_counts_outside_own_pixels():
    obj = np.zeros((10, 10), bool)
    pts = np.array([(2, 2), (3, 2), (4, 2)])
    obj[2, 2:5] = True
    obj[2, 6] = True
    # shifted by 2: (4,2) own, (5,2) empty, (6,2) foreign
    assert overlap_ratio(pts, (2, 0), obj) == pytest.approx(1 / 3)


def ratio_case(n_hits, k):
    """10x10 cluster pushed +u into a block holding n_hits objMask pixels."""
    obj = np.zeros(k.shape, bool)
    obj[20:30, 20:30] = True
    shift = push_shift((1.0, 0.0), k.meters_to_pixels(0.02, 0.6))
    target = [(u + shift[0], v) for v in range(20, 30) for u in range(20, 30) if u + shift[0] >= 30]
    for u, v in target[:n_hits]:
        obj[v, u] = True
    pts = np.array([(u, v) for v in range(20, 30) for u in range(20, 30)])
    depth = DepthMap.from_array(np.full(k.shape, 0.6))
    return pts, obj, depth


@pytest.mark.parametrize("hits,ok", [(29, True), (30, True), (31, False)])
def test_l_act_boundary(hits, ok, k):
    pts, obj, depth = ratio_case(hits, k)
    args = ((20, 25), (1.0, 0.0), 0.02, 0.3, pts, obj, (24.5, 24.5), k, depth)
    assert overlap_ratio(pts, (13, 0), obj) == pytest.approx(hits / 100)
    assert is_valid_push(*args) is ok


def test_footprint_blocks_push(k):
    pts, obj, depth = ratio_case(0, k)
    obj[25, 12] = True  # 8 px behind the contact, inside the 13 px approach
    assert not is_valid_push((20, 25), (1.0, 0.0), 0.02, 0.3, pts, obj, (24.5, 24.5), k, depth)
    # centre off the objMask is rejected
    obj2 = obj.copy()
    obj2[25, 24] = obj2[24, 24] = obj2[25, 25] = obj2[24, 25] = False
    assert not is_valid_push((20, 25), (1.0, 0.0), 0.02, 0.3, pts, obj2, (24.5, 24.5), k, depth)


def test_objs_to_segment_cleanup():
    obj = np.zeros((40, 40), bool)
    obj[5:25, 5:25] = True
    obj[30:33, 30:33] = True  # speck below min size
    labels = np.zeros((40, 40), int)
    labels[5:25, 6:25] = 1    # leaves a 1-px sliver on the left
    assert not objs_to_segment(obj, labels).any()
    labels[:] = 0
    labels[5:25, 15:25] = 1
    left = objs_to_segment(obj, labels)
    assert left[5:25, 5:15].all() and left.sum() == 200


def test_find_action_agrees_with_brute_force(k):
    scene = still_scene(box(1, -0.05, 0.0, 0.04, 0.04), box(2, 0.0, 0.0, 0.04, 0.05),
                        box(3, 0.05, 0.02, 0.03, 0.04))
    _, depth, _ = render(scene, k)
    cfg = ActionConfig()
    labels = np.zeros(k.shape, int)
    obj, cands = candidates(labels, depth, k, cfg)
    first = None
    for c, pts, b, d in cands:
        ref = brute_push_valid(b, d, pts, obj, c, k, depth, cfg.d_push, cfg.l_act, cfg.footprint_width)
        assert is_valid_push(b, d, cfg.d_push, cfg.l_act, pts, obj, c, k, depth) == ref
        if ref and first is None:
            first = (b, d)
    a = find_action(labels, depth, k, cfg)
    assert first is not None and a.contact == first[0] and a.direction == first[1]


def test_find_action_none_when_segmented(k):
    scene = still_scene(box(1, -0.05, 0.0, 0.04, 0.04), box(2, 0.05, 0.0, 0.04, 0.05))
    _, depth, labels = render(scene, k)
    assert find_action(labels, depth, k) is None
