import numpy as np
import pytest

from rtriseg.flow import Intrinsics
from rtriseg.simulator import CameraTrack, Scene, SceneObject


def box(oid, cx, cy, w, h, height=0.04, color=(200, 50, 50)):
    v = np.array([[cx - w / 2, cy - h / 2], [cx + w / 2, cy - h / 2],
                  [cx + w / 2, cy + h / 2], [cx - w / 2, cy + h / 2]])
    return SceneObject.from_world(oid, v, height, color)


def still_scene(*objs, track=None):
    return Scene(0.0, tuple(objs), track or CameraTrack(follow_push=False))


@pytest.fixture
def k():
    return Intrinsics.default()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sim_pair(s0, s1, k, sigma=0.0, seed=0):
    """Render two scenes and return (r0, r1, observed flow, effective flow, camera motion)."""
    from rtriseg.flow import camera_motion, effective_flow, expected_flow
    from rtriseg.simulator import gt_flow, render

    r0, r1 = render(s0, k), render(s1, k)
    o = gt_flow(s0, s1, k, (r0, r1)).with_noise(sigma, np.random.default_rng(seed))
    cam = camera_motion(s0.camera_pose(), s1.camera_pose())
    x = effective_flow(o, expected_flow(r0[1], cam, k))
    return r0, r1, o, x, cam


def two_body_scenes():
    """Box 1 slides 2 mm along world x, box 2 spins 0.05 rad about its centroid."""
    s0 = still_scene(box(1, -0.08, 0.0, 0.04, 0.04, 0.04), box(2, 0.04, 0.0, 0.07, 0.07, 0.05))
    s1 = s0.replace_object(s0.object(1).moved(0.002, 0, 0))
    s1 = s1.replace_object(s0.object(2).moved(0, 0, 0.05)).advance()
    return s0, s1
