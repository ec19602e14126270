import numpy as np
import pytest

from svopt.ism import DisparityMap, Frame, gaussian_blur


@pytest.fixture(scope="session")
def panorama():
    """Smoothed random texture large enough to crop panning windows from."""
    rng = np.random.default_rng(3)
    raw = Frame(rng.random((200, 400)).astype(np.float32))
    return gaussian_blur(raw, 1.2, 2).luma


def make_sequence(panorama, n_frames, height, width, disparity, motion=(0, 0), origin=(40, 60)):
    """Stereo frames panning over the panorama, plus the ground-truth map.

    The right view is the same window shifted left by `disparity`, so
    x_right = x_left + disparity; left pixels whose partner falls outside
    the frame are invalid in the ground truth.
    """
    my, mx = motion
    oy, ox = origin
    frames = []
    for t in range(n_frames):
        r0, c0 = oy + my * t, ox + mx * t
        left = panorama[r0 : r0 + height, c0 : c0 + width]
        right = panorama[r0 : r0 + height, c0 - disparity : c0 - disparity + width]
        frames.append((Frame(left.copy()), Frame(right.copy())))
    gt = np.full((height, width), disparity, dtype=np.int32)
    if disparity > 0:
        gt[:, width - disparity :] = -1
    return frames, DisparityMap(gt)
