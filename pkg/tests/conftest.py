"""Shared test fixtures and independent oracles.

The oracles here re-derive expected values from first principles
(explicit per-primitive loops, hand-built projection matrices) so the
production code is never compared against itself.
"""

from __future__ import annotations

import numpy as np
import pytest

from textsplat.geometry import CameraIntrinsics, CameraPose
from textsplat.splat import GaussianCloud


def quaternion_matrix(q):
    """Rotation matrix of a unit quaternion (w, x, y, z), textbook form."""
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_cloud(n, seed, *, z_span=(4.0, 9.0), spread=2.5, opacity=(-1.0, 2.0)):
    """A seeded random cloud sitting in front of the identity camera."""
    rng = np.random.default_rng(seed)
    centers = np.column_stack(
        [
            rng.uniform(-spread, spread, n),
            rng.uniform(-spread, spread, n),
            rng.uniform(*z_span, n),
        ]
    )
    log_scales = np.log(rng.uniform(0.05, 0.4, (n, 3)))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    opacity_logits = rng.uniform(*opacity, n)
    colors = rng.uniform(0.1, 0.9, (n, 3))
    return GaussianCloud(
        centers, log_scales, q, opacity_logits, colors, np.zeros(n, dtype=np.int64)
    )


def project_one(center, log_scale, rotation, pose, intr):
    """Independent projection of a single Gaussian: camera transform,
    quaternion covariance, perspective Jacobian, 0.3 px isotropic floor."""
    t_cam = pose.rotation @ center + pose.translation
    tx, ty, tz = t_cam
    r_q = quaternion_matrix(rotation)
    s = np.diag(np.exp(log_scale))
    cov_world = r_q @ s @ s @ r_q.T
    cov_cam = pose.rotation @ cov_world @ pose.rotation.T
    j = np.array(
        [
            [intr.fx / tz, 0.0, -intr.fx * tx / tz**2],
            [0.0, intr.fy / tz, -intr.fy * ty / tz**2],
        ]
    )
    cov2d = j @ cov_cam @ j.T + 0.3 * np.eye(2)
    mean2d = np.array([intr.fx * tx / tz + intr.cx, intr.fy * ty / tz + intr.cy])
    return mean2d, cov2d, tz


def brute_force_render(cloud, pose, intr, background, *, z_near=0.2, alpha_skip=1.0 / 255.0):
    """Naive all-primitives-all-pixels compositor: no footprint culling,
    no transmittance stop. Front-to-back over a full depth sort with
    index tie-breaking."""
    h, w = intr.height, intr.width
    entries = []
    for i in range(len(cloud)):
        mean2d, cov2d, tz = project_one(
            cloud.centers[i], cloud.log_scales[i], cloud.rotations[i], pose, intr
        )
        if tz <= z_near:
            continue
        conic = np.linalg.inv(cov2d)
        alpha = 1.0 / (1.0 + np.exp(-cloud.opacity_logits[i]))
        entries.append((tz, i, mean2d, conic, alpha, cloud.colors[i]))
    entries.sort(key=lambda e: (e[0], e[1]))

    ys, xs = np.mgrid[0:h, 0:w]
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    for tz, i, mean2d, conic, alpha, rgb in entries:
        dx = xs - mean2d[0]
        dy = ys - mean2d[1]
        power = -0.5 * (
            conic[0, 0] * dx * dx + 2.0 * conic[0, 1] * dx * dy + conic[1, 1] * dy * dy
        )
        ap = np.minimum(alpha * np.exp(power), 0.99)
        ap = np.where((power <= 0.0) & (ap >= alpha_skip), ap, 0.0)
        color += (trans * ap)[:, :, None] * rgb
        trans = trans * (1.0 - ap)
    color += trans[:, :, None] * np.asarray(background)
    return np.clip(color, 0.0, 1.0), 1.0 - trans


def room_scene():
    """Closed walled room around the origin: four wall slabs, a mildly
    checkered floor, one crate and one ball. Every camera ray within the
    anchor ring hits real geometry, so depth is finite and multi-view
    consistent (no far-bound content).
    """
    from textsplat.providers.synthetic import SyntheticSceneSpec

    return SyntheticSceneSpec(
        ground_y=1.5,
        ground_period=3.5,
        ground_color_a=(0.50, 0.47, 0.44),
        ground_color_b=(0.42, 0.39, 0.36),
        box_min=[
            (-10.0, -8.0, 9.0),
            (-10.0, -8.0, -10.0),
            (9.0, -8.0, -10.0),
            (-10.0, -8.0, -10.0),
            (2.0, 0.7, 4.0),
        ],
        box_max=[
            (10.0, 1.7, 10.0),
            (10.0, 1.7, -9.0),
            (10.0, 1.7, 10.0),
            (-9.0, 1.7, 10.0),
            (2.8, 1.5, 4.8),
        ],
        box_colors=[
            (0.55, 0.42, 0.34),
            (0.42, 0.5, 0.58),
            (0.5, 0.54, 0.38),
            (0.48, 0.4, 0.52),
            (0.7, 0.35, 0.3),
        ],
        sphere_centers=[(-2.5, 1.0, 4.5)],
        sphere_radii=[0.5],
        sphere_colors=[(0.3, 0.6, 0.4)],
    )


@pytest.fixture
def small_intrinsics():
    return CameraIntrinsics(fx=40.0, fy=40.0, cx=15.5, cy=15.5, width=32, height=32)


@pytest.fixture
def identity_pose():
    return CameraPose.identity()
