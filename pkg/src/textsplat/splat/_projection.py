"""Screen-space projection of 3D Gaussians, forward and backward.

Both rasterizer backends consume the arrays produced here; the pixel
kernels only ever see 2D means, conics and bounding boxes. Keeping the
projection chain in one vectorized place means the compiled and the pure
Python backends cannot drift apart on this math.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COV_REGULARIZER = 0.3  # px^2, added to the 2D covariance diagonal


def quat_rotation_matrices(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for unit quaternions in (w, x, y, z) order, shape (N, 4)."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


@dataclass
class ProjectedGaussians:
    """Per-primitive screen-space quantities plus stashes for the backward pass."""

    valid: np.ndarray          # (N,) bool, False = culled by the near plane
    order: np.ndarray          # (K,) int64 indices of valid primitives, near to far
    depth: np.ndarray          # (N,)
    mean2d: np.ndarray         # (N, 2)
    conic: np.ndarray          # (N, 3) upper-triangular (A, B, C) of cov2d^-1
    alpha: np.ndarray          # (N,) activated opacity
    bbox: np.ndarray           # (N, 4) int32 inclusive x0, x1, y0, y1
    # stashes
    t_cam: np.ndarray          # (N, 3)
    q_hat: np.ndarray          # (N, 4) normalized quaternion
    q_norm: np.ndarray         # (N,)
    R_q: np.ndarray            # (N, 3, 3)
    scales: np.ndarray         # (N, 3) exp(log_scale)
    M: np.ndarray              # (N, 3, 3) R_q @ diag(s)
    sigma_cam: np.ndarray      # (N, 3, 3)
    J: np.ndarray              # (N, 2, 3)
    cov2d: np.ndarray          # (N, 3) (a, b, c)


def project_gaussians(
    centers: np.ndarray,
    log_scales: np.ndarray,
    rotations: np.ndarray,
    opacity_logits: np.ndarray,
    R_wc: np.ndarray,
    t_wc: np.ndarray,
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    z_near: float,
    footprint_sigma: float | None,
) -> ProjectedGaussians:
    """Project every primitive to (mean2d, conic, depth, bbox).

    ``footprint_sigma=None`` gives every primitive the full image as its
    bounding box (used by the equivalence and gradient-check modes).
    """
    n = len(centers)
    t_cam = centers @ R_wc.T + t_wc
    tz = t_cam[:, 2]
    valid = tz > z_near

    # Guard divisions for culled primitives; their outputs are never read.
    tz_safe = np.where(valid, tz, 1.0)
    u = fx * t_cam[:, 0] / tz_safe + cx
    v = fy * t_cam[:, 1] / tz_safe + cy
    mean2d = np.stack([u, v], axis=1)

    q_norm = np.linalg.norm(rotations, axis=1)
    q_hat = rotations / q_norm[:, None]
    R_q = quat_rotation_matrices(q_hat)
    scales = np.exp(log_scales)
    M = R_q * scales[:, None, :]
    sigma_world = M @ np.transpose(M, (0, 2, 1))
    sigma_cam = R_wc @ sigma_world @ R_wc.T

    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = fx / tz_safe
    J[:, 0, 2] = -fx * t_cam[:, 0] / tz_safe**2
    J[:, 1, 1] = fy / tz_safe
    J[:, 1, 2] = -fy * t_cam[:, 1] / tz_safe**2

    cov_full = J @ sigma_cam @ np.transpose(J, (0, 2, 1))
    a = cov_full[:, 0, 0] + COV_REGULARIZER
    b = cov_full[:, 0, 1]
    c = cov_full[:, 1, 1] + COV_REGULARIZER
    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    alpha = 1.0 / (1.0 + np.exp(-opacity_logits))

    bbox = np.zeros((n, 4), dtype=np.int32)
    if footprint_sigma is None:
        bbox[:, 0] = 0
        bbox[:, 1] = width - 1
        bbox[:, 2] = 0
        bbox[:, 3] = height - 1
    else:
        lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
        radius = footprint_sigma * np.sqrt(np.maximum(lam_max, 0.0))
        bbox[:, 0] = np.clip(np.ceil(u - radius), 0, width - 1)
        bbox[:, 1] = np.clip(np.floor(u + radius), 0, width - 1)
        bbox[:, 2] = np.clip(np.ceil(v - radius), 0, height - 1)
        bbox[:, 3] = np.clip(np.floor(v + radius), 0, height - 1)
        onscreen = (u + radius >= 0) & (u - radius <= width - 1) & (v + radius >= 0) & (v - radius <= height - 1)
        valid_box = valid & onscreen
        bbox[~valid_box] = 0
        bbox[~valid_box, 1] = -1  # empty box for culled / fully off-screen
    order_candidates = np.nonzero(valid)[0]
    order = order_candidates[np.argsort(tz[valid], kind="stable")]
    return ProjectedGaussians(
        valid=valid,
        order=order.astype(np.int64),
        depth=np.ascontiguousarray(tz),
        mean2d=mean2d,
        conic=conic,
        alpha=alpha,
        bbox=bbox,
        t_cam=t_cam,
        q_hat=q_hat,
        q_norm=q_norm,
        R_q=R_q,
        scales=scales,
        M=M,
        sigma_cam=sigma_cam,
        J=J,
        cov2d=np.stack([a, b, c], axis=1),
    )


def backpropagate_projection(
    proj: ProjectedGaussians,
    R_wc: np.ndarray,
    fx: float,
    fy: float,
    g_mean2d: np.ndarray,
    g_conic: np.ndarray,
    g_alpha: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Chain per-primitive screen-space gradients back to the 3D parameters.

    Args:
        g_mean2d: (N, 2) dL/d(u, v).
        g_conic: (N, 3) dL/d(A, B, C) of the packed symmetric conic.
        g_alpha: (N,) dL/d(activated opacity).

    Returns:
        (d_centers, d_log_scales, d_rotations, d_opacity_logits).
    """
    n = len(g_alpha)
    a = proj.cov2d[:, 0]
    b = proj.cov2d[:, 1]
    c = proj.cov2d[:, 2]

    # conic = cov^-1  =>  dL/dcov = -conic @ Uconic @ conic
    conic_full = np.zeros((n, 2, 2))
    conic_full[:, 0, 0] = proj.conic[:, 0]
    conic_full[:, 0, 1] = proj.conic[:, 1]
    conic_full[:, 1, 0] = proj.conic[:, 1]
    conic_full[:, 1, 1] = proj.conic[:, 2]
    u_conic = np.zeros((n, 2, 2))
    u_conic[:, 0, 0] = g_conic[:, 0]
    u_conic[:, 0, 1] = 0.5 * g_conic[:, 1]
    u_conic[:, 1, 0] = 0.5 * g_conic[:, 1]
    u_conic[:, 1, 1] = g_conic[:, 2]
    u_cov = -conic_full @ u_conic @ conic_full

    # cov = J sigma_cam J^T + reg
    Jt = np.transpose(proj.J, (0, 2, 1))
    u_sigma_cam = Jt @ u_cov @ proj.J
    u_J = 2.0 * (u_cov @ proj.J @ proj.sigma_cam)

    # J entries -> camera point
    tx, ty, tz = proj.t_cam[:, 0], proj.t_cam[:, 1], proj.t_cam[:, 2]
    tz_safe = np.where(proj.valid, tz, 1.0)
    inv_tz2 = 1.0 / tz_safe**2
    g_t = np.zeros((n, 3))
    g_t[:, 0] = u_J[:, 0, 2] * (-fx * inv_tz2)
    g_t[:, 1] = u_J[:, 1, 2] * (-fy * inv_tz2)
    g_t[:, 2] = (
        u_J[:, 0, 0] * (-fx * inv_tz2)
        + u_J[:, 1, 1] * (-fy * inv_tz2)
        + u_J[:, 0, 2] * (2.0 * fx * tx / tz_safe**3)
        + u_J[:, 1, 2] * (2.0 * fy * ty / tz_safe**3)
    )

    # mean2d -> camera point
    gu, gv = g_mean2d[:, 0], g_mean2d[:, 1]
    g_t[:, 0] += gu * fx / tz_safe
    g_t[:, 1] += gv * fy / tz_safe
    g_t[:, 2] += -(gu * fx * tx + gv * fy * ty) * inv_tz2

    d_centers = g_t @ R_wc

    # sigma_cam = R sigma_world R^T
    u_sigma_w = np.einsum("ji,njk,kl->nil", R_wc, u_sigma_cam, R_wc)
    u_M = 2.0 * (u_sigma_w @ proj.M)

    # M = R_q diag(s)
    g_s = np.einsum("nij,nij->nj", proj.R_q, u_M)
    d_log_scales = g_s * proj.scales
    u_Rq = u_M * proj.scales[:, None, :]

    # rotation matrix -> normalized quaternion
    w, x, y, z = proj.q_hat[:, 0], proj.q_hat[:, 1], proj.q_hat[:, 2], proj.q_hat[:, 3]
    r = u_Rq
    gq_hat = np.empty((n, 4))
    gq_hat[:, 0] = 2.0 * (
        -z * r[:, 0, 1] + y * r[:, 0, 2] + z * r[:, 1, 0] - x * r[:, 1, 2] - y * r[:, 2, 0] + x * r[:, 2, 1]
    )
    gq_hat[:, 1] = 2.0 * (
        y * r[:, 0, 1] + z * r[:, 0, 2] + y * r[:, 1, 0] - 2 * x * r[:, 1, 1] - w * r[:, 1, 2]
        + z * r[:, 2, 0] + w * r[:, 2, 1] - 2 * x * r[:, 2, 2]
    )
    gq_hat[:, 2] = 2.0 * (
        -2 * y * r[:, 0, 0] + x * r[:, 0, 1] + w * r[:, 0, 2] + x * r[:, 1, 0] + z * r[:, 1, 2]
        - w * r[:, 2, 0] + z * r[:, 2, 1] - 2 * y * r[:, 2, 2]
    )
    gq_hat[:, 3] = 2.0 * (
        -2 * z * r[:, 0, 0] - w * r[:, 0, 1] + x * r[:, 0, 2] + w * r[:, 1, 0] - 2 * z * r[:, 1, 1]
        + y * r[:, 1, 2] + x * r[:, 2, 0] + y * r[:, 2, 1]
    )
    dot = np.einsum("ni,ni->n", proj.q_hat, gq_hat)
    d_rotations = (gq_hat - proj.q_hat * dot[:, None]) / proj.q_norm[:, None]

    d_opacity_logits = g_alpha * proj.alpha * (1.0 - proj.alpha)

    invalid = ~proj.valid
    d_centers[invalid] = 0.0
    d_log_scales[invalid] = 0.0
    d_rotations[invalid] = 0.0
    d_opacity_logits[invalid] = 0.0
    return d_centers, d_log_scales, d_rotations, d_opacity_logits
