"""Pure NumPy rasterization kernels.

Fallback backend used when the compiled extension is unavailable, and the
reference the compiled kernels are tested against. Loops over primitives
in depth order and vectorizes over each footprint patch; per-pixel
compositing order is therefore identical to the compiled backend.
"""

from __future__ import annotations

import numpy as np

ALPHA_CLAMP = 0.99


def forward(
    order: np.ndarray,
    mean2d: np.ndarray,
    conic: np.ndarray,
    alpha: np.ndarray,
    colors: np.ndarray,
    depth: np.ndarray,
    bbox: np.ndarray,
    height: int,
    width: int,
    eps_t: float,
    alpha_skip: float,
    stop_enabled: bool,
    n_threads: int,
):
    """Front-to-back compositing. Returns (color_accum, T, depth_accum, last).

    ``last[y, x]`` is the position in ``order`` of the last contribution
    applied at that pixel (-1 where none), which the backward pass uses to
    replay compositing exactly.
    """
    c_acc = np.zeros((height, width, 3))
    t_buf = np.ones((height, width))
    d_acc = np.zeros((height, width))
    last = np.full((height, width), -1, dtype=np.int64)

    for pos, i in enumerate(order):
        x0, x1, y0, y1 = bbox[i, 0], bbox[i, 1], bbox[i, 2], bbox[i, 3]
        if x0 > x1 or y0 > y1:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        dx = xs[None, :] - mean2d[i, 0]
        dy = ys[:, None] - mean2d[i, 1]
        a, b, c = conic[i]
        power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
        ap = np.minimum(ALPHA_CLAMP, alpha[i] * np.exp(power))
        t_patch = t_buf[y0 : y1 + 1, x0 : x1 + 1]
        act = (power <= 0) & (ap >= alpha_skip) & (ap > 0)
        if stop_enabled:
            act &= t_patch >= eps_t
        if not act.any():
            continue
        w = np.where(act, t_patch * ap, 0.0)
        c_acc[y0 : y1 + 1, x0 : x1 + 1] += w[:, :, None] * colors[i]
        d_acc[y0 : y1 + 1, x0 : x1 + 1] += w * depth[i]
        t_buf[y0 : y1 + 1, x0 : x1 + 1] = np.where(act, t_patch * (1.0 - ap), t_patch)
        lp = last[y0 : y1 + 1, x0 : x1 + 1]
        last[y0 : y1 + 1, x0 : x1 + 1] = np.where(act, pos, lp)
    return c_acc, t_buf, d_acc, last


def backward(
    order: np.ndarray,
    mean2d: np.ndarray,
    conic: np.ndarray,
    alpha: np.ndarray,
    colors: np.ndarray,
    bbox: np.ndarray,
    pixel_grads: np.ndarray,
    suffix: np.ndarray,
    t_run: np.ndarray,
    last: np.ndarray,
    alpha_skip: float,
):
    """Back-to-front replay producing screen-space gradients.

    ``suffix`` must come in as T_final * background (per pixel) and
    ``t_run`` as T_final; both are mutated in place while walking from the
    farthest applied contribution toward the camera.
    """
    n = len(alpha)
    g_mean2d = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_alpha = np.zeros(n)
    g_colors = np.zeros((n, 3))
    touch = np.zeros(n, dtype=np.int64)

    for pos in range(len(order) - 1, -1, -1):
        i = order[pos]
        x0, x1, y0, y1 = bbox[i, 0], bbox[i, 1], bbox[i, 2], bbox[i, 3]
        if x0 > x1 or y0 > y1:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        dx = xs[None, :] - mean2d[i, 0]
        dy = ys[:, None] - mean2d[i, 1]
        a, b, c = conic[i]
        power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
        g = np.exp(power)
        raw = alpha[i] * g
        ap = np.minimum(ALPHA_CLAMP, raw)
        applied = (last[y0 : y1 + 1, x0 : x1 + 1] >= pos) & (power <= 0) & (ap >= alpha_skip) & (ap > 0)
        if not applied.any():
            continue
        one_m = 1.0 - ap
        t_patch = t_run[y0 : y1 + 1, x0 : x1 + 1]
        t_before = np.where(applied, t_patch / one_m, t_patch)
        w = np.where(applied, t_before * ap, 0.0)
        grad_patch = pixel_grads[y0 : y1 + 1, x0 : x1 + 1]
        s_patch = suffix[y0 : y1 + 1, x0 : x1 + 1]

        g_colors[i] += np.einsum("yx,yxc->c", w, grad_patch)
        ga = np.einsum(
            "yxc,yxc->yx", grad_patch, t_before[:, :, None] * colors[i] - s_patch / one_m[:, :, None]
        )
        unclamped = applied & (raw < ALPHA_CLAMP)
        g_alpha[i] += float(np.sum(np.where(unclamped, ga * g, 0.0)))
        dpower = np.where(unclamped, ga * alpha[i] * g, 0.0)
        gdx = dpower * (-(a * dx + b * dy))
        gdy = dpower * (-(b * dx + c * dy))
        g_mean2d[i, 0] += -float(np.sum(gdx))
        g_mean2d[i, 1] += -float(np.sum(gdy))
        g_conic[i, 0] += float(np.sum(dpower * (-0.5 * dx * dx)))
        g_conic[i, 1] += float(np.sum(dpower * (-dx * dy)))
        g_conic[i, 2] += float(np.sum(dpower * (-0.5 * dy * dy)))
        touch[i] += int(np.count_nonzero(applied))

        suffix[y0 : y1 + 1, x0 : x1 + 1] = s_patch + w[:, :, None] * colors[i]
        t_run[y0 : y1 + 1, x0 : x1 + 1] = t_before
    return g_mean2d, g_conic, g_alpha, g_colors, touch
