# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernels.

Forward compositing is parallelized over fixed 32-row image blocks; the
per-pixel compositing sequence depends only on the depth order, so results
are bitwise identical for any worker count. The backward replay is serial.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp

cnp.import_array()

DEF BLOCK_ROWS = 32
DEF ALPHA_CLAMP = 0.99


def forward(
    cnp.int64_t[::1] order,
    double[:, ::1] mean2d,
    double[:, ::1] conic,
    double[::1] alpha,
    double[:, ::1] colors,
    double[::1] depth,
    cnp.int32_t[:, ::1] bbox,
    int height,
    int width,
    double eps_t,
    double alpha_skip,
    bint stop_enabled,
    int n_threads,
):
    c_acc = np.zeros((height, width, 3))
    t_buf = np.ones((height, width))
    d_acc = np.zeros((height, width))
    last = np.full((height, width), -1, dtype=np.int64)

    cdef double[:, :, ::1] c_view = c_acc
    cdef double[:, ::1] t_view = t_buf
    cdef double[:, ::1] d_view = d_acc
    cdef cnp.int64_t[:, ::1] last_view = last

    cdef Py_ssize_t n_order = order.shape[0]
    cdef int n_blocks = (height + BLOCK_ROWS - 1) // BLOCK_ROWS
    cdef int blk
    cdef Py_ssize_t pos, i
    cdef int y_lo, y_hi, x0, x1, y0, y1, x, y
    cdef double u, v, a, b, c, al, col0, col1, col2, dp
    cdef double dx, dy, power, ap, t_cur, w

    if n_threads < 1:
        n_threads = 1

    with nogil:
        for blk in prange(n_blocks, num_threads=n_threads, schedule="static"):
            y_lo = blk * BLOCK_ROWS
            y_hi = y_lo + BLOCK_ROWS
            if y_hi > height:
                y_hi = height
            for pos in range(n_order):
                i = order[pos]
                x0 = bbox[i, 0]
                x1 = bbox[i, 1]
                y0 = bbox[i, 2]
                y1 = bbox[i, 3]
                if x0 > x1 or y0 > y1:
                    continue
                if y0 < y_lo:
                    y0 = y_lo
                if y1 >= y_hi:
                    y1 = y_hi - 1
                if y0 > y1:
                    continue
                u = mean2d[i, 0]
                v = mean2d[i, 1]
                a = conic[i, 0]
                b = conic[i, 1]
                c = conic[i, 2]
                al = alpha[i]
                col0 = colors[i, 0]
                col1 = colors[i, 1]
                col2 = colors[i, 2]
                dp = depth[i]
                for y in range(y0, y1 + 1):
                    dy = y - v
                    for x in range(x0, x1 + 1):
                        t_cur = t_view[y, x]
                        if stop_enabled and t_cur < eps_t:
                            continue
                        dx = x - u
                        power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                        if power > 0:
                            continue
                        ap = al * exp(power)
                        if ap > ALPHA_CLAMP:
                            ap = ALPHA_CLAMP
                        if ap < alpha_skip or ap <= 0:
                            continue
                        w = t_cur * ap
                        c_view[y, x, 0] += w * col0
                        c_view[y, x, 1] += w * col1
                        c_view[y, x, 2] += w * col2
                        d_view[y, x] += w * dp
                        t_view[y, x] = t_cur * (1.0 - ap)
                        last_view[y, x] = pos
    return c_acc, t_buf, d_acc, last


def backward(
    cnp.int64_t[::1] order,
    double[:, ::1] mean2d,
    double[:, ::1] conic,
    double[::1] alpha,
    double[:, ::1] colors,
    cnp.int32_t[:, ::1] bbox,
    double[:, :, ::1] pixel_grads,
    double[:, :, ::1] suffix,
    double[:, ::1] t_run,
    cnp.int64_t[:, ::1] last,
    double alpha_skip,
):
    cdef Py_ssize_t n = alpha.shape[0]
    g_mean2d = np.zeros((n, 2))
    g_conic = np.zeros((n, 3))
    g_alpha = np.zeros(n)
    g_colors = np.zeros((n, 3))
    touch = np.zeros(n, dtype=np.int64)

    cdef double[:, ::1] gm_view = g_mean2d
    cdef double[:, ::1] gc_view = g_conic
    cdef double[::1] ga_view = g_alpha
    cdef double[:, ::1] gcol_view = g_colors
    cdef cnp.int64_t[::1] touch_view = touch

    cdef Py_ssize_t pos, i
    cdef int x0, x1, y0, y1, x, y
    cdef double u, v, a, b, c, al, col0, col1, col2
    cdef double dx, dy, power, g, raw, ap, one_m, t_before, w
    cdef double gp0, gp1, gp2, ga, dpower, gdx, gdy

    with nogil:
        for pos in range(order.shape[0] - 1, -1, -1):
            i = order[pos]
            x0 = bbox[i, 0]
            x1 = bbox[i, 1]
            y0 = bbox[i, 2]
            y1 = bbox[i, 3]
            if x0 > x1 or y0 > y1:
                continue
            u = mean2d[i, 0]
            v = mean2d[i, 1]
            a = conic[i, 0]
            b = conic[i, 1]
            c = conic[i, 2]
            al = alpha[i]
            col0 = colors[i, 0]
            col1 = colors[i, 1]
            col2 = colors[i, 2]
            for y in range(y0, y1 + 1):
                dy = y - v
                for x in range(x0, x1 + 1):
                    if last[y, x] < pos:
                        continue
                    dx = x - u
                    power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)
                    if power > 0:
                        continue
                    g = exp(power)
                    raw = al * g
                    ap = raw
                    if ap > ALPHA_CLAMP:
                        ap = ALPHA_CLAMP
                    if ap < alpha_skip or ap <= 0:
                        continue
                    one_m = 1.0 - ap
                    t_before = t_run[y, x] / one_m
                    w = t_before * ap
                    gp0 = pixel_grads[y, x, 0]
                    gp1 = pixel_grads[y, x, 1]
                    gp2 = pixel_grads[y, x, 2]
                    gcol_view[i, 0] += gp0 * w
                    gcol_view[i, 1] += gp1 * w
                    gcol_view[i, 2] += gp2 * w
                    ga = (
                        gp0 * (t_before * col0 - suffix[y, x, 0] / one_m)
                        + gp1 * (t_before * col1 - suffix[y, x, 1] / one_m)
                        + gp2 * (t_before * col2 - suffix[y, x, 2] / one_m)
                    )
                    if raw < ALPHA_CLAMP:
                        ga_view[i] += ga * g
                        dpower = ga * al * g
                        gdx = dpower * (-(a * dx + b * dy))
                        gdy = dpower * (-(b * dx + c * dy))
                        gm_view[i, 0] += -gdx
                        gm_view[i, 1] += -gdy
                        gc_view[i, 0] += dpower * (-0.5 * dx * dx)
                        gc_view[i, 1] += dpower * (-dx * dy)
                        gc_view[i, 2] += dpower * (-0.5 * dy * dy)
                    touch_view[i] += 1
                    suffix[y, x, 0] += w * col0
                    suffix[y, x, 1] += w * col1
                    suffix[y, x, 2] += w * col2
                    t_run[y, x] = t_before
    return g_mean2d, g_conic, g_alpha, g_colors, touch
