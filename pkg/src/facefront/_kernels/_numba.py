"""Numba @njit implementations of the hot kernels.

Mirrors _numpy.py function for function: same signatures, same arithmetic
expressions (no fastmath), so results match the fallback bit-for-bit except
on measure-zero float ties. Keep formula edits in sync between the files.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def raster_scan(xy, wdepth, verts, uv, tris, width, height):
    depth = np.full((height, width), np.inf)
    coord = np.zeros((height, width, 3))
    uvmap = np.zeros((height, width, 2))
    valid = np.zeros((height, width), dtype=np.uint8)

    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        w0v = wdepth[i0]
        w1v = wdepth[i1]
        w2v = wdepth[i2]
        if w0v <= 1e-9 or w1v <= 1e-9 or w2v <= 1e-9:
            continue
        x0 = xy[i0, 0]
        y0 = xy[i0, 1]
        x1 = xy[i1, 0]
        y1 = xy[i1, 1]
        x2 = xy[i2, 0]
        y2 = xy[i2, 1]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:
            i1, i2 = i2, i1
            tx, ty = x1, y1
            x1, y1 = x2, y2
            x2, y2 = tx, ty
            w1v, w2v = w2v, w1v
            area2 = -area2

        xmin = max(0, int(np.ceil(min(x0, min(x1, x2)))))
        xmax = min(width - 1, int(np.floor(max(x0, max(x1, x2)))))
        ymin = max(0, int(np.ceil(min(y0, min(y1, y2)))))
        ymax = min(height - 1, int(np.floor(max(y0, max(y1, y2)))))
        if xmin > xmax or ymin > ymax:
            continue

        tl0 = ((y2 - y1) == 0.0 and (x2 - x1) < 0.0) or (y2 - y1) < 0.0
        tl1 = ((y0 - y2) == 0.0 and (x0 - x2) < 0.0) or (y0 - y2) < 0.0
        tl2 = ((y1 - y0) == 0.0 and (x1 - x0) < 0.0) or (y1 - y0) < 0.0

        for py in range(ymin, ymax + 1):
            fpy = float(py)
            for px in range(xmin, xmax + 1):
                fpx = float(px)
                e0 = (x2 - x1) * (fpy - y1) - (y2 - y1) * (fpx - x1)
                e1 = (x0 - x2) * (fpy - y2) - (y0 - y2) * (fpx - x2)
                e2 = (x1 - x0) * (fpy - y0) - (y1 - y0) * (fpx - x0)
                if not ((e0 > 0.0 or (e0 == 0.0 and tl0))
                        and (e1 > 0.0 or (e1 == 0.0 and tl1))
                        and (e2 > 0.0 or (e2 == 0.0 and tl2))):
                    continue
                b0 = e0 / area2
                b1 = e1 / area2
                b2 = e2 / area2
                inv_w = b0 / w0v + b1 / w1v + b2 / w2v
                d = 1.0 / inv_w
                if d < depth[py, px]:
                    depth[py, px] = d
                    valid[py, px] = 1
                    for a in range(3):
                        coord[py, px, a] = (
                            b0 * (verts[i0, a] / w0v)
                            + b1 * (verts[i1, a] / w1v)
                            + b2 * (verts[i2, a] / w2v)
                        ) * d
                    for a in range(2):
                        uvmap[py, px, a] = (
                            b0 * (uv[i0, a] / w0v)
                            + b1 * (uv[i1, a] / w1v)
                            + b2 * (uv[i2, a] / w2v)
                        ) * d

    return depth, coord, uvmap, valid


@njit(cache=True, nogil=True)
def warp_bilinear(src, xs, ys):
    h, w, c = src.shape
    n = xs.shape[0]
    out = np.zeros((n, c))
    inb = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        x = xs[i]
        y = ys[i]
        x0 = int(np.floor(x))
        y0 = int(np.floor(y))
        if x0 < 0 or y0 < 0 or x0 + 1 > w - 1 or y0 + 1 > h - 1:
            continue
        inb[i] = 1
        fx = x - x0
        fy = y - y0
        for ch in range(c):
            top = (1.0 - fx) * src[y0, x0, ch] + fx * src[y0, x0 + 1, ch]
            bot = (1.0 - fx) * src[y0 + 1, x0, ch] + fx * src[y0 + 1, x0 + 1, ch]
            out[i, ch] = (1.0 - fy) * top + fy * bot
    return out, inb


@njit(cache=True, nogil=True)
def accumulate_hits(qx, qy, inb, width, height):
    grid = np.zeros((height, width), dtype=np.int32)
    for i in range(qx.shape[0]):
        if inb[i]:
            grid[qy[i], qx[i]] += 1
    return grid


@njit(cache=True, nogil=True)
def lbp_codes(gray, ix0, iy0, w00, w01, w10, w11):
    h, w = gray.shape
    n = ix0.shape[0]
    codes = np.full((h, w), -1, dtype=np.int16)

    lm = 0
    rm = 0
    tm = 0
    bm = 0
    for k in range(n):
        lm = max(lm, -ix0[k])
        rm = max(rm, ix0[k] + 1)
        tm = max(tm, -iy0[k])
        bm = max(bm, iy0[k] + 1)
    lm = max(lm, 0)
    rm = max(rm, 0)
    tm = max(tm, 0)
    bm = max(bm, 0)

    for y in range(tm, h - bm):
        for x in range(lm, w - rm):
            center = gray[y, x]
            code = 0
            for k in range(n):
                yy = y + iy0[k]
                xx = x + ix0[k]
                neigh = (
                    w00[k] * gray[yy, xx]
                    + w01[k] * gray[yy, xx + 1]
                    + w10[k] * gray[yy + 1, xx]
                    + w11[k] * gray[yy + 1, xx + 1]
                )
                if neigh >= center:
                    code |= 1 << k
            codes[y, x] = code
    return codes


@njit(cache=True, nogil=True)
def _patch_dist(gray, ya, xa, yb, xb, hw):
    """Euclidean distance between the patches centered at (ya,xa) and (yb,xb)."""
    acc = 0.0
    for dy in range(-hw, hw + 1):
        for dx in range(-hw, hw + 1):
            diff = gray[ya + dy, xa + dx] - gray[yb + dy, xb + dx]
            acc += diff * diff
    return np.sqrt(acc)


@njit(cache=True, nogil=True)
def tplbp_codes(gray, dx, dy, patch, alpha, step):
    h, w = gray.shape
    s = dx.shape[0]
    hw = patch // 2
    codes = np.full((h, w), -1, dtype=np.int16)

    m = 0
    for i in range(s):
        m = max(m, max(abs(dx[i]), abs(dy[i])))
    m += hw

    dist = np.zeros(s)
    for y in range(m, h - m):
        for x in range(m, w - m):
            for i in range(s):
                dist[i] = _patch_dist(gray, y + dy[i], x + dx[i], y, x, hw)
            code = 0
            for i in range(s):
                j = (i + step) % s
                if dist[i] - dist[j] >= alpha:
                    code |= 1 << i
            codes[y, x] = code
    return codes


@njit(cache=True, nogil=True)
def fplbp_codes(gray, dx1, dy1, dx2, dy2, patch, alpha, step):
    h, w = gray.shape
    s = dx1.shape[0]
    half = s // 2
    hw = patch // 2
    codes = np.full((h, w), -1, dtype=np.int16)

    m = 0
    for i in range(s):
        m = max(m, max(abs(dx1[i]), abs(dy1[i])))
        m = max(m, max(abs(dx2[i]), abs(dy2[i])))
    m += hw

    for y in range(m, h - m):
        for x in range(m, w - m):
            code = 0
            for i in range(half):
                j = (i + step) % s
                k = i + half
                l = (k + step) % s
                da = _patch_dist(gray, y + dy1[i], x + dx1[i], y + dy2[j], x + dx2[j], hw)
                db = _patch_dist(gray, y + dy1[k], x + dx1[k], y + dy2[l], x + dx2[l], hw)
                if da - db >= alpha:
                    code |= 1 << i
            codes[y, x] = code
    return codes
