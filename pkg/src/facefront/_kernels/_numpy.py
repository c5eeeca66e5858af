"""Pure-numpy fallback implementations of the hot kernels.

Each function here mirrors a numba kernel in _numba.py: same signature,
same arithmetic expressions, so the two paths agree bit-for-bit except on
measure-zero tie cases. Keep formula edits in sync between the files.
"""

from __future__ import annotations

import numpy as np


def raster_scan(xy, wdepth, verts, uv, tris, width, height):
    """Z-buffered scan conversion of projected triangles.

    xy: (V, 2) projected vertex positions, wdepth: (V,) homogeneous depths,
    verts: (V, 3) model-space positions, uv: (V, 2) texture coordinates.
    Returns (depth, coord, uvmap, valid). Triangles with any vertex at or
    behind the camera (depth <= 1e-9) are skipped.
    """
    depth = np.full((height, width), np.inf)
    coord = np.zeros((height, width, 3))
    uvmap = np.zeros((height, width, 2))
    valid = np.zeros((height, width), dtype=np.uint8)

    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t]
        w0v, w1v, w2v = wdepth[i0], wdepth[i1], wdepth[i2]
        if w0v <= 1e-9 or w1v <= 1e-9 or w2v <= 1e-9:
            continue
        x0, y0 = xy[i0]
        x1, y1 = xy[i1]
        x2, y2 = xy[i2]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 == 0.0:
            continue
        if area2 < 0.0:  # reorder so the edge functions are non-negative inside
            i1, i2 = i2, i1
            x1, y1, x2, y2 = x2, y2, x1, y1
            w1v, w2v = w2v, w1v
            area2 = -area2

        xmin = max(0, int(np.ceil(min(x0, x1, x2))))
        xmax = min(width - 1, int(np.floor(max(x0, x1, x2))))
        ymin = max(0, int(np.ceil(min(y0, y1, y2))))
        ymax = min(height - 1, int(np.floor(max(y0, y1, y2))))
        if xmin > xmax or ymin > ymax:
            continue

        px, py = np.meshgrid(
            np.arange(xmin, xmax + 1, dtype=np.float64),
            np.arange(ymin, ymax + 1, dtype=np.float64),
        )
        e0 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        e1 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)
        e2 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        tl0 = _top_left(x2 - x1, y2 - y1)
        tl1 = _top_left(x0 - x2, y0 - y2)
        tl2 = _top_left(x1 - x0, y1 - y0)
        covered = (
            ((e0 > 0.0) | ((e0 == 0.0) & tl0))
            & ((e1 > 0.0) | ((e1 == 0.0) & tl1))
            & ((e2 > 0.0) | ((e2 == 0.0) & tl2))
        )
        if not covered.any():
            continue

        b0 = e0 / area2
        b1 = e1 / area2
        b2 = e2 / area2
        inv_w = b0 / w0v + b1 / w1v + b2 / w2v
        with np.errstate(divide="ignore", invalid="ignore"):
            d = 1.0 / inv_w

        sub = depth[ymin : ymax + 1, xmin : xmax + 1]
        upd = covered & (d < sub)
        if not upd.any():
            continue
        sub[upd] = d[upd]
        valid[ymin : ymax + 1, xmin : xmax + 1][upd] = 1
        for a in range(3):
            attr = (
                b0 * (verts[i0, a] / w0v)
                + b1 * (verts[i1, a] / w1v)
                + b2 * (verts[i2, a] / w2v)
            ) * d
            coord[ymin : ymax + 1, xmin : xmax + 1, a][upd] = attr[upd]
        for a in range(2):
            attr = (
                b0 * (uv[i0, a] / w0v) + b1 * (uv[i1, a] / w1v) + b2 * (uv[i2, a] / w2v)
            ) * d
            uvmap[ymin : ymax + 1, xmin : xmax + 1, a][upd] = attr[upd]

    return depth, coord, uvmap, valid


def _top_left(dx, dy):
    return (dy == 0.0 and dx < 0.0) or dy < 0.0


def warp_bilinear(src, xs, ys):
    """Bilinear gather from src at continuous (xs, ys) positions.

    Returns (out, inb): (N, c) samples and an (N,) in-bounds mask. A sample
    is in bounds only when all four neighboring pixel centers exist;
    out-of-bounds rows are zero.
    """
    h, w, c = src.shape
    n = xs.shape[0]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    inb = (x0 >= 0) & (y0 >= 0) & (x0 + 1 <= w - 1) & (y0 + 1 <= h - 1)
    out = np.zeros((n, c))
    if not inb.any():
        return out, inb.astype(np.uint8)
    xi = x0[inb]
    yi = y0[inb]
    fx = (xs[inb] - xi)[:, None]
    fy = (ys[inb] - yi)[:, None]
    top = (1.0 - fx) * src[yi, xi] + fx * src[yi, xi + 1]
    bot = (1.0 - fx) * src[yi + 1, xi] + fx * src[yi + 1, xi + 1]
    out[inb] = (1.0 - fy) * top + fy * bot
    return out, inb.astype(np.uint8)


def accumulate_hits(qx, qy, inb, width, height):
    """Per-query-pixel hit counts for quantized sample positions."""
    grid = np.zeros((height, width), dtype=np.int32)
    sel = inb.astype(bool)
    np.add.at(grid, (qy[sel], qx[sel]), 1)
    return grid


def _padded_shift(gray, ix, iy):
    """gray sampled at (x+ix, y+iy) for every pixel, edge-padded."""
    h, w = gray.shape
    m = max(abs(int(ix)), abs(int(iy))) + 1
    pad = np.pad(gray, m, mode="edge")
    return pad[m + iy : m + iy + h, m + ix : m + ix + w]


def lbp_codes(gray, ix0, iy0, w00, w01, w10, w11):
    """Raw circular LBP codes; border pixels (incomplete support) are -1.

    The tap geometry arrives precomputed: integer corners (ix0, iy0) and
    bilinear weights per neighbor, shared verbatim with the numba path.
    """
    h, w = gray.shape
    n = ix0.shape[0]
    codes = np.zeros((h, w), dtype=np.int16)
    for k in range(n):
        a = _padded_shift(gray, ix0[k], iy0[k])
        b = _padded_shift(gray, ix0[k] + 1, iy0[k])
        c = _padded_shift(gray, ix0[k], iy0[k] + 1)
        d = _padded_shift(gray, ix0[k] + 1, iy0[k] + 1)
        neigh = w00[k] * a + w01[k] * b + w10[k] * c + w11[k] * d
        codes |= (neigh >= gray).astype(np.int16) << k

    lm = max(0, -int(ix0.min()))
    rm = max(0, int(ix0.max()) + 1)
    tm = max(0, -int(iy0.min()))
    bm = max(0, int(iy0.max()) + 1)
    _mark_border(codes, lm, rm, tm, bm)
    return codes


def _mark_border(codes, lm, rm, tm, bm):
    h, w = codes.shape
    if tm:
        codes[:tm, :] = -1
    if bm:
        codes[h - bm :, :] = -1
    if lm:
        codes[:, :lm] = -1
    if rm:
        codes[:, w - rm :] = -1


def _box_sqdist(diff, patch):
    """Windowed sum of diff**2 over a centered patch x patch box."""
    h, w = diff.shape
    hw = patch // 2
    sq = diff * diff
    pad = np.pad(sq, hw, mode="constant")
    ii = np.zeros((h + 2 * hw + 1, w + 2 * hw + 1))
    np.cumsum(pad, axis=0, out=ii[1:, 1:][: h + 2 * hw])
    ii[1:, 1:] = np.cumsum(ii[1:, 1:], axis=1)
    top = ii[:h, :w]
    return ii[patch : patch + h, patch : patch + w] - ii[patch : patch + h, :w] - ii[:h, patch : patch + w] + top


def tplbp_codes(gray, dx, dy, patch, alpha, step):
    """Three-patch codes: bit i set when d(C_i, C_p) - d(C_{i+step}, C_p) >= alpha."""
    s = dx.shape[0]
    dists = []
    for i in range(s):
        diff = _padded_shift(gray, dx[i], dy[i]) - gray
        dists.append(np.sqrt(_box_sqdist(diff, patch)))
    codes = np.zeros(gray.shape, dtype=np.int16)
    for i in range(s):
        j = (i + step) % s
        codes |= ((dists[i] - dists[j]) >= alpha).astype(np.int16) << i
    m = int(max(np.abs(dx).max(), np.abs(dy).max())) + patch // 2
    _mark_border(codes, m, m, m, m)
    return codes


def fplbp_codes(gray, dx1, dy1, dx2, dy2, patch, alpha, step):
    """Four-patch codes over two rings; s/2 bits per pixel."""
    s = dx1.shape[0]
    half = s // 2
    codes = np.zeros(gray.shape, dtype=np.int16)
    for i in range(half):
        j = (i + step) % s
        k = i + half
        l = (k + step) % s
        diff_a = _padded_shift(gray, dx1[i], dy1[i]) - _padded_shift(gray, dx2[j], dy2[j])
        diff_b = _padded_shift(gray, dx1[k], dy1[k]) - _padded_shift(gray, dx2[l], dy2[l])
        da = np.sqrt(_box_sqdist(diff_a, patch))
        db = np.sqrt(_box_sqdist(diff_b, patch))
        codes |= ((da - db) >= alpha).astype(np.int16) << i
    m = int(
        max(
            np.abs(dx1).max(),
            np.abs(dy1).max(),
            np.abs(dx2).max(),
            np.abs(dy2).max(),
        )
    ) + patch // 2
    _mark_border(codes, m, m, m, m)
    return codes
