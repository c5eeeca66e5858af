"""Query camera estimation: landmark correspondences and the normalized DLT.

The 2D detections in the query pair up with 3D points read straight off the
reference bundle's per-pixel coordinates, and a direct linear transform
recovers the full 3x4 projection. No iterative refinement; the paper's
argument is that frontalization tolerates the approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, project_points
from .errors import RankDeficientError, TooFewCorrespondencesError
from .landmarks import LandmarkSet
from .refbundle import ReferenceBundle

SNAP_RADIUS = 3.0  # px; max distance from a projected landmark to a valid pixel
MIN_POINTS = 6
CONDITION_THRESHOLD = 10.0


@dataclass(frozen=True)
class FitReport:
    n_points: int
    rms_px: float
    max_px: float
    condition: float          # gap between the two smallest singular values
    well_conditioned: bool
    dropped: tuple[str, ...]  # landmark names with no valid pixel in range


def nearest_valid_pixel(valid: np.ndarray, x: float, y: float,
                        radius: float = SNAP_RADIUS) -> tuple[int, int] | None:
    """Closest valid pixel within `radius` of (x, y), or None.

    Ties resolve to the smallest (y, x) so the choice is deterministic.
    """
    h, w = valid.shape
    r = int(np.ceil(radius))
    cx = int(round(x))
    cy = int(round(y))
    best = None
    best_d2 = radius * radius + 1e-12
    for py in range(max(0, cy - r), min(h, cy + r + 1)):
        for px in range(max(0, cx - r), min(w, cx + r + 1)):
            if not valid[py, px]:
                continue
            d2 = (px - x) ** 2 + (py - y) ** 2
            if d2 < best_d2 - 1e-12 or (abs(d2 - best_d2) <= 1e-12 and best is not None
                                        and (py, px) < best):
                best = (py, px)
                best_d2 = min(best_d2, d2)
    return best


def make_correspondences(query_lms: LandmarkSet, bundle: ReferenceBundle):
    """3D-2D pairs: bundle coords at each reference landmark vs query detections.

    Reference landmarks without a valid bundle pixel within 3 px are dropped.
    Raises TooFewCorrespondencesError below six surviving pairs.
    """
    if query_lms.schema_id != bundle.landmarks.schema_id:
        raise TooFewCorrespondencesError(
            f"query landmarks use schema {query_lms.schema_id!r}, bundle has "
            f"{bundle.landmarks.schema_id!r}"
        )
    pts3: list[np.ndarray] = []
    pts2: list[np.ndarray] = []
    dropped: list[str] = []
    for i, name in enumerate(bundle.landmarks.names):
        rx, ry = bundle.landmarks.xy[i]
        hit = nearest_valid_pixel(bundle.valid, rx, ry)
        if hit is None:
            dropped.append(name)
            continue
        py, px = hit
        pts3.append(bundle.coord[py, px])
        pts2.append(query_lms.xy[i])
    if len(pts3) < MIN_POINTS:
        raise TooFewCorrespondencesError(
            f"only {len(pts3)} usable correspondences, need {MIN_POINTS}"
        )
    return np.array(pts3), np.array(pts2), tuple(dropped)


def _normalize_2d(x: np.ndarray):
    c = x.mean(axis=0)
    d = np.sqrt(((x - c) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise RankDeficientError("2D points are coincident")
    s = np.sqrt(2.0) / d
    T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
    return (x - c) * s, T


def _normalize_3d(X: np.ndarray):
    c = X.mean(axis=0)
    d = np.sqrt(((X - c) ** 2).sum(axis=1)).mean()
    if d < 1e-12:
        raise RankDeficientError("3D points are coincident")
    s = np.sqrt(3.0) / d
    U = np.eye(4)
    U[:3, :3] *= s
    U[:3, 3] = -s * c
    return (X - c) * s, U


def estimate_projection(X3d: np.ndarray, x2d: np.ndarray) -> tuple[Camera, FitReport]:
    """Normalized DLT for the 3x4 camera from n >= 6 point pairs.

    The result has unit Frobenius norm and positive depth at the 3D centroid.
    The report's condition value is the gap ratio between the two smallest
    singular values of the design matrix; below 10 the solution is flagged.
    """
    X3d = np.asarray(X3d, dtype=np.float64)
    x2d = np.asarray(x2d, dtype=np.float64)
    n = X3d.shape[0]
    if X3d.shape != (n, 3) or x2d.shape != (n, 2):
        raise RankDeficientError(
            f"bad correspondence shapes {X3d.shape} / {x2d.shape}"
        )
    if n < MIN_POINTS:
        raise TooFewCorrespondencesError(f"{n} correspondences, need {MIN_POINTS}")
    if not (np.all(np.isfinite(X3d)) and np.all(np.isfinite(x2d))):
        raise RankDeficientError("non-finite correspondence data")

    # collinear 3D points are unrecoverable; near-planar ones only get flagged
    sx = np.linalg.svd(X3d - X3d.mean(axis=0), compute_uv=False)
    if sx[1] < 1e-9 * max(sx[0], 1.0):
        raise RankDeficientError("3D correspondence points are collinear")

    Xn, U = _normalize_3d(X3d)
    xn, T = _normalize_2d(x2d)

    Xh = np.hstack([Xn, np.ones((n, 1))])
    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, 0:1] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -xn[:, 1:2] * Xh

    _, s, Vt = np.linalg.svd(A)
    tiny = 1e-15 * max(float(s[0]), 1.0)
    condition = float(s[10] / max(float(s[11]), tiny))
    Pn = Vt[11].reshape(3, 4)

    C = np.linalg.inv(T) @ Pn @ U
    C = C / np.linalg.norm(C)
    centroid = X3d.mean(axis=0)
    if C[2, :3] @ centroid + C[2, 3] < 0:
        C = -C
    camera = Camera(C)

    xy, _ = project_points(camera, X3d)
    res = np.hypot(xy[:, 0] - x2d[:, 0], xy[:, 1] - x2d[:, 1])
    rms = float(np.sqrt(np.mean(res**2)))
    report = FitReport(
        n_points=n,
        rms_px=rms,
        max_px=float(res.max()),
        condition=condition,
        well_conditioned=condition >= CONDITION_THRESHOLD,
        dropped=(),
    )
    return camera, report


def fit_query_camera(query_lms: LandmarkSet,
                     bundle: ReferenceBundle) -> tuple[Camera, FitReport]:
    """Estimate the query projection from bundle landmarks and detections."""
    X3d, x2d, dropped = make_correspondences(query_lms, bundle)
    camera, report = estimate_projection(X3d, x2d)
    from dataclasses import replace

    return camera, replace(report, dropped=dropped)
