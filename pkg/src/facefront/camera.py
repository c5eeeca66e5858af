"""Projective camera: a 3x4 matrix plus an on-demand intrinsic/extrinsic split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCameraError, PointAtInfinityError


@dataclass(frozen=True)
class Camera:
    """A rank-3 3x4 projection matrix.

    The matrix is used directly for synthesis; decompose() recovers
    K (intrinsics), R (rotation, det +1) and t only when callers ask.
    """

    C: np.ndarray  # (3, 4) float64, read-only

    def __post_init__(self):
        C = np.ascontiguousarray(np.asarray(self.C, dtype=np.float64))
        if C.shape != (3, 4):
            raise ValueError(f"camera matrix must be 3x4, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("camera matrix must be finite")
        if np.linalg.matrix_rank(C) < 3:
            raise DegenerateCameraError("camera matrix has rank < 3")
        C.flags.writeable = False
        object.__setattr__(self, "C", C)

    def decompose(self):
        """RQ split C ~ K [R | t] with K upper-triangular, positive diagonal.

        Returns (K, R, t) with K normalized so K[2,2] == 1 and det(R) == +1.
        """
        M = self.C[:, :3]
        K, R = _rq3(M)
        # Force positive diagonal on K by flipping matching columns/rows.
        S = np.diag(np.sign(np.diag(K)))
        K = K @ S
        R = S @ R
        if np.linalg.det(R) < 0:
            K = -K
            R = -R
        t = np.linalg.solve(K, self.C[:, 3])
        scale = K[2, 2]
        if abs(scale) < 1e-15:
            raise DegenerateCameraError("cannot normalize intrinsics: K[2,2] ~ 0")
        return K / scale, R, t


def _rq3(M: np.ndarray):
    """RQ decomposition of a 3x3 matrix via QR of the flipped transpose."""
    P = np.fliplr(np.eye(3))
    Q, R = np.linalg.qr((P @ M).T)
    return P @ R.T @ P, P @ Q.T


def project(camera: Camera, P) -> tuple[float, float]:
    """Dehomogenized image point of the 3D point P.

    Raises PointAtInfinityError when the homogeneous depth vanishes.
    """
    P = np.asarray(P, dtype=np.float64)
    h = camera.C[:, :3] @ P + camera.C[:, 3]
    if abs(h[2]) < 1e-12:
        raise PointAtInfinityError("projected point has zero homogeneous depth")
    return (h[0] / h[2], h[1] / h[2])


def project_points(camera: Camera, pts: np.ndarray):
    """Vectorized projection of an (n, 3) array.

    Returns (xy, w): the (n, 2) dehomogenized points and the (n,) depths.
    Rows with |w| ~ 0 come back as NaN rather than raising.
    """
    pts = np.asarray(pts, dtype=np.float64)
    h = pts @ camera.C[:, :3].T + camera.C[:, 3]
    w = h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = h[:, :2] / w[:, None]
    xy[np.abs(w) < 1e-12] = np.nan
    return xy, w


def look_frontal(focal: float, cx: float, cy: float, distance: float) -> Camera:
    """Reference-view camera for a head mesh in the package convention.

    Model axes: +X subject's right, +Y up, -Z toward the camera. The camera
    sits at (0, 0, -distance) looking at the origin; image x runs against
    world X (a photo of a face mirrors left/right), image y runs down.
    """
    K = np.array([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]])
    R = np.array([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]])
    t = np.array([0.0, 0.0, distance])
    return Camera(K @ np.hstack([R, t[:, None]]))


def rotate_about(camera: Camera, R: np.ndarray, center) -> Camera:
    """Camera viewing the model after rotating it by R about a fixed center.

    Equivalent to composing the original camera with the model-space motion
    P -> R (P - c) + c, so ground-truth query cameras for synthetic views
    stay expressed in original model coordinates.
    """
    R = np.asarray(R, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    M = np.eye(4)
    M[:3, :3] = R
    M[:3, 3] = c - R @ c
    return Camera(camera.C @ M)
