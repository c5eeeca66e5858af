"""Frontal view synthesis, occlusion estimation, soft symmetry and selection.

Every valid reference pixel knows its 3D surface point; projecting that
point through the estimated query camera and sampling the query there
yields the raw frontal view. Sampling counts per quantized query pixel
give the occlusion score o = 1 - exp(-count), which weights the blend with
the bilaterally mirrored pixel. Eight patch detectors then arbitrate
between the raw and symmetric candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .camera import Camera, project_points
from .errors import DimensionMismatchError, RankDeficientError, TooFewCorrespondencesError
from .imagecore import Image, make_image, save_image, save_image_u16
from .landmarks import LandmarkSet
from .posefit import FitReport, fit_query_camera
from .refbundle import ReferenceBundle

EPSILON = 1e-6


@dataclass(frozen=True)
class SampleCountMap:
    """Sampling counts from one synthesis pass.

    counts[y, x] is the number of valid reference pixels whose projections
    quantize to the same query pixel as (x, y)'s does; zero exactly on
    invalid or out-of-bounds pixels. A projection counts as out of bounds
    when bilinear sampling needs a neighbor outside the query, so the
    half-pixel rim of the query is treated as out of bounds too.
    """

    counts: np.ndarray       # (h, w) int64, per reference pixel
    oob: np.ndarray          # (h, w) bool, valid pixels that projected out
    query_hits: np.ndarray   # (qh, qw) int64, hits per query pixel
    n_inbounds: int          # valid reference pixels that landed in bounds

    def conserved(self) -> bool:
        """Exact count conservation: total hits equal in-bounds pixels."""
        return int(self.query_hits.sum()) == self.n_inbounds


@dataclass(frozen=True)
class FrontalizeOptions:
    epsilon: float = EPSILON
    tie_break: str = "symmetric"   # winner on equal pass-counts
    mode: str = "auto"             # auto | raw | symmetric


@dataclass(frozen=True)
class FrontalizationResult:
    status: str                          # ok | rejected
    selected: str                        # raw | symmetric | fallback
    output: Image
    raw: Image | None = None
    counts: SampleCountMap | None = None
    occlusion: np.ndarray | None = None  # (h, w) float64
    symmetric: Image | None = None
    detector_votes: dict | None = None   # {"raw": 8 bools, "symmetric": 8 bools}
    camera: Camera | None = None
    report: FitReport | None = None
    error: str | None = None


def synthesize_raw(query: Image, camera: Camera,
                   bundle: ReferenceBundle) -> tuple[Image, SampleCountMap]:
    """Back-projection synthesis of the raw frontal view plus sampling counts.

    Out-of-bounds reference pixels take the mirror pixel's sample when that
    is in bounds, mid-gray otherwise.
    """
    h, w = bundle.valid.shape
    qh, qw = query.height, query.width
    ys, xs = np.nonzero(bundle.valid)

    xy, _ = project_points(camera, bundle.coord[ys, xs])
    px = np.where(np.isfinite(xy[:, 0]), xy[:, 0], -1e9)
    py = np.where(np.isfinite(xy[:, 1]), xy[:, 1], -1e9)

    samples, inb8 = _kernels.warp_bilinear(query.data, px, py)
    inb = inb8.astype(bool)

    pix = np.full((h, w, query.channels), bundle.background, dtype=np.float64)
    pix[ys[inb], xs[inb]] = samples[inb]

    qx = np.floor(px[inb] + 0.5).astype(np.int64)
    qy = np.floor(py[inb] + 0.5).astype(np.int64)
    hits = _kernels.accumulate_hits(qx, qy, np.ones(qx.shape[0], np.uint8), qw, qh)
    hits = hits.astype(np.int64)

    counts = np.zeros((h, w), dtype=np.int64)
    counts[ys[inb], xs[inb]] = hits[qy, qx]
    oob = np.zeros((h, w), dtype=bool)
    oob[ys[~inb], xs[~inb]] = True

    # fill rule for pixels that projected outside the query
    oy, ox = np.nonzero(oob)
    if oy.size:
        mx = bundle.symmetry[oy, ox, 0]
        my = bundle.symmetry[oy, ox, 1]
        ok = ~oob[my, mx] & ((mx != ox) | (my != oy))
        pix[oy[ok], ox[ok]] = pix[my[ok], mx[ok]]

    cmap = SampleCountMap(counts, oob, hits, int(inb.sum()))
    return make_image(np.clip(pix, 0.0, 1.0)), cmap


def occlusion_map(counts: SampleCountMap) -> np.ndarray:
    """Per-reference-pixel occlusion score o = 1 - exp(-count)."""
    return occlusion_score(counts.counts)


def occlusion_score(count):
    """Eq. 3 score for a count or an array of counts; exact 0 at count 0."""
    return -np.expm1(-np.asarray(count, dtype=np.float64))


def apply_soft_symmetry(raw: Image, occ: np.ndarray, bundle: ReferenceBundle,
                        epsilon: float = EPSILON) -> Image:
    """Visibility-weighted blend of each pixel with its mirror.

    alpha = clamp((o(q') - o(sym)) / (1 - o(sym) + eps), 0, 1). Eye-mask
    pixels and pixels whose mirror is out of bounds (occlusion zero there)
    copy raw unchanged; so does the better-visible side, where alpha
    clamps to zero.
    """
    if occ.shape != bundle.valid.shape or (raw.height, raw.width) != occ.shape:
        raise DimensionMismatchError("raw/occlusion/bundle dimensions disagree")
    out = raw.data.copy()
    ys, xs = np.nonzero(bundle.valid & ~bundle.eye_mask)
    mx = bundle.symmetry[ys, xs, 0]
    my = bundle.symmetry[ys, xs, 1]

    o_self = occ[ys, xs]
    o_mirr = occ[my, mx]
    alpha = np.clip((o_self - o_mirr) / (1.0 - o_mirr + epsilon), 0.0, 1.0)
    alpha[o_mirr == 0.0] = 0.0  # mirror out of bounds: keep raw
    out[ys, xs] = (1.0 - alpha[:, None]) * raw.data[ys, xs] \
        + alpha[:, None] * raw.data[my, mx]
    return make_image(out)


def select_output(raw: Image, symmetric: Image, detectors, bundle: ReferenceBundle,
                  fallback: Image, tie_break: str = "symmetric"):
    """Detector vote between the two candidates.

    Returns (image, selected, votes, status). Symmetric wins ties by
    default; six or more failures on both candidates reject the pair in
    favor of the fallback crop.
    """
    votes_raw = detectors.votes(raw)
    votes_sym = detectors.votes(symmetric)
    pass_raw = sum(votes_raw)
    pass_sym = sum(votes_sym)
    votes = {"raw": tuple(votes_raw), "symmetric": tuple(votes_sym)}

    n = len(votes_raw)
    if (n - pass_raw) >= 6 and (n - pass_sym) >= 6:
        return fallback, "fallback", votes, "rejected"
    if pass_sym > pass_raw or (pass_sym == pass_raw and tie_break == "symmetric"):
        return symmetric, "symmetric", votes, "ok"
    return raw, "raw", votes, "ok"


def frontalize(query: Image, landmarks: LandmarkSet, bundle: ReferenceBundle,
               detectors=None, opts: FrontalizeOptions | None = None) -> FrontalizationResult:
    """Full pipeline for one image: pose fit, synthesis, symmetry, selection.

    Pose-fit failures reject the image rather than raising; the fallback
    output is the query crop itself (planar alignment).
    """
    opts = opts or FrontalizeOptions()
    if opts.mode not in ("auto", "raw", "symmetric"):
        raise ValueError(f"unknown mode {opts.mode!r}")

    try:
        camera, report = fit_query_camera(landmarks, bundle)
    except (TooFewCorrespondencesError, RankDeficientError) as exc:
        return FrontalizationResult(
            status="rejected", selected="fallback", output=query, error=str(exc)
        )

    raw, cmap = synthesize_raw(query, camera, bundle)
    occ = occlusion_map(cmap)
    symmetric = apply_soft_symmetry(raw, occ, bundle, opts.epsilon)

    votes = None
    if opts.mode == "raw":
        output, selected, status = raw, "raw", "ok"
    elif opts.mode == "symmetric":
        output, selected, status = symmetric, "symmetric", "ok"
    elif detectors is not None:
        output, selected, votes, status = select_output(
            raw, symmetric, detectors, bundle, query, opts.tie_break
        )
    else:
        output, selected, status = symmetric, "symmetric", "ok"

    return FrontalizationResult(
        status=status, selected=selected, output=output, raw=raw, counts=cmap,
        occlusion=occ, symmetric=symmetric, detector_votes=votes,
        camera=camera, report=report,
    )


def occlusion_pseudocolor(occ: np.ndarray) -> Image:
    """Blue-to-red rendering of an occlusion map for debug output."""
    o = np.clip(occ, 0.0, 1.0)
    r = np.clip(2.0 * o - 0.5, 0.0, 1.0)
    g = np.clip(1.0 - np.abs(2.0 * o - 1.0), 0.0, 1.0)
    b = np.clip(1.5 - 2.0 * o, 0.0, 1.0)
    return make_image(np.stack([r, g, b], axis=2))


def emit_debug(result: FrontalizationResult, out_dir, stem: str) -> list[str]:
    """Write raw/symmetric/occlusion/count images for one ok result."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []

    def put(name, img):
        path = os.path.join(os.fspath(out_dir), f"{stem}_{name}.png")
        save_image(img, path)
        written.append(path)

    if result.raw is not None:
        put("raw", result.raw)
    if result.symmetric is not None:
        put("symmetric", result.symmetric)
    if result.occlusion is not None:
        put("occlusion", occlusion_pseudocolor(result.occlusion))
    if result.counts is not None:
        path = os.path.join(os.fspath(out_dir), f"{stem}_counts.png")
        save_image_u16(np.clip(result.counts.counts, 0, 65535).astype(np.uint16), path)
        written.append(path)
    return written
