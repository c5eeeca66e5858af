"""Synthetic corpora: posed renders of procedural heads plus benchmark protocols.

Every dataset the desk-scale benchmarks use comes from here: known-pose
renders with exact projected landmarks, identity/gender labels, and
fold-structured pair protocols. Seed spaces for detector training, the
verification benchmark and ad-hoc tests are kept disjoint by construction
(identity seeds 10xxx / 20xxx / 30xxx).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .camera import Camera, project_points, rotate_about
from .errors import SchemaError
from .headmodel import HeadParams, make_head, sample_params
from .imagecore import Image, make_image, save_image
from .landmarks import LandmarkSet, save_landmarks
from .refbundle import Mesh3D, ReferenceBundle, rasterize_reference

DETECTOR_ID_BASE = 10_000
BENCH_ID_BASE = 20_000
BACKGROUND_ID_BASE = 25_000   # OSS negative bank; disjoint from all folds
TEST_ID_BASE = 30_000


def rotation_yp(yaw_deg: float, pitch_deg: float = 0.0) -> np.ndarray:
    """Model-space rotation: yaw about +Y, then pitch about +X."""
    ya = np.deg2rad(yaw_deg)
    pa = np.deg2rad(pitch_deg)
    cy, sy = np.cos(ya), np.sin(ya)
    cp, sp = np.cos(pa), np.sin(pa)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    return rx @ ry


def render_query(mesh: Mesh3D, landmarks3d: dict, ref_camera: Camera,
                 yaw_deg: float, pitch_deg: float = 0.0, width: int = 250,
                 height: int = 250, schema_id: str = "sdm48",
                 background: Image | None = None):
    """Render the head at a pose; returns (image, true landmarks, true camera).

    The ground-truth camera is expressed in unrotated model coordinates, so
    it projects reference-bundle coords directly.  An optional background
    image of the same size fills the pixels the head does not cover.
    """
    v = mesh.vertices
    center = (v.min(axis=0) + v.max(axis=0)) / 2.0
    cam_q = rotate_about(ref_camera, rotation_yp(yaw_deg, pitch_deg), center)
    img, _, valid = rasterize_reference(mesh, cam_q, width, height)
    if background is not None:
        bg = background.data
        if bg.shape[:2] != img.data.shape[:2] or bg.shape[2] not in (1, img.channels):
            raise SchemaError("background shape must match the render")
        pix = np.broadcast_to(bg, img.data.shape).copy()
        pix[valid] = img.data[valid]
        img = make_image(pix)

    from .landmarks import _schema_names

    names = _schema_names(schema_id)
    pts3 = np.array([landmarks3d[n] for n in names])
    xy, _ = project_points(cam_q, pts3)
    return img, LandmarkSet(schema_id, names, xy), cam_q


def noise_background(rng: np.random.Generator, height: int, width: int,
                     channels: int = 1) -> Image:
    """Smooth low-frequency clutter plus fine grain, like an out-of-focus scene."""
    gh = height // 12 + 2
    gw = width // 12 + 2
    g = rng.uniform(0.10, 0.90, (gh, gw, channels))
    yi = np.linspace(0.0, gh - 1.0, height)
    xi = np.linspace(0.0, gw - 1.0, width)
    y0 = np.minimum(yi.astype(np.int64), gh - 2)
    x0 = np.minimum(xi.astype(np.int64), gw - 2)
    fy = (yi - y0)[:, None, None]
    fx = (xi - x0)[None, :, None]
    top = (1 - fx) * g[y0][:, x0] + fx * g[y0][:, x0 + 1]
    bot = (1 - fx) * g[y0 + 1][:, x0] + fx * g[y0 + 1][:, x0 + 1]
    base = (1 - fy) * top + fy * bot
    grain = rng.uniform(-0.05, 0.05, (height, width, channels))
    return make_image(np.clip(base + grain, 0.0, 1.0))


@dataclass(frozen=True)
class CorpusRecord:
    index: int
    image_path: str
    landmark_path: str
    identity: int
    gender: str
    yaw_deg: float
    pitch_deg: float


def build_corpus(out_dir, n_identities: int = 20, renders_each: int = 10,
                 seed: int = 0, yaw_range: tuple = (-45.0, 45.0),
                 pitch_range: tuple = (-6.0, 6.0), size: int = 250,
                 ref_camera: Camera | None = None,
                 id_seed_base: int = BENCH_ID_BASE,
                 noise_px: float = 0.0,
                 jitter: float = 1.0,
                 clutter: bool = False) -> list[CorpusRecord]:
    """Render a labeled corpus to disk and return its records.

    Landmarks are exact projections of the 3D points (optionally perturbed
    by noise_px Gaussian pixels); records also land in corpus.json.  With
    clutter enabled every render gets its own noise background instead of
    the flat studio one.
    """
    out_dir = os.fspath(out_dir)
    img_dir = os.path.join(out_dir, "images")
    lm_dir = os.path.join(out_dir, "landmarks")
    os.makedirs(img_dir, exist_ok=True)
    os.makedirs(lm_dir, exist_ok=True)

    records: list[CorpusRecord] = []
    index = 0
    for i in range(n_identities):
        params = sample_params(id_seed_base + seed * 1000 + i, jitter=jitter)
        mesh, lms3 = make_head(params)
        cam = ref_camera
        if cam is None:
            from .refbundle import default_reference_camera

            cam = default_reference_camera(mesh, size, size)
        for j in range(renders_each):
            rng = np.random.default_rng([seed, i, j])
            yaw = float(rng.uniform(*yaw_range))
            pitch = float(rng.uniform(*pitch_range))
            bg = noise_background(rng, size, size) if clutter else None
            img, lms, _ = render_query(mesh, lms3, cam, yaw, pitch, size, size,
                                       background=bg)
            if noise_px > 0:
                noisy = lms.xy + rng.normal(0.0, noise_px, lms.xy.shape)
                lms = LandmarkSet(lms.schema_id, lms.names, noisy)
            ip = os.path.join(img_dir, f"img_{index:04d}.png")
            lp = os.path.join(lm_dir, f"img_{index:04d}.json")
            save_image(img, ip)
            save_landmarks(lms, lp)
            records.append(CorpusRecord(index, ip, lp, i, params.gender, yaw, pitch))
            index += 1

    with open(os.path.join(out_dir, "corpus.json"), "w", encoding="utf-8") as fh:
        json.dump([r.__dict__ for r in records], fh, indent=1)
    return records


def load_corpus(root) -> list[CorpusRecord]:
    path = os.path.join(os.fspath(root), "corpus.json")
    with open(path, "r", encoding="utf-8") as fh:
        return [CorpusRecord(**d) for d in json.load(fh)]


def build_verify_protocol(records: list[CorpusRecord], n_same: int = 300,
                          n_notsame: int = 300, n_folds: int = 5,
                          seed: int = 1, min_same_dyaw: float = 0.0,
                          within_gender: bool = False,
                          ) -> list[list[tuple[int, int, bool]]]:
    """Identity-exclusive verification folds of (indexA, indexB, same) pairs.

    Identities are partitioned across folds, so no identity's images appear
    in more than one fold; pairs are unique within a fold.  min_same_dyaw
    requires same pairs to differ in yaw by at least that many degrees
    (a cross-pose protocol); within_gender restricts not-same pairs to a
    shared gender so they cannot be solved from gender cues alone.
    """
    rng = np.random.default_rng(seed)
    by_id: dict[int, list[int]] = {}
    gender_of: dict[int, str] = {}
    yaw_of: dict[int, float] = {}
    for r in records:
        by_id.setdefault(r.identity, []).append(r.index)
        gender_of[r.identity] = r.gender
        yaw_of[r.index] = r.yaw_deg
    ids = sorted(by_id)
    if len(ids) < 2 * n_folds:
        raise SchemaError(f"{len(ids)} identities cannot fill {n_folds} folds")
    perm = [ids[k] for k in rng.permutation(len(ids))]
    groups = [sorted(perm[k::n_folds]) for k in range(n_folds)]

    same_per = n_same // n_folds
    diff_per = n_notsame // n_folds
    folds = []
    for fold_ids in groups:
        seen = set()
        pairs: list[tuple[int, int, bool]] = []
        guard = 0
        while sum(1 for p in pairs if p[2]) < same_per:
            ident = fold_ids[rng.integers(0, len(fold_ids))]
            items = by_id[ident]
            a, b = rng.choice(len(items), 2, replace=False)
            key = (min(items[a], items[b]), max(items[a], items[b]))
            guard += 1
            if guard > 100000:
                raise SchemaError("cannot build enough unique same pairs")
            if key in seen:
                continue
            if abs(yaw_of[key[0]] - yaw_of[key[1]]) < min_same_dyaw:
                continue
            seen.add(key)
            pairs.append((key[0], key[1], True))
        while sum(1 for p in pairs if not p[2]) < diff_per:
            ia, ib = rng.choice(len(fold_ids), 2, replace=False)
            id_a, id_b = fold_ids[ia], fold_ids[ib]
            if within_gender and gender_of[id_a] != gender_of[id_b]:
                guard += 1
                if guard > 100000:
                    raise SchemaError("cannot build enough unique not-same pairs")
                continue
            a = by_id[id_a][rng.integers(0, len(by_id[id_a]))]
            b = by_id[id_b][rng.integers(0, len(by_id[id_b]))]
            key = (min(a, b), max(a, b))
            guard += 1
            if guard > 100000:
                raise SchemaError("cannot build enough unique not-same pairs")
            if key in seen:
                continue
            seen.add(key)
            pairs.append((key[0], key[1], False))
        folds.append(pairs)
    return folds


def build_gender_folds(records: list[CorpusRecord],
                       n_folds: int = 5, seed: int = 2) -> list[list[int]]:
    """Subject-exclusive folds of record indices for gender estimation."""
    rng = np.random.default_rng(seed)
    by_id: dict[int, list[int]] = {}
    for r in records:
        by_id.setdefault(r.identity, []).append(r.index)
    ids = sorted(by_id)
    perm = [ids[k] for k in rng.permutation(len(ids))]
    folds = [[] for _ in range(n_folds)]
    for k, ident in enumerate(perm):
        folds[k % n_folds].extend(by_id[ident])
    return [sorted(f) for f in folds]


def paste_patch(img: Image, x0: int, y0: int, side: int,
                value: float = 0.06, noise: float = 0.0,
                rng=None) -> Image:
    """Copy of img with a dark square patch pasted (clipped to bounds).

    With noise > 0 the square carries per-pixel speckle around `value`,
    like a physical occluding object rather than a constant fill. A
    constant fill is a degenerate occluder for LBP-based detectors --
    blended at any opacity it preserves the underlying codes exactly --
    so callers exercising occlusion handling should pass noise and a
    seeded rng.
    """
    pix = img.data.copy()
    xa = max(0, x0)
    ya = max(0, y0)
    xb = min(img.width, x0 + side)
    yb = min(img.height, y0 + side)
    if xb > xa and yb > ya:
        if noise > 0.0:
            if rng is None:
                rng = np.random.default_rng(0)
            speck = rng.uniform(-noise, noise, size=(yb - ya, xb - xa, 1))
            pix[ya:yb, xa:xb] = np.clip(value + speck, 0.0, 1.0)
        else:
            pix[ya:yb, xa:xb] = value
    return make_image(pix)


def detector_training_images(bundle: ReferenceBundle, n_identities: int = 16,
                             renders_each: int = 8, seed: int = 0,
                             yaw_grid: tuple = (-43.0, -40.0, -37.0, -25.0,
                                                25.0, 37.0, 40.0,
                                                43.0)) -> list[Image]:
    """Raw and symmetric frontalizations of held-out identities.

    Uses the detector seed space, disjoint from benchmark identities, as
    detector training data must be. Yaws cycle through a fixed grid with
    small jitter, weighted toward the 40-degree regime: the away-side
    probes only ever see stretched resampling there, and a uniform yaw
    draw leaves that appearance too thin for the detectors to learn that
    stretched-but-clean patches are acceptable.
    """
    from .frontalize import frontalize

    images: list[Image] = []
    for i in range(n_identities):
        params = sample_params(DETECTOR_ID_BASE + seed * 1000 + i)
        mesh, lms3 = make_head(params)
        for j in range(renders_each):
            rng = np.random.default_rng([seed + 7, i, j])
            yaw = yaw_grid[j % len(yaw_grid)] + float(rng.uniform(-5.0, 5.0))
            pitch = float(rng.uniform(-6.0, 6.0))
            img, lms, _ = render_query(mesh, lms3, bundle.camera, yaw, pitch,
                                       bundle.width, bundle.height)
            res = frontalize(img, lms, bundle)
            if res.status != "ok":
                continue
            images.append(res.raw)
            images.append(res.symmetric)
    return images
