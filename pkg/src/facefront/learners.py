"""Linear learners: hinge SVM, One-Shot Similarity, stacking, detectors.

The SVM minimizes the L2-regularized squared hinge loss

    f(w) = 0.5 ||w||^2 + sum_i c_i * max(0, 1 - y_i w.x_i)^2

with a truncated-Newton solver (conjugate-gradient inner loop, Armijo
line search) started from the zero vector, stopping when the relative
objective decrease over a step falls below `tol`. The bias rides along
as an augmented always-one feature and is regularized with the rest.

With dropout_rate > 0 each epoch is one Newton step on a freshly masked
copy of the features (each feature zeroed independently with the given
probability, seeded), and the returned feature weights are scaled by
(1 - dropout_rate); the bias is never dropped or scaled.

One-Shot Similarity trains a ridge least-squares classifier of {a}
against the negative set, scores b, repeats with roles swapped, and
returns the mean of the two signed scores. The solve runs in dual form,
so its cost scales with the negative-set size, not the descriptor
dimension.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .descriptors import (
    DEFAULT_CONFIG,
    Descriptor,
    DescriptorConfig,
    PatchSpec,
    VARIANTS,
    extract_patch_descriptor,
    hellinger,
    hybrid_descriptors,
    lbp_image,
)
from .errors import (
    CorruptDataError,
    DegenerateNegativeSetError,
    DetectorCountError,
    DimensionMismatchError,
    SingleClassError,
    TooFewTrainingImagesError,
    TruncatedFileError,
    VersionMismatchError,
)
from .imagecore import Image, to_grayscale

# probe order is fixed; detector votes and files follow it
PROBE_NAMES = ("eye_l_outer", "eye_l_inner", "eye_r_inner", "eye_r_outer",
               "cheek_l", "cheek_r", "mouth_corner_l", "mouth_corner_r")

# cheek probes sit this far outboard of the mouth corners, at nose height
CHEEK_OUT = 26.0

MIN_TRAINING_IMAGES = 50
MODEL_MAGIC = b"FFM1"
DETECTOR_MAGIC = b"FFD1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray    # (feature_dim,) float64, read-only
    bias: float
    feature_dim: int
    trained_on: dict


def _vec(x) -> np.ndarray:
    """Accept a Descriptor or a plain vector."""
    return x.values if isinstance(x, Descriptor) else np.asarray(x, dtype=np.float64)


# --- SVM ------------------------------------------------------------------------

def _objective(w: np.ndarray, Xa: np.ndarray, y: np.ndarray,
               c: np.ndarray) -> float:
    margins = 1.0 - y * (Xa @ w)
    act = margins > 0.0
    return 0.5 * float(w @ w) + float(c[act] @ (margins[act] ** 2))


def _gradient(w, Xa, y, c):
    margins = 1.0 - y * (Xa @ w)
    act = margins > 0.0
    g = w.copy()
    if np.any(act):
        g -= 2.0 * (Xa[act].T @ (c[act] * y[act] * margins[act]))
    return g, act, margins


def _newton_direction(w, Xa, y, c, act, grad, cg_iters: int) -> np.ndarray:
    """Truncated CG solve of H d = -grad with Hv = v + 2 Xa'[diag] Xa v."""
    Xact = Xa[act]
    cact = c[act]

    def hv(v):
        return v + 2.0 * (Xact.T @ (cact * (Xact @ v)))

    d = np.zeros_like(w)
    r = -grad.copy()
    p = r.copy()
    rr = float(r @ r)
    tol2 = max(rr * 1e-10, 1e-300)
    for _ in range(cg_iters):
        hp = hv(p)
        php = float(p @ hp)
        if php <= 0.0:
            break
        a = rr / php
        d += a * p
        r -= a * hp
        rr_new = float(r @ r)
        if rr_new <= tol2:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not np.any(d):
        d = -grad
    return d


def _sample_costs(y: np.ndarray, C: float, class_weight) -> np.ndarray:
    c = np.full(y.shape[0], C, dtype=np.float64)
    if class_weight == "balanced":
        n = y.shape[0]
        for cls in (-1.0, 1.0):
            m = y == cls
            c[m] = C * n / (2.0 * m.sum())
    elif class_weight is not None:
        raise ValueError(f"unknown class_weight {class_weight!r}")
    return c


def svm_train(X: np.ndarray, y: np.ndarray, C: float = 1.0,
              dropout_rate: float = 0.0, seed: int = 0,
              class_weight=None, tol: float = 1e-6,
              max_epochs: int = 100, cg_iters: int = 25) -> LinearModel:
    """L2-regularized squared-hinge linear SVM (see module docstring)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise DimensionMismatchError("sample matrix must be 2-D")
    n, d = X.shape
    if y.shape[0] != n:
        raise DimensionMismatchError("label count does not match sample count")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("samples and labels must be finite")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise SingleClassError("training data contains a single class")
    if not 0.0 <= dropout_rate < 1.0:
        raise ValueError("dropout_rate must lie in [0, 1)")

    Xa = np.hstack([X, np.ones((n, 1))])
    c = _sample_costs(y, C, class_weight)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(seed)
    obj = _objective(w, Xa, y, c)

    epochs = max_epochs if dropout_rate == 0.0 else max(max_epochs, 50)
    for _ in range(epochs):
        if dropout_rate > 0.0:
            mask = np.ones(d + 1)
            mask[:d] = rng.random(d) >= dropout_rate
            Xe = Xa * mask
        else:
            Xe = Xa
        grad, act, _ = _gradient(w, Xe, y, c)
        gnorm = float(np.linalg.norm(grad))
        if dropout_rate == 0.0 and gnorm <= 1e-12 * max(1.0, float(np.linalg.norm(w))):
            break
        step = _newton_direction(w, Xe, y, c, act, grad, cg_iters)
        # Armijo backtracking on the (possibly masked) objective
        base = _objective(w, Xe, y, c)
        slope = float(grad @ step)
        t = 1.0
        for _ls in range(30):
            cand = w + t * step
            if _objective(cand, Xe, y, c) <= base + 1e-4 * t * slope:
                break
            t *= 0.5
        w = w + t * step
        if dropout_rate == 0.0:
            new_obj = _objective(w, Xa, y, c)
            if obj - new_obj <= tol * max(1.0, abs(obj)):
                obj = new_obj
                break
            obj = new_obj

    weights = w[:d].copy()
    if dropout_rate > 0.0:
        weights *= 1.0 - dropout_rate
    weights.flags.writeable = False
    meta = {"n_samples": int(n), "C": float(C),
            "dropout_rate": float(dropout_rate), "seed": int(seed)}
    return LinearModel(weights, float(w[d]), d, meta)


def svm_predict(model: LinearModel, x) -> float | np.ndarray:
    """Signed score w.x + b; accepts one vector or a sample matrix."""
    arr = _vec(x)
    if arr.ndim == 1:
        if arr.shape[0] != model.feature_dim:
            raise DimensionMismatchError("feature dimension mismatch")
        return float(arr @ model.weights + model.bias)
    if arr.ndim == 2:
        if arr.shape[1] != model.feature_dim:
            raise DimensionMismatchError("feature dimension mismatch")
        return arr @ model.weights + model.bias
    raise DimensionMismatchError("expected a vector or a matrix of samples")


# --- One-Shot Similarity ---------------------------------------------------------

@dataclass(frozen=True)
class NegativeSet:
    """Descriptor rows from identities disjoint from any test pair."""

    matrix: np.ndarray         # (m, d) float64, read-only
    gram: np.ndarray           # cached matrix @ matrix.T


def make_negative_set(rows: np.ndarray) -> NegativeSet:
    m = np.ascontiguousarray(rows, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 2:
        raise DegenerateNegativeSetError("negative set needs at least two rows")
    if not np.all(np.isfinite(m)):
        raise DegenerateNegativeSetError("negative set must be finite")
    if np.all(m == m[0]):
        raise DegenerateNegativeSetError("negative set has rank 0 after centering")
    gram = m @ m.T
    m.flags.writeable = False
    gram.flags.writeable = False
    return NegativeSet(m, gram)


def _oss_side(a: np.ndarray, b: np.ndarray, neg: NegativeSet,
              lam: float) -> float:
    """Score of b under the ridge classifier of {a} (+1) vs neg (-1).

    Dual-form ridge on centered data: identical to solving
    (Xc'Xc + lam I) w = Xc' yc in the primal.
    """
    m = neg.matrix.shape[0]
    n = m + 1
    na = neg.matrix @ a
    # row means: mu = (a + sum(neg)) / n
    s = neg.matrix.sum(axis=0)
    mu = (a + s) / n
    xmu = np.empty(n)
    xmu[0] = a @ mu
    xmu[1:] = neg.matrix @ mu
    mumu = float(mu @ mu)
    K = np.empty((n, n))
    K[0, 0] = a @ a
    K[0, 1:] = na
    K[1:, 0] = na
    K[1:, 1:] = neg.gram
    K -= xmu[:, None]
    K -= xmu[None, :]
    K += mumu
    y = np.full(n, -1.0)
    y[0] = 1.0
    ybar = float(y.mean())
    yc = y - ybar
    K[np.diag_indices(n)] += lam
    coef = np.linalg.solve(K, yc)
    # score(b) = coef . (Xc (b - mu)) + ybar
    bm = b - mu
    xb = np.empty(n)
    xb[0] = a @ bm
    xb[1:] = neg.matrix @ bm
    xb -= float(mu @ bm)
    return float(coef @ xb + ybar)


def oss_similarity(a, b, neg: NegativeSet, lam: float = 1e-3) -> float:
    """Two-sided One-Shot Similarity: mean of the two exchange scores."""
    av = _vec(a)
    bv = _vec(b)
    d = neg.matrix.shape[1]
    if av.shape != (d,) or bv.shape != (d,):
        raise DimensionMismatchError("descriptor/negative-set dimension mismatch")
    if np.all(neg.matrix == neg.matrix[0]):
        raise DegenerateNegativeSetError("negative set has rank 0 after centering")
    return 0.5 * (_oss_side(av, bv, neg, lam) + _oss_side(bv, av, neg, lam))


# --- similarity stacking ---------------------------------------------------------

SIMILARITY_ORDER = tuple(f"{v}:{s}" for v in VARIANTS
                         for s in ("neg_l2", "neg_l2_sqrt", "oss", "oss_sqrt"))


@dataclass(frozen=True)
class SimilarityVector:
    values: np.ndarray       # (12,) or (13,) float64, read-only
    labels: tuple


@dataclass(frozen=True)
class OssBank:
    """Per-variant negative sets, raw and Hellinger-transformed."""

    raw: dict
    sqrt: dict
    lam: float = 1e-3


def build_oss_bank(descriptor_dicts: list, n_rows: int = 200,
                   seed: int = 0, lam: float = 1e-3) -> OssBank:
    """Sample negative sets from training-identity descriptors.

    `descriptor_dicts` holds one {variant: Descriptor} dict per training
    image; n_rows rows are drawn without replacement when possible.
    """
    if not descriptor_dicts:
        raise DegenerateNegativeSetError("no descriptors to build negatives from")
    rng = np.random.default_rng(seed)
    total = len(descriptor_dicts)
    k = min(n_rows, total)
    idx = rng.choice(total, size=k, replace=False)
    raw = {}
    sqrt = {}
    for v in VARIANTS:
        rows = np.stack([descriptor_dicts[i][v].values for i in idx])
        raw[v] = make_negative_set(rows)
        sqrt[v] = make_negative_set(np.sqrt(rows))
    return OssBank(raw, sqrt, lam)


def similarity_vector(desc1: dict, desc2: dict, bank: OssBank,
                      external: float | None = None) -> SimilarityVector:
    """12-D similarity vector from precomputed per-variant descriptors."""
    vals = []
    for v in VARIANTS:
        d1, d2 = desc1[v], desc2[v]
        h1, h2 = hellinger(d1), hellinger(d2)
        vals.append(-float(np.linalg.norm(d1.values - d2.values)))
        vals.append(-float(np.linalg.norm(h1.values - h2.values)))
        vals.append(oss_similarity(d1, d2, bank.raw[v], bank.lam))
        vals.append(oss_similarity(h1, h2, bank.sqrt[v], bank.lam))
    labels = SIMILARITY_ORDER
    if external is not None:
        vals.append(float(external))
        labels = labels + ("external",)
    arr = np.array(vals, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("similarity vector contains non-finite entries")
    arr.flags.writeable = False
    return SimilarityVector(arr, labels)


def stack_similarities(img1: Image, img2: Image, bank: OssBank,
                       cfg: DescriptorConfig = DEFAULT_CONFIG,
                       external: float | None = None) -> SimilarityVector:
    """Descriptor computation + 12-D similarity vector for an image pair."""
    return similarity_vector(hybrid_descriptors(img1, cfg),
                             hybrid_descriptors(img2, cfg), bank, external)


# --- conditional-symmetry detectors ----------------------------------------------

@dataclass(frozen=True)
class SymmetryDetectorSet:
    names: tuple
    specs: dict                # name -> PatchSpec
    models: dict               # name -> LinearModel
    config_hash: str

    def scores(self, img: Image) -> dict:
        codes = lbp_image(to_grayscale(img))
        out = {}
        for name in self.names:
            d = extract_patch_descriptor(img, self.specs[name], codes=codes)
            out[name] = svm_predict(self.models[name], d.values)
        return out

    def votes(self, img: Image) -> tuple:
        """Pass/fail per probe, in stored order; pass means score > 0."""
        s = self.scores(img)
        return tuple(s[name] > 0.0 for name in self.names)


def probe_specs(bundle, side: int = 24) -> dict:
    """Canonical probe patch specs for a reference bundle, keyed by name.

    Eye corners and mouth corners come straight from the bundle landmarks.
    The cheek probes have no landmark of their own: each sits CHEEK_OUT
    pixels outboard of its mouth corner, halfway between nose-wing and
    mouth height. That puts the away-side cheek in the deep self-occluded
    zone at high yaw, where soft symmetry replaces content outright, while
    the away mouth corner stays in the partially sampled strip next to the
    nose -- the two regimes the selection step has to tell apart.
    """
    lms = bundle.landmarks
    mid_y = (lms.point("nose_wing_l")[1] + lms.point("mouth_corner_l")[1]) / 2.0
    centers = {}
    for name in PROBE_NAMES:
        if name.startswith("cheek"):
            mouth = lms.point("mouth_corner_" + name[-1])
            sgn = -1.0 if mouth[0] < bundle.axis_k / 2.0 else 1.0
            centers[name] = (float(mouth[0] + sgn * CHEEK_OUT), float(mid_y))
        else:
            pt = lms.point(name)
            centers[name] = (float(pt[0]), float(pt[1]))
    return {name: PatchSpec(centers[name], int(side)) for name in PROBE_NAMES}


def _random_negative_centers(rng, spec: PatchSpec, width: int, height: int,
                             count: int, min_offset: float):
    """Random patch centers at least min_offset away from the probe."""
    half = spec.side / 2.0
    out = []
    cx, cy = float(spec.center[0]), float(spec.center[1])
    tries = 0
    while len(out) < count and tries < 200 * count:
        x = rng.uniform(half, width - half)
        y = rng.uniform(half, height - half)
        tries += 1
        if (x - cx) ** 2 + (y - cy) ** 2 >= min_offset ** 2:
            out.append((x, y))
    return out


def _corrupted_patch_hist(gray: np.ndarray, spec: PatchSpec, rng) -> np.ndarray:
    """LBP histogram of the probe patch with a speckled occluder blended in.

    The occluder center always lands on the patch so coverage is material,
    and the blend factor spans full paste-overs down to the partial
    transparency that soft symmetry gives a mirrored occluder. The occluder
    carries speckle rather than a constant fill: LBP codes are invariant to
    positive affine maps, so a constant square blended at any opacity below
    one leaves the underlying codes untouched and is undetectable by design;
    speckle survives the blend and is what the detector can actually learn.
    Codes are computed on a local crop with one pixel of margin, which
    matches the full-image codes over the patch window exactly (radius-1
    LBP).
    """
    from .descriptors import (LBP_BINS, block_histogram, clamped_patch_rect,
                              lbp_image as _lbp)
    from .imagecore import make_image

    h, w = gray.shape
    x0, y0, _ = clamped_patch_rect(spec, w, h)
    cx0, cy0 = max(0, x0 - 1), max(0, y0 - 1)
    crop = gray[cy0: y0 + spec.side + 1, cx0: x0 + spec.side + 1].copy()
    side = int(rng.integers(24, 57))
    val = float(rng.uniform(0.0, 0.18))
    blend = float(rng.uniform(0.25, 1.0))
    ox = int(round(rng.uniform(x0 + 4, x0 + spec.side - 4) - side / 2)) - cx0
    oy = int(round(rng.uniform(y0 + 4, y0 + spec.side - 4) - side / 2)) - cy0
    xa, ya = max(0, ox), max(0, oy)
    xb = min(crop.shape[1], ox + side)
    yb = min(crop.shape[0], oy + side)
    if xb > xa and yb > ya:
        speck = rng.uniform(-0.05, 0.05, size=(yb - ya, xb - xa))
        occ = np.clip(val + speck, 0.0, 1.0)
        crop[ya:yb, xa:xb] = (1.0 - blend) * crop[ya:yb, xa:xb] + blend * occ
    codes = _lbp(make_image(crop))
    window = codes[y0 - cy0: y0 - cy0 + spec.side, x0 - cx0: x0 - cx0 + spec.side]
    return block_histogram(window, 1, 1, LBP_BINS, "LBP").values


def train_symmetry_detectors(images: list, locations: dict,
                             cfg: DescriptorConfig = DEFAULT_CONFIG,
                             C: float = 100.0, seed: int = 0,
                             rand_negs_per_image: int = 2,
                             corrupt_negs_per_image: int = 5,
                             min_offset: float = 32.0) -> SymmetryDetectorSet:
    """One linear SVM per probe location.

    Positives: the location's patch descriptor across all images.
    Negatives: the other seven locations' patches, random patches at
    least `min_offset` pixels away, and occluder-corrupted copies of the
    location's own patch. The corrupted copies anchor the boundary
    against flat occlusions, which is the failure mode the selection
    step must catch when soft symmetry replicates an occluder.
    """
    if len(images) < MIN_TRAINING_IMAGES:
        raise TooFewTrainingImagesError(
            f"need at least {MIN_TRAINING_IMAGES} training images, "
            f"got {len(images)}")
    if set(locations) != set(PROBE_NAMES):
        raise DetectorCountError("locations must cover the eight probe names")

    # descriptors once per (image, location) plus per-image negatives
    per_loc = {name: [] for name in PROBE_NAMES}
    rand_desc = {name: [] for name in PROBE_NAMES}
    corr_desc = {name: [] for name in PROBE_NAMES}
    for i, img in enumerate(images):
        gray = to_grayscale(img)
        codes = lbp_image(gray)
        gray2d = gray.data[:, :, 0]
        for name in PROBE_NAMES:
            d = extract_patch_descriptor(img, locations[name], codes=codes)
            per_loc[name].append(d.values)
        rng = np.random.default_rng([seed, i])
        rng_corr = np.random.default_rng([seed + 13, i])
        for name in PROBE_NAMES:
            side = locations[name].side
            for x, y in _random_negative_centers(rng, locations[name],
                                                 img.width, img.height,
                                                 rand_negs_per_image, min_offset):
                d = extract_patch_descriptor(img, PatchSpec((x, y), side),
                                             codes=codes)
                rand_desc[name].append(d.values)
            for _ in range(corrupt_negs_per_image):
                corr_desc[name].append(
                    _corrupted_patch_hist(gray2d, locations[name], rng_corr))

    models = {}
    for k, name in enumerate(PROBE_NAMES):
        pos = np.stack(per_loc[name])
        neg_rows = [np.stack(per_loc[o]) for o in PROBE_NAMES if o != name]
        if rand_desc[name]:
            neg_rows.append(np.stack(rand_desc[name]))
        if corr_desc[name]:
            neg_rows.append(np.stack(corr_desc[name]))
        neg = np.vstack(neg_rows)
        X = np.vstack([pos, neg])
        y = np.concatenate([np.ones(pos.shape[0]), -np.ones(neg.shape[0])])
        models[name] = svm_train(X, y, C=C, class_weight="balanced",
                                 seed=seed * 1000 + k)
    return SymmetryDetectorSet(PROBE_NAMES, dict(locations), models,
                               cfg.config_hash())


# --- model serialization ----------------------------------------------------------

def model_to_bytes(model: LinearModel) -> bytes:
    meta = json.dumps(model.trained_on, sort_keys=True).encode("utf-8")
    return (MODEL_MAGIC
            + struct.pack("<II", FORMAT_VERSION, model.feature_dim)
            + struct.pack("<d", model.bias)
            + np.ascontiguousarray(model.weights, dtype="<f8").tobytes()
            + struct.pack("<I", len(meta)) + meta)


def model_from_bytes(buf: bytes, offset: int = 0,
                     exact: bool = True) -> tuple[LinearModel, int]:
    end = len(buf)
    if end - offset < 4 + 8 + 8:
        raise TruncatedFileError("model header cut short")
    if buf[offset: offset + 4] != MODEL_MAGIC:
        raise VersionMismatchError("not a model file (bad magic)")
    version, dim = struct.unpack_from("<II", buf, offset + 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported model version {version}")
    pos = offset + 12
    if end - pos < 8 + 8 * dim + 4:
        raise TruncatedFileError("model payload cut short")
    bias = struct.unpack_from("<d", buf, pos)[0]
    pos += 8
    weights = np.frombuffer(buf, dtype="<f8", count=dim, offset=pos).copy()
    pos += 8 * dim
    meta_len = struct.unpack_from("<I", buf, pos)[0]
    pos += 4
    if end - pos < meta_len:
        raise TruncatedFileError("model metadata cut short")
    try:
        meta = json.loads(buf[pos: pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptDataError(f"bad model metadata: {exc}") from exc
    pos += meta_len
    if exact and pos != end:
        raise CorruptDataError("trailing bytes after model payload")
    if not np.all(np.isfinite(weights)) or not np.isfinite(bias):
        raise CorruptDataError("model weights must be finite")
    weights.flags.writeable = False
    return LinearModel(weights, float(bias), int(dim), meta), pos


def save_model(model: LinearModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> LinearModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    model, _ = model_from_bytes(buf)
    return model


def save_detector_set(dset: SymmetryDetectorSet, path) -> None:
    parts = [DETECTOR_MAGIC, struct.pack("<I", FORMAT_VERSION)]
    ch = dset.config_hash.encode("ascii")
    parts.append(struct.pack("<H", len(ch)) + ch)
    parts.append(struct.pack("<I", len(dset.names)))
    for name in dset.names:
        nb = name.encode("utf-8")
        spec = dset.specs[name]
        blob = model_to_bytes(dset.models[name])
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<ddI", float(spec.center[0]),
                                 float(spec.center[1]), int(spec.side)))
        parts.append(struct.pack("<I", len(blob)) + blob)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_detector_set(path, cfg: DescriptorConfig = DEFAULT_CONFIG) -> SymmetryDetectorSet:
    with open(path, "rb") as fh:
        buf = fh.read()
    end = len(buf)
    if end < 10:
        raise TruncatedFileError("detector set header cut short")
    if buf[:4] != DETECTOR_MAGIC:
        raise VersionMismatchError("not a detector set file (bad magic)")
    version = struct.unpack_from("<I", buf, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported detector set version {version}")
    pos = 8
    hlen = struct.unpack_from("<H", buf, pos)[0]
    pos += 2
    stored_hash = buf[pos: pos + hlen].decode("ascii")
    pos += hlen
    if stored_hash != cfg.config_hash():
        raise VersionMismatchError(
            "detector set was trained under a different descriptor config")
    count = struct.unpack_from("<I", buf, pos)[0]
    pos += 4
    if count != len(PROBE_NAMES):
        raise DetectorCountError(f"expected {len(PROBE_NAMES)} detectors, "
                                 f"file holds {count}")
    names = []
    specs = {}
    models = {}
    for _ in range(count):
        if end - pos < 2:
            raise TruncatedFileError("detector entry cut short")
        nlen = struct.unpack_from("<H", buf, pos)[0]
        pos += 2
        name = buf[pos: pos + nlen].decode("utf-8")
        pos += nlen
        if end - pos < 24:
            raise TruncatedFileError("detector entry cut short")
        cx, cy, side = struct.unpack_from("<ddI", buf, pos)
        pos += 20
        blen = struct.unpack_from("<I", buf, pos)[0]
        pos += 4
        if end - pos < blen:
            raise TruncatedFileError("detector model cut short")
        model, _ = model_from_bytes(buf[pos: pos + blen])
        pos += blen
        names.append(name)
        specs[name] = PatchSpec((cx, cy), int(side))
        models[name] = model
    if pos != end:
        raise CorruptDataError("trailing bytes after detector set payload")
    if set(names) != set(PROBE_NAMES):
        raise DetectorCountError("detector set does not cover the probe names")
    return SymmetryDetectorSet(tuple(names), specs, models, stored_hash)
