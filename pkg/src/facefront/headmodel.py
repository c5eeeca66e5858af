"""Procedural parametric head: geometry, painted texture and 3D landmarks.

One neutral parameter set produces the fixed reference model. Seeded
parameter jitter produces distinct synthetic identities for training and
benchmark corpora. The surface is a heightfield shell, exactly symmetric
in the left-right parameter, which is the assumption the soft-symmetry
stage leans on.

Conventions: parameter u in [-1, 1] runs across the face with u > 0 on the
image-left side under the frontal reference camera (world +x projects to
image-left); v in [-1, 1] runs bottom to top. Texture uv = ((u+1)/2, (v+1)/2).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import SchemaError
from .imagecore import Image, make_image, save_image
from .landmarks import _schema_names
from .refbundle import Mesh3D, save_landmarks3d

SUPPORT_A = 0.95   # u half-axis of the head silhouette ellipse
SUPPORT_B = 1.06   # v half-axis
DOME_AMP = 0.55


@dataclass(frozen=True)
class HeadParams:
    """Everything that makes one synthetic head distinct."""

    seed: int = 0
    gender: str = "f"          # "m" or "f"
    face_width: float = 0.78
    eye_span: float = 1.0      # scales eye/brow horizontal placement
    eye_v: float = 0.18
    nose_len: float = 1.0
    nose_width: float = 1.0
    mouth_width: float = 0.22
    mouth_v: float = -0.48
    chin_amp: float = 1.0
    cheek_amp: float = 1.0
    skin_rgb: tuple = (0.72, 0.575, 0.49)
    iris_rgb: tuple = (0.30, 0.22, 0.12)
    brow_thick: float = 1.0
    lip_sat: float = 0.45
    beard_amp: float = 0.0
    freckle_density: float = 0.15
    pigment_amp: float = 0.12  # bilateral complexion field; pattern per texture_seed
    texture_seed: int = 1


def neutral_params() -> HeadParams:
    """The fixed reference head: clean skin, no beard, no freckles."""
    return HeadParams(freckle_density=0.0, lip_sat=0.35, pigment_amp=0.0,
                      texture_seed=7)


def sample_params(seed: int, gender: str | None = None,
                  jitter: float = 1.0) -> HeadParams:
    """Draw one identity. Gender shifts beard/brow/lip statistics with overlap.

    jitter scales every deviation from the range midpoint: 1.0 keeps the
    full identity spread, smaller values produce near-duplicates of the
    reference head whose identity lives mostly in texture detail.
    """
    rng = np.random.default_rng(seed)
    if gender is None:
        gender = "m" if rng.random() < 0.5 else "f"
    if gender not in ("m", "f"):
        raise SchemaError(f"gender must be 'm' or 'f', got {gender!r}")
    if not 0.0 <= jitter <= 1.0:
        raise SchemaError(f"jitter must lie in [0, 1], got {jitter}")

    def draw(lo, hi):
        mid = (lo + hi) / 2.0
        return mid + jitter * (rng.uniform(lo, hi) - mid)

    tone = draw(0.78, 1.08)
    base = np.array([0.72, 0.575, 0.49]) * tone \
        + jitter * rng.uniform(-0.025, 0.025, 3)
    iris_choices = [(0.30, 0.22, 0.12), (0.22, 0.32, 0.42), (0.24, 0.34, 0.22)]
    pick = np.array(iris_choices[rng.integers(0, 3)])
    # discrete eye color is identity spread too: fade it with the rest
    iris = iris_choices[0] + jitter * (pick - iris_choices[0]) \
        + jitter * rng.uniform(-0.03, 0.03, 3)

    if gender == "m":
        beard = draw(0.40, 0.95)
        brow = draw(1.15, 1.60)
        lip = draw(0.10, 0.40)
        freckle = draw(0.0, 0.12)
    else:
        beard = draw(0.0, 0.10)
        brow = draw(0.65, 1.10)
        lip = draw(0.40, 0.85)
        freckle = draw(0.05, 0.30)

    return HeadParams(
        seed=seed,
        gender=gender,
        face_width=draw(0.73, 0.82),
        eye_span=draw(0.90, 1.10),
        eye_v=draw(0.15, 0.21),
        nose_len=draw(0.88, 1.15),
        nose_width=draw(0.85, 1.20),
        mouth_width=draw(0.195, 0.250),
        mouth_v=draw(-0.51, -0.45),
        chin_amp=draw(0.80, 1.20),
        cheek_amp=draw(0.70, 1.30),
        skin_rgb=tuple(np.clip(base, 0.15, 0.95)),
        iris_rgb=tuple(np.clip(iris, 0.03, 0.9)),
        brow_thick=brow,
        lip_sat=lip,
        beard_amp=beard,
        freckle_density=freckle,
        texture_seed=int(rng.integers(1, 2**31 - 1)),
    )


def _features(p: HeadParams) -> list[tuple[float, float, float, float, float]]:
    """Gaussian relief bumps as (cu, cv, su, sv, amp); pairs keep symmetry."""
    ue = 0.30 * p.eye_span
    ve = p.eye_v
    vt = ve - 0.42 * p.nose_len      # nose tip v
    vm = p.mouth_v
    ridge_top = ve - 0.08
    feats = [
        (0.0, (ridge_top + vt) / 2.0, 0.065 * p.nose_width,
         max(ridge_top - vt, 0.05) / 2.6, 0.17),
        (0.0, vt + 0.02, 0.09 * p.nose_width, 0.065, 0.11),
        (ue * 0.97, ve + 0.16, 0.15, 0.055, 0.05),
        (-ue * 0.97, ve + 0.16, 0.15, 0.055, 0.05),
        (ue, ve + 0.01, 0.115, 0.075, -0.055),
        (-ue, ve + 0.01, 0.115, 0.075, -0.055),
        (ue + 0.13, vt - 0.12, 0.16, 0.13, 0.065 * p.cheek_amp),
        (-(ue + 0.13), vt - 0.12, 0.16, 0.13, 0.065 * p.cheek_amp),
        (0.0, vm, 0.19, 0.07, 0.05),
        (0.0, vm - 0.30, 0.15, 0.10, 0.075 * p.chin_amp),
    ]
    return feats


def support(u, v):
    """Squared elliptical radius of the head silhouette; inside means < 1."""
    return (np.asarray(u) / SUPPORT_A) ** 2 + (np.asarray(v) / SUPPORT_B) ** 2


def elevation(u, v, p: HeadParams) -> np.ndarray:
    """Surface height toward the camera (z = -elevation)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    r2 = support(u, v)
    e = DOME_AMP * np.sqrt(np.clip(1.0 - r2, 0.0, None))
    for cu, cv, su, sv, amp in _features(p):
        e = e + amp * np.exp(-0.5 * (((u - cu) / su) ** 2 + ((v - cv) / sv) ** 2))
    return e


def anchor_points(p: HeadParams) -> dict[str, tuple[float, float]]:
    """(u, v) anchors for all 48 sdm48 landmarks; drives geometry and paint."""
    ue = 0.30 * p.eye_span
    he = 0.13 * p.eye_span
    ve = p.eye_v
    bv = ve + 0.135
    vt = ve - 0.42 * p.nose_len
    vm = p.mouth_v
    mw = p.mouth_width
    nw = p.nose_width

    a: dict[str, tuple[float, float]] = {}
    for i in range(5):
        t = (i - 2) / 2.0
        arch = bv + 0.055 * (1.0 - t * t)
        a[f"brow_l_{i}"] = ((0.50 - 0.10 * i) * p.eye_span, arch)
        a[f"brow_r_{i}"] = (-(0.50 - 0.10 * i) * p.eye_span, arch)

    for side, sgn in (("l", 1.0), ("r", -1.0)):
        a[f"eye_{side}_outer"] = (sgn * (ue + he), ve)
        a[f"eye_{side}_inner"] = (sgn * (ue - he), ve)
        a[f"eye_{side}_top_0"] = (sgn * (ue + 0.45 * he), ve + 0.055)
        a[f"eye_{side}_top_1"] = (sgn * (ue - 0.45 * he), ve + 0.055)
        a[f"eye_{side}_bot_0"] = (sgn * (ue + 0.45 * he), ve - 0.050)
        a[f"eye_{side}_bot_1"] = (sgn * (ue - 0.45 * he), ve - 0.050)

    for i, rv in enumerate(np.linspace(ve - 0.06, vt + 0.10, 3)):
        a[f"nose_ridge_{i}"] = (0.0, float(rv))
    a["nose_tip"] = (0.0, vt)
    a["nose_wing_l"] = (0.105 * nw, vt - 0.035)
    a["nose_wing_r"] = (-0.105 * nw, vt - 0.035)
    a["nose_base_l"] = (0.048 * nw, vt - 0.060)
    a["nose_base_r"] = (-0.048 * nw, vt - 0.060)

    a["mouth_corner_l"] = (mw, vm)
    a["mouth_corner_r"] = (-mw, vm)
    top_u = np.linspace(0.67 * mw, -0.67 * mw, 5)
    for i, tu in enumerate(top_u):
        a[f"mouth_top_{i}"] = (float(tu), vm + 0.038 + (0.006 if i == 2 else 0.0))
        a[f"mouth_bot_{i}"] = (float(tu), vm - 0.047)
    for i, tu in enumerate((0.30 * mw, 0.0, -0.30 * mw)):
        a[f"mouth_inner_top_{i}"] = (float(tu), vm + 0.014)
        a[f"mouth_inner_bot_{i}"] = (float(tu), vm - 0.016)
    return a


def head_landmarks3d(p: HeadParams) -> dict[str, np.ndarray]:
    anchors = anchor_points(p)
    out = {}
    for name in _schema_names("sdm48"):
        u, v = anchors[name]
        z = -float(elevation(u, v, p))
        out[name] = np.array([p.face_width * u, v, z])
    return out


def build_head_mesh(p: HeadParams, grid: int = 97) -> Mesh3D:
    """Heightfield shell over the silhouette ellipse, symmetric u sampling."""
    if grid < 9 or grid % 2 == 0:
        raise SchemaError("grid must be an odd integer >= 9")
    half = np.linspace(0.0, 1.0, grid // 2 + 1)[1:]
    us = np.concatenate([-half[::-1], [0.0], half])
    vs = np.linspace(-1.0, 1.0, grid)

    uu, vv = np.meshgrid(us, vs, indexing="xy")
    keep = support(uu, vv) < 1.0
    e = elevation(uu, vv, p)

    index = -np.ones((grid, grid), dtype=np.int64)
    order = np.nonzero(keep)
    index[order] = np.arange(order[0].size)
    verts = np.stack([p.face_width * uu[keep], vv[keep], -e[keep]], axis=1)
    uvs = np.stack([(uu[keep] + 1.0) / 2.0, (vv[keep] + 1.0) / 2.0], axis=1)

    tris = []
    for j in range(grid - 1):
        for i in range(grid - 1):
            q = (index[j, i], index[j, i + 1], index[j + 1, i + 1], index[j + 1, i])
            if min(q) < 0:
                continue
            tris.append((q[0], q[1], q[2]))
            tris.append((q[0], q[2], q[3]))
    return Mesh3D(verts, uvs, np.array(tris, dtype=np.int64))


def make_head(p: HeadParams, grid: int = 97, tex_size: int = 384):
    """One-stop constructor: textured Mesh3D plus its 48 3D landmarks."""
    mesh = replace(build_head_mesh(p, grid), texture=paint_head_texture(p, tex_size))
    return mesh, head_landmarks3d(p)


def _smooth_noise(rng: np.random.Generator, size: int, passes: int = 2) -> np.ndarray:
    n = rng.standard_normal((size, size))
    for _ in range(passes):
        acc = n.copy()
        acc[1:] += n[:-1]
        acc[:-1] += n[1:]
        acc[:, 1:] += n[:, :-1]
        acc[:, :-1] += n[:, 1:]
        n = acc / 5.0
    return n


def _dist2_to_polyline(uu, vv, pts) -> np.ndarray:
    d2 = np.full(uu.shape, np.inf)
    for cu, cv in pts:
        d2 = np.minimum(d2, (uu - cu) ** 2 + (vv - cv) ** 2)
    return d2


# fixed spectra for the stochastic skin layers: every head shares these
# frequencies/amplitudes, individual heads differ only in phase draws
_MOTTLE_BANDS = (
    (3.4, 9.2, 0.012), (6.1, 4.4, 0.010), (8.8, 7.3, 0.009),
    (10.6, 3.1, 0.008), (4.9, 10.9, 0.011),
)
def _box_blur(a: np.ndarray, k: int) -> np.ndarray:
    """Separable box filter with edge padding, window 2k+1."""
    if k < 1:
        return a
    win = 2 * k + 1
    pad = np.pad(a, k, mode="edge")
    c = np.cumsum(pad, axis=0)
    c = np.vstack([np.zeros((1, c.shape[1])), c])
    a = (c[win:] - c[:-win]) / win
    c = np.cumsum(a, axis=1)
    c = np.hstack([np.zeros((c.shape[0], 1)), c])
    return (c[:, win:] - c[:, :-win]) / win


def _pigment_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Bilateral bandpass-noise blotch pattern, unit variance.

    Band-limited so every head shares the same spectrum; identity is the
    2D phase layout alone, which no spatially pooled statistic preserves.
    """
    g = rng.normal(0.0, 1.0, (size, size))
    band = _box_blur(g, size // 32) - _box_blur(g, size // 13)
    band = (band + band[:, ::-1]) * 0.5        # even in u: bilateral trait
    return band / max(float(band.std()), 1e-12)


def paint_head_texture(p: HeadParams, size: int = 384) -> Image:
    """Paint the uv texture: skin, brows, eyes, nostrils, lips, beard, freckles."""
    rng = np.random.default_rng(p.texture_seed)
    ax = np.linspace(-1.0, 1.0, size)
    uu, vv = np.meshgrid(ax, ax[::-1], indexing="xy")  # row 0 is v = +1 (top)

    anchors = anchor_points(p)
    skin = np.array(p.skin_rgb)
    img = skin[None, None, :] * (0.97 + 0.05 * vv)[..., None]

    mottle = np.zeros((size, size))
    for fx, fy, amp in _MOTTLE_BANDS:
        ph = rng.uniform(0.0, 2 * np.pi)
        mottle += amp * np.sin(fx * uu + fy * vv + ph)
    img = img * (1.0 + mottle)[..., None]

    if p.pigment_amp > 0:
        # bilateral complexion field. The spectrum is shared by every head;
        # identity lives purely in the blotch layout, so global code
        # statistics carry nothing and only spatial alignment can match it.
        field = _pigment_field(rng, size)
        img = img * (1.0 + p.pigment_amp * np.tanh(field))[..., None]

    # soft blush on the cheeks
    for sgn in (1.0, -1.0):
        cu, cv = sgn * 0.43 * p.eye_span, p.eye_v - 0.42 * p.nose_len - 0.10
        g = np.exp(-0.5 * (((uu - cu) / 0.14) ** 2 + ((vv - cv) / 0.11) ** 2))
        img[..., 0] += 0.035 * g
        img[..., 1] -= 0.010 * g

    if p.freckle_density > 0:
        n_dots = int(round(140 * p.freckle_density))
        dots = np.zeros((size, size))
        for _ in range(n_dots):
            cu = rng.uniform(-0.6, 0.6)
            cv = rng.uniform(-0.45, 0.25)
            r = rng.uniform(0.007, 0.014)
            dots += np.exp(-0.5 * (((uu - cu) ** 2 + (vv - cv) ** 2) / r**2))
        img = img * (1.0 - 0.30 * np.clip(dots, 0.0, 1.0))[..., None]

    if p.beard_amp > 0:
        vm = p.mouth_v
        zone = 1.0 / (1.0 + np.exp(-((vm + 0.12) - vv) * 14.0))
        zone *= np.clip(1.3 - support(uu, vv), 0.0, 1.0)
        speck = 0.75 + 0.5 * np.clip(_smooth_noise(rng, size), -1.0, 1.0)
        img = img * (1.0 - 0.33 * p.beard_amp * zone * speck)[..., None]

    brow_rgb = np.array([0.16, 0.11, 0.07])
    for side in ("l", "r"):
        pts = [anchors[f"brow_{side}_{i}"] for i in range(5)]
        fine = []
        for (u0, v0), (u1, v1) in zip(pts[:-1], pts[1:]):
            for t in np.linspace(0.0, 1.0, 8, endpoint=False):
                fine.append((u0 + t * (u1 - u0), v0 + t * (v1 - v0)))
        fine.append(pts[-1])
        d2 = _dist2_to_polyline(uu, vv, fine)
        sigma = 0.016 * p.brow_thick
        w = np.exp(-0.5 * d2 / sigma**2) * 0.9
        img = img * (1 - w[..., None]) + brow_rgb[None, None, :] * w[..., None]

    iris = np.array(p.iris_rgb)
    sclera = np.array([0.93, 0.92, 0.90])
    he = 0.13 * p.eye_span
    for side in ("l", "r"):
        co = np.array(anchors[f"eye_{side}_outer"])
        ci = np.array(anchors[f"eye_{side}_inner"])
        cx, cy = (co + ci) / 2.0
        rho = ((uu - cx) / (he * 0.98)) ** 2 + ((vv - cy) / (he * 0.40)) ** 2
        eye = rho <= 1.0
        img[eye] = sclera
        rr = np.sqrt((uu - cx) ** 2 + (vv - cy) ** 2)
        ir = eye & (rr <= he * 0.36)
        shade = np.clip(1.0 - rr / (he * 0.36), 0.0, 1.0)
        img[ir] = iris[None, :] * (0.7 + 0.5 * shade[ir, None])
        img[eye & (rr <= he * 0.14)] = 0.05
        lash = (rho > 0.72) & (rho <= 1.35) & (vv > cy)
        img[lash] = img[lash] * 0.35

    vt = p.eye_v - 0.42 * p.nose_len
    for name in ("nose_wing_l", "nose_wing_r"):
        cu, cv = anchors[name]
        cu *= 0.75  # nostrils sit inboard of the wing landmark
        hole = (((uu - cu) / 0.020) ** 2 + ((vv - (vt - 0.045)) / 0.013) ** 2) <= 1.0
        img[hole] = img[hole] * 0.25
    ridge = np.exp(-0.5 * ((uu / 0.10) ** 2 + ((vv - vt) / 0.05) ** 2))
    img = img * (1.0 + 0.06 * ridge[..., None])

    vm = p.mouth_v
    mw = p.mouth_width
    lip_rgb = np.array([0.62, 0.26, 0.27])
    upper = (((uu) / (mw * 1.02)) ** 2 + ((vv - (vm + 0.020)) / 0.034) ** 2) <= 1.0
    lower = (((uu) / (mw * 0.94)) ** 2 + ((vv - (vm - 0.026)) / 0.042) ** 2) <= 1.0
    lips = upper | lower
    w = p.lip_sat
    img[lips] = img[lips] * (1 - w) + lip_rgb[None, :] * w
    line = (np.abs(vv - vm) < 0.006) & (np.abs(uu) < mw * 0.98)
    img[line] = img[line] * 0.45

    rim = np.clip((support(uu, vv) - 0.80) / 0.20, 0.0, 1.0)
    img = img * (1.0 - 0.35 * rim)[..., None]

    return make_image(np.clip(img, 0.02, 0.98))


def write_reference_assets(out_dir, params: HeadParams | None = None,
                           grid: int = 97, tex_size: int = 384) -> dict[str, str]:
    """Export head.obj, head_texture.png and head_landmarks3d.json."""
    p = params if params is not None else neutral_params()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)

    mesh = build_head_mesh(p, grid)
    obj_path = os.path.join(out_dir, "head.obj")
    with open(obj_path, "w", encoding="utf-8") as fh:
        fh.write("# facefront reference head\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for u, v in mesh.uv:
            fh.write(f"vt {u:.17g} {v:.17g}\n")
        for a, b, c in mesh.faces + 1:
            fh.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")

    tex_path = os.path.join(out_dir, "head_texture.png")
    save_image(paint_head_texture(p, tex_size), tex_path)

    lm_path = os.path.join(out_dir, "head_landmarks3d.json")
    save_landmarks3d(head_landmarks3d(p), lm_path)
    return {"geometry": obj_path, "texture": tex_path, "landmarks3d": lm_path}


def with_gender_cue(p: HeadParams, strength: float) -> HeadParams:
    """Scaled-down copy of the gendered texture cues, for ablation corpora."""
    return replace(p, beard_amp=p.beard_amp * strength,
                   brow_thick=1.0 + (p.brow_thick - 1.0) * strength,
                   lip_sat=0.45 + (p.lip_sat - 0.45) * strength)
