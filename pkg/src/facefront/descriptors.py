"""Local texture descriptors: LBP, TPLBP, FPLBP.

Code images use a fixed convention throughout:

* Ring neighbor k sits at angle 2*pi*k/S, x right, y down, so k=0 is the
  right neighbor and indices advance clockwise on screen.
* A bit is set when the compared quantity is >= the reference (ties set
  for LBP; TPLBP/FPLBP set a bit when the patch-distance difference is
  >= alpha).
* Radius 1 uses the eight integer ring neighbors (the classic 3x3 LBP),
  which keeps codes exactly invariant under monotone intensity maps.
  Other radii sample the circle with bilinear interpolation.
* LBP and TPLBP codes pass through the uniform-pattern map (58 uniform
  bins + 1 "other"); FPLBP emits 4-bit codes (16 bins) plus a border bin.
  Border pixels whose sampling geometry exits the image always land in
  the last bin.

Patch distances are summed over window offsets in row-major order; the
test-suite oracles accumulate in the same order so code equality is exact.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CorruptDataError,
    DoubleTransformError,
    TruncatedFileError,
    UnsupportedFormatError,
)
from .imagecore import Image, to_grayscale

LBP_BINS = 59          # 58 uniform 8-bit patterns + other
FPLBP_BINS = 17        # 16 four-bit codes + border

VARIANTS = ("LBP", "TPLBP", "FPLBP")
_VARIANT_ID = {v: i for i, v in enumerate(VARIANTS)}


def _make_uniform_lut() -> np.ndarray:
    """Map 8-bit codes to uniform-pattern bins (non-uniform -> 58)."""
    lut = np.full(256, 58, dtype=np.uint8)
    nxt = 0
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        trans = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if trans <= 2:
            lut[code] = nxt
            nxt += 1
    assert nxt == 58
    return lut


UNIFORM_LUT = _make_uniform_lut()
UNIFORM_LUT.flags.writeable = False


@dataclass(frozen=True)
class DescriptorConfig:
    """All descriptor parameters, hashed into model files."""

    lbp_radius: float = 1.0
    blocks_x: int = 7
    blocks_y: int = 7
    tplbp_s: int = 8
    tplbp_patch: int = 3
    tplbp_radius: float = 2.0
    tplbp_alpha: float = 0.01
    tplbp_skip: int = 2
    fplbp_s: int = 8
    fplbp_patch: int = 3
    fplbp_r1: float = 4.0
    fplbp_r2: float = 5.0
    fplbp_alpha: float = 0.01
    fplbp_shift: int = 1
    patch_side: int = 24

    def config_hash(self) -> str:
        text = ";".join(f"{k}={getattr(self, k)!r}"
                        for k in sorted(self.__dataclass_fields__))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


DEFAULT_CONFIG = DescriptorConfig()


@dataclass(frozen=True)
class Descriptor:
    values: np.ndarray     # (blocks_x*blocks_y*bins,) float64, read-only
    variant: str
    blocks_x: int
    blocks_y: int
    bins: int
    sqrt_applied: bool = False


def make_descriptor(values: np.ndarray, variant: str, blocks_x: int,
                    blocks_y: int, bins: int,
                    sqrt_applied: bool = False) -> Descriptor:
    if variant not in VARIANTS:
        raise ValueError(f"unknown descriptor variant {variant!r}")
    vals = np.ascontiguousarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.shape[0] != blocks_x * blocks_y * bins:
        raise ValueError("descriptor length does not match its layout")
    if not np.all(np.isfinite(vals)) or vals.min() < 0.0:
        raise ValueError("descriptor values must be finite and non-negative")
    vals.flags.writeable = False
    return Descriptor(vals, variant, blocks_x, blocks_y, bins, sqrt_applied)


@dataclass(frozen=True)
class PatchSpec:
    """side x side probe patch centered at `center` (reference coords)."""

    center: tuple
    side: int


# --- code images --------------------------------------------------------------

def _require_gray(img: Image) -> np.ndarray:
    if img.channels != 1:
        raise UnsupportedFormatError("descriptor input must be single-channel")
    return img.plane()


def _shifted(plane: np.ndarray, dx: int, dy: int, m: int) -> np.ndarray:
    """Interior view displaced by (dx, dy); |dx|,|dy| <= m."""
    h, w = plane.shape
    return plane[m + dy: h - m + dy, m + dx: w - m + dx]


def _ring_sample(plane: np.ndarray, ox: float, oy: float, m: int) -> np.ndarray:
    """Bilinear sample of the interior grid displaced by the float (ox, oy)."""
    x0 = int(np.floor(ox))
    y0 = int(np.floor(oy))
    fx = ox - x0
    fy = oy - y0
    # collapse near-integer offsets so the support never exceeds the margin
    if fx < 1e-12:
        fx = 0.0
    if fy < 1e-12:
        fy = 0.0
    out = (1.0 - fx) * (1.0 - fy) * _shifted(plane, x0, y0, m)
    if fx > 0.0:
        out = out + fx * (1.0 - fy) * _shifted(plane, x0 + 1, y0, m)
    if fy > 0.0:
        out = out + (1.0 - fx) * fy * _shifted(plane, x0, y0 + 1, m)
    if fx > 0.0 and fy > 0.0:
        out = out + fx * fy * _shifted(plane, x0 + 1, y0 + 1, m)
    return out


# classic 3x3 ring in angle order (k=0 right, clockwise with y down)
_SQUARE_RING = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


def lbp_image(gray: Image, radius: float = 1.0, neighbors: int = 8) -> np.ndarray:
    """Uniform-LBP bin image (values in [0, 59); border pixels -> 58)."""
    if neighbors != 8:
        raise ValueError("uniform-59 LBP is defined for 8 neighbors")
    plane = _require_gray(gray)
    h, w = plane.shape
    m = 1 if radius == 1.0 else int(np.ceil(radius))
    codes = np.full((h, w), 58, dtype=np.uint8)
    if h <= 2 * m or w <= 2 * m:
        return codes
    center = plane[m: h - m, m: w - m]
    raw = np.zeros(center.shape, dtype=np.uint16)
    for k in range(8):
        if radius == 1.0:
            dx, dy = _SQUARE_RING[k]
            sample = _shifted(plane, dx, dy, m)
        else:
            ang = 2.0 * np.pi * k / 8.0
            sample = _ring_sample(plane, radius * np.cos(ang),
                                  radius * np.sin(ang), m)
        raw |= (sample >= center).astype(np.uint16) << k
    codes[m: h - m, m: w - m] = UNIFORM_LUT[raw]
    return codes


def _ring_offsets(s: int, radius: float) -> list[tuple[int, int]]:
    """Integer-rounded patch-center offsets on a ring."""
    out = []
    for i in range(s):
        ang = 2.0 * np.pi * i / s
        out.append((int(np.rint(radius * np.cos(ang))),
                    int(np.rint(radius * np.sin(ang)))))
    return out


def _patch_ssd(plane: np.ndarray, da: tuple, db: tuple, patch: int,
               m: int) -> np.ndarray:
    """Per-pixel SSD between patches displaced by da and db.

    Terms accumulate over window offsets in row-major order so results are
    bit-reproducible against a like-ordered scalar reference.
    """
    half = patch // 2
    out = None
    for qy in range(-half, half + 1):
        for qx in range(-half, half + 1):
            d = (_shifted(plane, da[0] + qx, da[1] + qy, m)
                 - _shifted(plane, db[0] + qx, db[1] + qy, m))
            term = d * d
            out = term if out is None else out + term
    return out


def tplbp_image(gray: Image, s_patches: int = 8, patch_size: int = 3,
                radius: float = 2.0, alpha: float = 0.01,
                skip: int = 2) -> np.ndarray:
    """Three-Patch LBP bin image (uniform-59 map; border pixels -> 58).

    Bit i is set when ssd(C_i, C_p) - ssd(C_{i+skip}, C_p) >= alpha, with
    ring patch centers rounded to integer offsets.
    """
    if s_patches != 8:
        raise ValueError("uniform-59 TPLBP is defined for 8 ring patches")
    plane = _require_gray(gray)
    h, w = plane.shape
    half = patch_size // 2
    m = int(np.ceil(radius)) + half
    codes = np.full((h, w), 58, dtype=np.uint8)
    if h <= 2 * m or w <= 2 * m:
        return codes
    ring = _ring_offsets(s_patches, radius)
    dists = [_patch_ssd(plane, off, (0, 0), patch_size, m) for off in ring]
    raw = np.zeros(dists[0].shape, dtype=np.uint16)
    for i in range(s_patches):
        diff = dists[i] - dists[(i + skip) % s_patches]
        raw |= (diff >= alpha).astype(np.uint16) << i
    codes[m: h - m, m: w - m] = UNIFORM_LUT[raw]
    return codes


def fplbp_image(gray: Image, s_patches: int = 8, patch_size: int = 3,
                r1: float = 4.0, r2: float = 5.0, alpha: float = 0.01,
                shift: int = 1) -> np.ndarray:
    """Four-Patch LBP code image (s/2-bit codes; border pixels -> 16).

    Bit i compares ssd(inner_i, outer_{i+shift}) against the
    center-symmetric pair ssd(inner_{i+s/2}, outer_{i+s/2+shift}).
    """
    if s_patches != 8:
        raise ValueError("FPLBP here is defined for 8 patches per ring")
    plane = _require_gray(gray)
    h, w = plane.shape
    half = patch_size // 2
    m = int(np.ceil(max(r1, r2))) + half
    codes = np.full((h, w), FPLBP_BINS - 1, dtype=np.uint8)
    if h <= 2 * m or w <= 2 * m:
        return codes
    inner = _ring_offsets(s_patches, r1)
    outer = _ring_offsets(s_patches, r2)
    raw = None
    s2 = s_patches // 2
    for i in range(s2):
        d_a = _patch_ssd(plane, inner[i], outer[(i + shift) % s_patches],
                         patch_size, m)
        d_b = _patch_ssd(plane, inner[i + s2],
                         outer[(i + s2 + shift) % s_patches], patch_size, m)
        bit = ((d_a - d_b) >= alpha).astype(np.uint8) << i
        raw = bit if raw is None else raw | bit
    codes[m: h - m, m: w - m] = raw
    return codes


# --- aggregation ---------------------------------------------------------------

def block_histogram(codes: np.ndarray, blocks_x: int, blocks_y: int,
                    bins: int, variant: str = "LBP") -> Descriptor:
    """Per-block L1-normalized code histograms, blocks row-major."""
    if codes.ndim != 2:
        raise ValueError("code image must be 2-D")
    h, w = codes.shape
    if codes.max(initial=0) >= bins:
        raise ValueError("code value exceeds the histogram bin count")
    xe = [(j * w) // blocks_x for j in range(blocks_x + 1)]
    ye = [(j * h) // blocks_y for j in range(blocks_y + 1)]
    if any(xe[j] == xe[j + 1] for j in range(blocks_x)) or \
       any(ye[j] == ye[j + 1] for j in range(blocks_y)):
        raise ValueError("block grid produces zero-sized blocks")
    out = np.zeros(blocks_x * blocks_y * bins, dtype=np.float64)
    for by in range(blocks_y):
        for bx in range(blocks_x):
            block = codes[ye[by]: ye[by + 1], xe[bx]: xe[bx + 1]]
            hist = np.bincount(block.ravel(), minlength=bins).astype(np.float64)
            total = hist.sum()
            if total > 0:
                hist /= total
            base = (by * blocks_x + bx) * bins
            out[base: base + bins] = hist
    return make_descriptor(out, variant, blocks_x, blocks_y, bins)


def hellinger(d: Descriptor) -> Descriptor:
    """Element-wise square root; refuses a second application."""
    if d.sqrt_applied:
        raise DoubleTransformError("Hellinger transform applied twice")
    vals = np.sqrt(d.values)
    vals.flags.writeable = False
    return replace(d, values=vals, sqrt_applied=True)


def compute_descriptor(img: Image, variant: str,
                       cfg: DescriptorConfig = DEFAULT_CONFIG) -> Descriptor:
    """Full-image descriptor for one variant under a config."""
    gray = to_grayscale(img)
    if variant == "LBP":
        codes = lbp_image(gray, cfg.lbp_radius)
        bins = LBP_BINS
    elif variant == "TPLBP":
        codes = tplbp_image(gray, cfg.tplbp_s, cfg.tplbp_patch,
                            cfg.tplbp_radius, cfg.tplbp_alpha, cfg.tplbp_skip)
        bins = LBP_BINS
    elif variant == "FPLBP":
        codes = fplbp_image(gray, cfg.fplbp_s, cfg.fplbp_patch, cfg.fplbp_r1,
                            cfg.fplbp_r2, cfg.fplbp_alpha, cfg.fplbp_shift)
        bins = FPLBP_BINS
    else:
        raise ValueError(f"unknown descriptor variant {variant!r}")
    return block_histogram(codes, cfg.blocks_x, cfg.blocks_y, bins, variant)


def hybrid_descriptors(img: Image,
                       cfg: DescriptorConfig = DEFAULT_CONFIG) -> dict:
    return {v: compute_descriptor(img, v, cfg) for v in VARIANTS}


# --- probe patches -------------------------------------------------------------

def clamped_patch_rect(spec: PatchSpec, width: int, height: int):
    """(x0, y0, clamped) for the patch window, shifted fully inside."""
    side = int(spec.side)
    if side < 3 or side > width or side > height:
        raise ValueError("patch side must fit inside the image")
    x0 = int(round(float(spec.center[0]))) - side // 2
    y0 = int(round(float(spec.center[1]))) - side // 2
    cx0 = min(max(x0, 0), width - side)
    cy0 = min(max(y0, 0), height - side)
    return cx0, cy0, (cx0 != x0 or cy0 != y0)


def extract_patch_descriptor(img: Image, spec: PatchSpec,
                             codes: np.ndarray | None = None) -> Descriptor:
    """Single-block uniform-LBP histogram of the clamped probe patch.

    Codes come from the full image so patches inside it carry no border
    band; pass a precomputed `codes` map when probing many patches.
    """
    if codes is None:
        codes = lbp_image(to_grayscale(img))
    h, w = codes.shape
    x0, y0, _ = clamped_patch_rect(spec, w, h)
    window = codes[y0: y0 + spec.side, x0: x0 + spec.side]
    return block_histogram(window, 1, 1, LBP_BINS, "LBP")


# --- serialization -------------------------------------------------------------

_HEADER = struct.Struct("<BBHHHIi")   # variant, sqrt, bx, by, bins, n, reserved


def descriptor_to_bytes(d: Descriptor) -> bytes:
    head = _HEADER.pack(_VARIANT_ID[d.variant], int(d.sqrt_applied),
                        d.blocks_x, d.blocks_y, d.bins, d.values.shape[0], 0)
    return head + np.ascontiguousarray(d.values, dtype="<f4").tobytes()


def descriptor_from_bytes(buf: bytes, offset: int = 0,
                          exact: bool = True) -> tuple[Descriptor, int]:
    """Parse one descriptor; returns (descriptor, next offset).

    With exact=True, trailing bytes after the descriptor are an error.
    """
    if len(buf) - offset < _HEADER.size:
        raise TruncatedFileError("descriptor header cut short")
    vid, sqrt_flag, bx, by, bins, n, _ = _HEADER.unpack_from(buf, offset)
    if vid >= len(VARIANTS):
        raise CorruptDataError(f"unknown descriptor variant id {vid}")
    pos = offset + _HEADER.size
    need = 4 * n
    if len(buf) - pos < need:
        raise TruncatedFileError("descriptor payload cut short")
    vals = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).astype(np.float64)
    pos += need
    if exact and pos != len(buf):
        raise CorruptDataError("trailing bytes after descriptor payload")
    d = make_descriptor(vals, VARIANTS[vid], bx, by, bins, bool(sqrt_flag))
    return d, pos


def save_descriptor(d: Descriptor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(descriptor_to_bytes(d))


def load_descriptor(path) -> Descriptor:
    with open(path, "rb") as fh:
        buf = fh.read()
    d, _ = descriptor_from_bytes(buf)
    return d
