"""Image buffers, color conversion, bilinear sampling and raster I/O.

Conventions used across the whole package:

* intensities are floats in [0, 1]; 8-bit quantization happens only at
  file boundaries,
* arrays are shaped (height, width, channels) row-major, channels is
  1 (gray) or 3 (RGB),
* pixel (i, j) has its center at continuous coordinates (x=i, y=j);
  bilinear sampling needs all four neighboring centers inside the image.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as _PILImage, UnidentifiedImageError

from .errors import CorruptDataError, MissingFileError, UnsupportedFormatError

# Rec.601 luma weights, fixed for the whole package.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class Image:
    """Immutable float image. Use :func:`make_image` to build one."""

    data: np.ndarray  # (h, w, c) float64 in [0, 1], read-only

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def plane(self) -> np.ndarray:
        """The (h, w) view of a single-channel image."""
        if self.channels != 1:
            raise ValueError("plane() requires a single-channel image")
        return self.data[:, :, 0]


def make_image(data: np.ndarray) -> Image:
    """Validate and freeze an array into an Image.

    Accepts (h, w) or (h, w, c) float arrays; values must be finite and
    inside [0, 1].
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (h, w) or (h, w, 1|3) array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image intensities must be finite")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return Image(arr)


def sample_bilinear(img: Image, p) -> np.ndarray | None:
    """Bilinear sample at continuous point p = (x, y).

    Returns the per-channel intensity, or None when any of the four
    neighboring pixel centers falls outside the image.
    """
    x, y = float(p[0]), float(p[1])
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    if x0 < 0 or y0 < 0 or x0 + 1 > img.width - 1 or y0 + 1 > img.height - 1:
        return None
    fx = x - x0
    fy = y - y0
    d = img.data
    top = (1.0 - fx) * d[y0, x0] + fx * d[y0, x0 + 1]
    bot = (1.0 - fx) * d[y0 + 1, x0] + fx * d[y0 + 1, x0 + 1]
    return (1.0 - fy) * top + fy * bot


def to_grayscale(img: Image) -> Image:
    """Rec.601 luminance; identity on images that are already gray."""
    if img.channels == 1:
        return img
    w = np.array(GRAY_WEIGHTS)
    gray = img.data @ w
    # Weights sum to 1 so the result stays in [0, 1] bar float dust.
    return make_image(np.clip(gray, 0.0, 1.0))


def _to_u8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)


def load_image(path) -> Image:
    """Load an 8-bit PNG (gray or RGB) as a float image."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such image file: {path}")
    try:
        with _PILImage.open(path) as im:
            fmt = im.format
            if fmt not in ("PNG", "PPM"):
                raise UnsupportedFormatError(f"unsupported image format {fmt!r}: {path}")
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if len(im.getbands()) >= 3 else "L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise CorruptDataError(f"cannot decode image data: {path}") from exc
    except OSError as exc:
        raise CorruptDataError(f"corrupt image file: {path}") from exc
    return make_image(arr)


def save_image(img: Image, path) -> None:
    """Write an image as 8-bit PNG, or binary PPM when the path ends in .ppm."""
    path = os.fspath(path)
    u8 = _to_u8(img.data)
    if path.lower().endswith(".ppm"):
        _save_ppm(u8, path)
        return
    if img.channels == 1:
        _PILImage.fromarray(u8[:, :, 0], mode="L").save(path, format="PNG")
    else:
        _PILImage.fromarray(u8, mode="RGB").save(path, format="PNG")


def save_image_u16(data: np.ndarray, path) -> None:
    """Write a (h, w) uint16 array as 16-bit grayscale PNG (debug counts)."""
    arr = np.asarray(data, dtype=np.uint16)
    _PILImage.fromarray(arr, mode="I;16").save(os.fspath(path), format="PNG")


def _save_ppm(u8: np.ndarray, path: str) -> None:
    h, w, c = u8.shape
    rgb = u8 if c == 3 else np.repeat(u8, 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
