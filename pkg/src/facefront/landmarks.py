"""Named facial landmark sets and the registered point schemas.

The default schema "sdm48" has 48 points and no jawline: 10 brow points,
12 eye points, 8 nose points and 18 mouth points. "l"/"r" in point names
refer to the left/right side of the *reference image* (viewer's left).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import MissingFileError, SchemaError


def _sdm48_names() -> tuple[str, ...]:
    names: list[str] = []
    names += [f"brow_l_{i}" for i in range(5)]
    names += [f"brow_r_{i}" for i in range(5)]
    names += ["eye_l_outer", "eye_l_top_0", "eye_l_top_1",
              "eye_l_inner", "eye_l_bot_0", "eye_l_bot_1"]
    names += ["eye_r_inner", "eye_r_top_0", "eye_r_top_1",
              "eye_r_outer", "eye_r_bot_0", "eye_r_bot_1"]
    names += ["nose_ridge_0", "nose_ridge_1", "nose_ridge_2", "nose_tip",
              "nose_wing_l", "nose_base_l", "nose_base_r", "nose_wing_r"]
    names += ["mouth_corner_l"]
    names += [f"mouth_top_{i}" for i in range(5)]
    names += ["mouth_corner_r"]
    names += [f"mouth_bot_{i}" for i in range(5)]
    names += [f"mouth_inner_top_{i}" for i in range(3)]
    names += [f"mouth_inner_bot_{i}" for i in range(3)]
    return tuple(names)


SCHEMAS: dict[str, tuple[str, ...]] = {"sdm48": _sdm48_names()}

# name -> mirrored name under left/right reflection (used by synthetic data
# generation; identity for points on the midline).
def mirror_name(name: str) -> str:
    if "_l_" in name:
        return name.replace("_l_", "_r_")
    if "_r_" in name:
        return name.replace("_r_", "_l_")
    if name.endswith("_l"):
        return name[:-2] + "_r"
    if name.endswith("_r"):
        return name[:-2] + "_l"
    return name


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered named 2D points in some image's pixel coordinates."""

    schema_id: str
    names: tuple[str, ...]
    xy: np.ndarray  # (n, 2) float64

    def __post_init__(self):
        xy = np.ascontiguousarray(np.asarray(self.xy, dtype=np.float64))
        if xy.shape != (len(self.names), 2):
            raise SchemaError(
                f"landmark array shape {xy.shape} does not match {len(self.names)} names"
            )
        if not np.all(np.isfinite(xy)):
            raise SchemaError("landmark coordinates must be finite")
        xy.flags.writeable = False
        object.__setattr__(self, "xy", xy)

    def __len__(self) -> int:
        return len(self.names)

    def point(self, name: str) -> np.ndarray:
        return self.xy[self.names.index(name)]

    def transformed(self, scale: float, tx: float, ty: float) -> "LandmarkSet":
        return LandmarkSet(self.schema_id, self.names, self.xy * scale + (tx, ty))


def make_landmark_set(schema_id: str, points: dict[str, tuple[float, float]]) -> LandmarkSet:
    """Build a LandmarkSet from a name->(x, y) mapping, validated and ordered."""
    names = _schema_names(schema_id)
    _check_names(schema_id, names, points.keys())
    xy = np.array([points[n] for n in names], dtype=np.float64)
    return LandmarkSet(schema_id, names, xy)


def parse_landmarks(path, schema_id: str = "sdm48", box=None,
                    crop_factor: float = 2.2, crop_size: int = 250) -> LandmarkSet:
    """Read a landmark JSON file: {"schema": ..., "points": [{name, x, y}, ...]}.

    When a detection box (x, y, w, h) is given, coordinates are mapped into
    the standard crop produced by crop_to_standard with the same factor and
    output size.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such landmark file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"landmark file is not valid JSON: {path}: {exc}") from exc

    if not isinstance(doc, dict) or "points" not in doc:
        raise SchemaError(f"landmark file missing 'points': {path}")
    file_schema = doc.get("schema", schema_id)
    if file_schema != schema_id:
        raise SchemaError(f"unknown or mismatched schema {file_schema!r}, expected {schema_id!r}")

    points: dict[str, tuple[float, float]] = {}
    for entry in doc["points"]:
        try:
            name = entry["name"]
            x = float(entry["x"])
            y = float(entry["y"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad landmark entry {entry!r} in {path}") from exc
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SchemaError(f"non-finite coordinates for {name!r} in {path}")
        if name in points:
            raise SchemaError(f"duplicate point name {name!r} in {path}")
        points[name] = (x, y)

    lms = make_landmark_set(schema_id, points)
    if box is not None:
        scale, tx, ty = standard_crop_transform(box, crop_factor, crop_size)
        lms = lms.transformed(scale, tx, ty)
    return lms


def standard_crop_transform(box, factor: float, size: int):
    """Source-pixel -> standard-crop transform (scale, tx, ty) for a detection box."""
    bx, by, bw, bh = (float(v) for v in box)
    if bw <= 0 or bh <= 0:
        raise SchemaError(f"zero-area detection box {box!r}")
    cx = bx + bw / 2.0
    cy = by + bh / 2.0
    side = max(bw, bh) * factor
    scale = size / side
    tx = (size - 1) / 2.0 - cx * scale
    ty = (size - 1) / 2.0 - cy * scale
    return scale, tx, ty


def save_landmarks(lms: LandmarkSet, path) -> None:
    doc = {
        "schema": lms.schema_id,
        "points": [
            {"name": n, "x": float(x), "y": float(y)}
            for n, (x, y) in zip(lms.names, lms.xy)
        ],
    }
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


def _schema_names(schema_id: str) -> tuple[str, ...]:
    if schema_id not in SCHEMAS:
        raise SchemaError(f"unknown landmark schema {schema_id!r}")
    return SCHEMAS[schema_id]


def _check_names(schema_id, expected, got) -> None:
    got = set(got)
    expected_set = set(expected)
    if got != expected_set:
        missing = sorted(expected_set - got)
        extra = sorted(got - expected_set)
        raise SchemaError(
            f"landmark names do not match schema {schema_id!r}: "
            f"{len(got)} given, missing {missing[:4]}, extra {extra[:4]}"
        )
