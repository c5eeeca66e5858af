"""Reference model rendering and the precomputed reference bundle.

The bundle stores, for every pixel of one fixed reference view, the 3D
surface point that produced it. Those per-pixel coordinates are what the
frontalization stage back-projects through an estimated query camera.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .camera import Camera, look_frontal, project_points
from .errors import (
    CorruptDataError,
    MeshError,
    MissingFileError,
    SchemaError,
    TruncatedFileError,
    VersionMismatchError,
)
from .imagecore import Image, load_image, make_image
from .landmarks import LandmarkSet, _check_names, _schema_names

BUNDLE_MAGIC = b"FFB1"
BUNDLE_VERSION = 1
BACKGROUND = 0.5


@dataclass(frozen=True)
class Mesh3D:
    """Triangle mesh with per-vertex texture coordinates and optional texture."""

    vertices: np.ndarray   # (n, 3) float64
    uv: np.ndarray         # (n, 2) float64 in [0, 1]
    faces: np.ndarray      # (m, 3) int64
    texture: Image | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        uv = np.ascontiguousarray(np.asarray(self.uv, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise MeshError(f"bad vertex array shape {v.shape}")
        if uv.shape != (v.shape[0], 2):
            raise MeshError(f"uv shape {uv.shape} does not match {v.shape[0]} vertices")
        if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 1:
            raise MeshError(f"bad face array shape {f.shape}")
        if not np.all(np.isfinite(v)) or not np.all(np.isfinite(uv)):
            raise MeshError("mesh contains non-finite values")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise MeshError("face index out of range")
        if uv.min() < -1e-9 or uv.max() > 1 + 1e-9:
            raise MeshError("uv coordinates must lie in [0, 1]")
        for a in (v, uv, f):
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]


def load_model(geometry_path, texture_path=None,
               landmarks3d_path=None, schema_id: str = "sdm48"):
    """Load mesh geometry, texture and 3D landmarks from their files.

    Returns (Mesh3D with texture attached, landmarks dict or None). A None
    texture path selects the gray-shaded fallback render.
    """
    mesh = load_obj(geometry_path)
    if texture_path is not None:
        mesh = replace(mesh, texture=load_image(texture_path))
    lms3 = load_landmarks3d(landmarks3d_path, schema_id) if landmarks3d_path else None
    return mesh, lms3


def load_obj(path) -> Mesh3D:
    """Parse the OBJ subset used for reference geometry: v, vt and f records.

    Face corners are `pos` or `pos/uv` with 1-based positive indices; faces
    with more than three corners are fan triangulated. Corners that pair one
    position with different uv indices become distinct mesh vertices.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such geometry file: {path}")

    positions: list[tuple[float, float, float]] = []
    texcoords: list[tuple[float, float]] = []
    corners: list[list[tuple[int, int]]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            tag = parts[0]
            try:
                if tag == "v":
                    x, y, z = (float(p) for p in parts[1:4])
                    positions.append((x, y, z))
                elif tag == "vt":
                    u, v = float(parts[1]), float(parts[2])
                    texcoords.append((u, v))
                elif tag == "f":
                    face = []
                    for token in parts[1:]:
                        fields = token.split("/")
                        pi = int(fields[0])
                        ti = int(fields[1]) if len(fields) > 1 and fields[1] else pi
                        if pi <= 0 or ti <= 0:
                            raise MeshError(
                                f"{path}:{lineno}: only positive OBJ indices are supported"
                            )
                        face.append((pi - 1, ti - 1))
                    if len(face) < 3:
                        raise MeshError(f"{path}:{lineno}: face with fewer than 3 corners")
                    corners.append(face)
                # other record types (vn, o, g, s, mtllib, usemtl) are ignored
            except (ValueError, IndexError) as exc:
                raise CorruptDataError(f"{path}:{lineno}: malformed OBJ record {line!r}") from exc

    if not positions or not corners:
        raise MeshError(f"{path}: OBJ contains no usable geometry")
    if not texcoords:
        texcoords = [(0.0, 0.0)]
        corners = [[(pi, 0) for pi, _ in face] for face in corners]

    remap: dict[tuple[int, int], int] = {}
    verts: list[tuple[float, float, float]] = []
    uvs: list[tuple[float, float]] = []
    tris: list[tuple[int, int, int]] = []
    for face in corners:
        idx = []
        for pi, ti in face:
            if pi >= len(positions) or ti >= len(texcoords):
                raise MeshError(f"{path}: face index out of range")
            key = (pi, ti)
            if key not in remap:
                remap[key] = len(verts)
                verts.append(positions[pi])
                uvs.append(texcoords[ti])
            idx.append(remap[key])
        for k in range(1, len(idx) - 1):
            tris.append((idx[0], idx[k], idx[k + 1]))

    return Mesh3D(np.array(verts), np.array(uvs), np.array(tris))


def load_landmarks3d(path, schema_id: str = "sdm48") -> dict[str, np.ndarray]:
    """Read the 3D landmark JSON: [{"name":..., "x":..., "y":..., "z":...}, ...]."""
    import json

    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such landmark file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"3D landmark file is not valid JSON: {path}") from exc
    if not isinstance(doc, list):
        raise SchemaError(f"3D landmark file must be a JSON array: {path}")

    names = _schema_names(schema_id)
    if len(doc) != len(names):
        raise SchemaError(
            f"3D landmark count mismatch: {len(doc)} entries, schema "
            f"{schema_id!r} demands {len(names)}"
        )
    out: dict[str, np.ndarray] = {}
    for entry in doc:
        try:
            name = entry["name"]
            p = np.array([entry["x"], entry["y"], entry["z"]], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad 3D landmark entry {entry!r}") from exc
        if not np.all(np.isfinite(p)):
            raise SchemaError(f"non-finite 3D landmark {name!r}")
        if name in out:
            raise SchemaError(f"duplicate 3D landmark {name!r}")
        out[name] = p
    _check_names(schema_id, names, out.keys())
    return out


def save_landmarks3d(points: dict[str, np.ndarray], path) -> None:
    import json

    doc = [
        {"name": n, "x": float(p[0]), "y": float(p[1]), "z": float(p[2])}
        for n, p in points.items()
    ]
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)


@dataclass(frozen=True)
class ReferenceBundle:
    """One rendered reference view plus everything frontalization needs.

    coord holds the model-space 3D surface point behind each valid pixel,
    symmetry maps each pixel to its left-right mirror (itself when the
    mirror is invalid or out of frame), and axis_k is the integer constant
    of that mirror: sym_x = axis_k - x.
    """

    render: Image
    coord: np.ndarray      # (h, w, 3) float64
    valid: np.ndarray      # (h, w) bool
    camera: Camera
    landmarks: LandmarkSet
    symmetry: np.ndarray   # (h, w, 2) int32, [y, x] -> (sym_x, sym_y)
    eye_mask: np.ndarray   # (h, w) bool
    axis_k: int
    background: float = BACKGROUND

    @property
    def height(self) -> int:
        return self.render.height

    @property
    def width(self) -> int:
        return self.render.width


def default_reference_camera(mesh: Mesh3D, width: int, height: int,
                             fill: float = 0.78) -> Camera:
    """Frontal camera framing the mesh so its height fills `fill` of the image."""
    v = mesh.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    center = (lo + hi) / 2.0
    extent_y = hi[1] - lo[1]
    if extent_y <= 0:
        raise MeshError("mesh has zero vertical extent")
    distance = 4.0 * extent_y
    # pinhole: projected height ~ focal * extent / depth at the model center
    depth_c = center[2] + distance
    focal = fill * height * depth_c / extent_y
    # principal point placed so the bbox center lands mid-image; the frontal
    # rotation negates world x and y in camera coordinates
    cx = (width - 1) / 2.0 + focal * center[0] / depth_c
    cy = (height - 1) / 2.0 + focal * center[1] / depth_c
    return look_frontal(focal, cx, cy, distance)


def _sample_texture(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear texture lookup with edge clamp; v=0 is the bottom texture row."""
    th, tw = tex.shape[:2]
    x = np.clip(u, 0.0, 1.0) * (tw - 1)
    y = (1.0 - np.clip(v, 0.0, 1.0)) * (th - 1)
    x0 = np.clip(np.floor(x).astype(np.int64), 0, tw - 2) if tw > 1 else np.zeros_like(x, np.int64)
    y0 = np.clip(np.floor(y).astype(np.int64), 0, th - 2) if th > 1 else np.zeros_like(y, np.int64)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x1 = np.minimum(x0 + 1, tw - 1)
    y1 = np.minimum(y0 + 1, th - 1)
    top = tex[y0, x0] * (1 - fx) + tex[y0, x1] * fx
    bot = tex[y1, x0] * (1 - fx) + tex[y1, x1] * fx
    return top * (1 - fy[..., 0][..., None]) + bot * fy[..., 0][..., None]


def _vertex_shades(mesh: Mesh3D) -> np.ndarray:
    """Untextured fallback: simple headlight shade from area-weighted normals."""
    v = mesh.vertices
    f = mesh.faces
    n = np.zeros_like(v)
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    fn = np.cross(e1, e2)
    for k in range(3):
        np.add.at(n, f[:, k], fn)
    norm = np.linalg.norm(n, axis=1)
    nz = np.where(norm > 1e-12, np.abs(n[:, 2]) / np.maximum(norm, 1e-12), 1.0)
    return 0.25 + 0.6 * nz


def rasterize_reference(mesh: Mesh3D, camera: Camera, width: int,
                        height: int) -> tuple[Image, np.ndarray, np.ndarray]:
    """Z-buffer render of the mesh under the camera. Returns (render, coord, valid)."""
    if width < 2 or height < 2:
        raise MeshError("render target must be at least 2x2")
    texture = mesh.texture
    xy, w = project_points(camera, mesh.vertices)
    if np.any(~np.isfinite(w[mesh.faces.ravel()])) or np.any(
        ~np.isfinite(xy[mesh.faces.ravel()])
    ):
        raise MeshError("mesh vertex projects to infinity under this camera")

    if texture is not None:
        attr = mesh.uv
    else:
        shade = _vertex_shades(mesh)
        attr = np.stack([shade, np.zeros_like(shade)], axis=1)

    depth, coord, uvmap, valid = _kernels.raster_scan(
        np.ascontiguousarray(xy),
        np.ascontiguousarray(w),
        np.ascontiguousarray(mesh.vertices),
        np.ascontiguousarray(attr, dtype=np.float64),
        np.ascontiguousarray(mesh.faces),
        width,
        height,
    )
    valid = valid.astype(bool)

    channels = texture.channels if texture is not None else 1
    pix = np.full((height, width, channels), BACKGROUND, dtype=np.float64)
    if texture is not None:
        samples = _sample_texture(texture.data, uvmap[..., 0], uvmap[..., 1])
        pix[valid] = np.clip(samples[valid], 0.0, 1.0)
    else:
        pix[valid, 0] = np.clip(uvmap[valid, 0], 0.0, 1.0)
    return make_image(pix), coord, valid


def build_symmetry_map(valid: np.ndarray, camera: Camera,
                       coord: np.ndarray) -> tuple[np.ndarray, int]:
    """Integer mirror map across the projected x=0 model plane.

    Returns (symmetry, axis_k) with sym_x = axis_k - x, which makes the map
    an exact involution. Pixels whose mirror is out of frame or invalid map
    to themselves.
    """
    h, w = valid.shape
    zbar = float(np.mean(coord[valid][:, 2])) if valid.any() else 0.0
    ybar = float(np.mean(coord[valid][:, 1])) if valid.any() else 0.0
    axis_pt, _ = project_points(camera, np.array([[0.0, ybar, zbar]]))
    axis_x = float(axis_pt[0, 0])
    axis_k = int(round(2.0 * axis_x))

    xs = np.arange(w)[None, :].repeat(h, axis=0)
    ys = np.arange(h)[:, None].repeat(w, axis=1)
    mx = axis_k - xs
    ok = (mx >= 0) & (mx < w)
    mirror_valid = np.zeros((h, w), dtype=bool)
    mirror_valid[ok] = valid[ys[ok], mx[ok]]
    use = ok & mirror_valid
    sym = np.stack([np.where(use, mx, xs), ys], axis=2).astype(np.int32)
    return np.ascontiguousarray(sym), axis_k


def build_eye_mask(valid: np.ndarray, landmarks: LandmarkSet, axis_k: int) -> np.ndarray:
    """Rectangular exclusion zones over both orbital regions, symmetric by
    construction.

    The left-eye rectangle comes from the left corner landmarks; the
    right mask is its exact mirror through the symmetry map, so mask
    membership commutes with mirroring. The rectangle spans the whole
    orbit, not just the eyeball: gaze must never be mirrored, and the
    selection step relies on the corner probe patches (and the one-pixel
    LBP ring around them) being identical between the raw and symmetric
    candidates, which an elliptical zone fails to guarantee at the patch
    corners.
    """
    h, w = valid.shape
    outer = landmarks.point("eye_l_outer")
    inner = landmarks.point("eye_l_inner")
    cx, cy = (outer + inner) / 2.0
    half = float(np.linalg.norm(outer - inner)) / 2.0
    if half <= 0:
        raise SchemaError("degenerate eye corner landmarks")
    ax = half + 14.0
    ay = 15.0

    ys, xs = np.mgrid[0:h, 0:w]
    left = (np.abs(xs - cx) <= ax) & (np.abs(ys - cy) <= ay)
    left &= valid

    mask = left.copy()
    ly, lx = np.nonzero(left)
    mx = axis_k - lx
    ok = (mx >= 0) & (mx < w)
    mask[ly[ok], mx[ok]] = True
    return mask & valid


def build_reference_bundle(mesh: Mesh3D, landmarks3d: dict[str, np.ndarray],
                           camera: Camera | None = None, width: int = 250,
                           height: int = 250,
                           schema_id: str = "sdm48") -> ReferenceBundle:
    """Render the reference view and assemble the full bundle."""
    if camera is None:
        camera = default_reference_camera(mesh, width, height)
    render, coord, valid = rasterize_reference(mesh, camera, width, height)

    names = _schema_names(schema_id)
    _check_names(schema_id, names, landmarks3d.keys())
    pts3 = np.array([landmarks3d[n] for n in names])
    xy, _ = project_points(camera, pts3)
    if not np.all(np.isfinite(xy)):
        raise SchemaError("a 3D landmark projects to infinity in the reference view")
    # snap each landmark to the nearest valid pixel so the stored position
    # and the coord the pose fitter reads there agree exactly
    from .posefit import nearest_valid_pixel

    for i in range(xy.shape[0]):
        hit = nearest_valid_pixel(valid, xy[i, 0], xy[i, 1])
        if hit is not None:
            xy[i] = (hit[1], hit[0])
    lms = LandmarkSet(schema_id, names, xy)

    symmetry, axis_k = build_symmetry_map(valid, camera, coord)
    eye_mask = build_eye_mask(valid, lms, axis_k)
    return ReferenceBundle(render, coord, valid, camera, lms, symmetry,
                           eye_mask, axis_k)


def bundle_landmarks3d(bundle: ReferenceBundle) -> dict[str, np.ndarray]:
    """Canonical 3D landmark points of a built bundle.

    These are the surface coordinates stored at each (snapped) reference
    landmark pixel, i.e. exactly what the pose fitter pairs with query
    detections.
    """
    out = {}
    for name, (x, y) in zip(bundle.landmarks.names, bundle.landmarks.xy):
        px = int(round(x))
        py = int(round(y))
        if 0 <= py < bundle.height and 0 <= px < bundle.width and bundle.valid[py, px]:
            out[name] = bundle.coord[py, px].copy()
    return out


def _pack_bits(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def _unpack_bits(buf: bytes, h: int, w: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    return bits[: h * w].reshape(h, w).astype(bool)


def save_bundle(bundle: ReferenceBundle, path) -> None:
    """Write the bundle in the versioned binary format (magic FFB1)."""
    h, _w, c = bundle.render.data.shape
    w = bundle.width
    parts = [
        BUNDLE_MAGIC,
        struct.pack("<IIIIiI", BUNDLE_VERSION, w, h, c, bundle.axis_k, 0),
        struct.pack("<d", bundle.background),
        np.ascontiguousarray(bundle.camera.C, dtype="<f8").tobytes(),
        np.ascontiguousarray(bundle.render.data, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.coord, dtype="<f4").tobytes(),
        _pack_bits(bundle.valid),
        _pack_bits(bundle.eye_mask),
        np.ascontiguousarray(bundle.symmetry, dtype="<u2").tobytes(),
    ]
    lm = bundle.landmarks
    sid = lm.schema_id.encode("utf-8")
    parts.append(struct.pack("<H", len(sid)) + sid)
    parts.append(struct.pack("<I", len(lm)))
    for name, (x, y) in zip(lm.names, lm.xy):
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<dd", x, y))
    with open(os.fspath(path), "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, fh, path: str):
        self.fh = fh
        self.path = path

    def take(self, n: int) -> bytes:
        buf = self.fh.read(n)
        if len(buf) != n:
            raise TruncatedFileError(
                f"{self.path}: expected {n} more bytes, got {len(buf)}"
            )
        return buf


def load_bundle(path) -> ReferenceBundle:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such bundle file: {path}")
    with open(path, "rb") as fh:
        r = _Reader(fh, path)
        magic = r.take(4)
        if magic != BUNDLE_MAGIC:
            raise VersionMismatchError(
                f"{path}: bad magic {magic!r}, expected {BUNDLE_MAGIC!r}"
            )
        version, w, h, c, axis_k, _rsv = struct.unpack("<IIIIiI", r.take(24))
        if version != BUNDLE_VERSION:
            raise VersionMismatchError(f"{path}: unsupported bundle version {version}")
        if not (2 <= w <= 65535 and 2 <= h <= 65535 and c in (1, 3)):
            raise CorruptDataError(f"{path}: implausible dimensions {w}x{h}x{c}")
        (background,) = struct.unpack("<d", r.take(8))
        cam = np.frombuffer(r.take(96), dtype="<f8").reshape(3, 4)
        render = np.frombuffer(r.take(4 * h * w * c), dtype="<f4")
        render = render.reshape(h, w, c).astype(np.float64)
        if not np.all(np.isfinite(render)):
            raise CorruptDataError(f"{path}: non-finite render data")
        coord = np.frombuffer(r.take(4 * h * w * 3), dtype="<f4")
        coord = np.ascontiguousarray(coord.reshape(h, w, 3).astype(np.float64))
        nbits = (h * w + 7) // 8
        valid = _unpack_bits(r.take(nbits), h, w)
        eye_mask = _unpack_bits(r.take(nbits), h, w)
        sym = np.frombuffer(r.take(2 * h * w * 2), dtype="<u2")
        sym = np.ascontiguousarray(sym.reshape(h, w, 2).astype(np.int32))

        (slen,) = struct.unpack("<H", r.take(2))
        schema_id = r.take(slen).decode("utf-8")
        (count,) = struct.unpack("<I", r.take(4))
        names = []
        pts = np.empty((count, 2), dtype=np.float64)
        for i in range(count):
            (nlen,) = struct.unpack("<H", r.take(2))
            names.append(r.take(nlen).decode("utf-8"))
            pts[i] = struct.unpack("<dd", r.take(16))
        extra = fh.read(1)
        if extra:
            raise CorruptDataError(f"{path}: trailing bytes after bundle payload")

    try:
        lms = LandmarkSet(schema_id, tuple(names), pts)
        camera = Camera(cam.astype(np.float64))
    except SchemaError:
        raise
    except Exception as exc:
        raise CorruptDataError(f"{path}: invalid bundle payload: {exc}") from exc
    coord.flags.writeable = False
    valid.flags.writeable = False
    eye_mask.flags.writeable = False
    sym.flags.writeable = False
    return ReferenceBundle(make_image(np.clip(render, 0.0, 1.0)), coord, valid,
                           camera, lms, sym, eye_mask, axis_k, background)


def bundle_equal(a: ReferenceBundle, b: ReferenceBundle) -> bool:
    """Exact equality of two bundles' stored payloads (float32 granularity)."""
    return (
        a.width == b.width
        and a.height == b.height
        and a.axis_k == b.axis_k
        and np.array_equal(a.render.data.astype(np.float32), b.render.data.astype(np.float32))
        and np.array_equal(a.coord.astype(np.float32), b.coord.astype(np.float32))
        and np.array_equal(a.valid, b.valid)
        and np.array_equal(a.eye_mask, b.eye_mask)
        and np.array_equal(a.symmetry, b.symmetry)
        and np.allclose(a.camera.C, b.camera.C)
        and a.landmarks.names == b.landmarks.names
        and np.allclose(a.landmarks.xy, b.landmarks.xy)
    )


def replace_render(bundle: ReferenceBundle, render: Image) -> ReferenceBundle:
    return replace(bundle, render=render)
