"""Batch frontalization: standard crops, job manifests, parallel runs.

A job manifest is a JSON document naming input images, their landmark
files, and shared options.  Manifest-level problems (bad structure,
unreadable bundle or detector set) abort before any item runs; per-item
problems (missing image, pose-fit failure) are recorded and never stop
the batch.  Output records are written as JSON lines sorted by item
index, so a run's record file is byte-identical regardless of worker
count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import FacefrontError, MissingFileError, SchemaError
from .frontalize import FrontalizeOptions, emit_debug, frontalize
from .imagecore import Image, load_image, make_image, save_image
from .landmarks import parse_landmarks, standard_crop_transform
from .learners import load_detector_set
from .refbundle import load_bundle

CROP_FACTOR = 2.2
CROP_SIZE = 250
FILL_VALUE = 0.5    # mid-gray for pixels outside the source frame

BUNDLE_ENV = "FACEFRONT_BUNDLE"
DETECTORS_ENV = "FACEFRONT_DETECTORS"


def crop_to_standard(img: Image, box, factor: float = CROP_FACTOR,
                     size: int = CROP_SIZE) -> Image:
    """Resample a detection box into the standard aligned crop.

    The box (x, y, w, h) is expanded about its center to a square of
    side max(w, h) * factor and mapped onto a size x size output with
    bilinear sampling.  Source pixels outside the image contribute the
    mid-gray fill value.  A box with zero area raises SchemaError.
    """
    scale, tx, ty = standard_crop_transform(box, factor, size)
    xs1 = (np.arange(size, dtype=np.float64) - tx) / scale
    ys1 = (np.arange(size, dtype=np.float64) - ty) / scale
    xs = np.broadcast_to(xs1[None, :], (size, size)).ravel().copy()
    ys = np.broadcast_to(ys1[:, None], (size, size)).ravel().copy()
    out, inb = _kernels.warp_bilinear(img.data, xs, ys)
    out = out.reshape(size, size, img.channels)
    out[~inb.reshape(size, size).astype(bool)] = FILL_VALUE
    return make_image(out)


@dataclass(frozen=True)
class JobEntry:
    image_path: str
    landmark_path: str
    identity: str | None = None
    label: str | None = None
    box: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class BatchOptions:
    bundle_path: str | None = None
    detector_path: str | None = None
    output_dir: str = "out"
    emit_debug: bool = False
    seed: int = 0
    workers: int = 1
    mode: str = "auto"
    crop_factor: float = CROP_FACTOR
    crop_size: int = CROP_SIZE


@dataclass(frozen=True)
class JobManifest:
    entries: tuple[JobEntry, ...]
    options: BatchOptions = field(default_factory=BatchOptions)


def _entry_from_dict(i: int, raw: dict, base: str) -> JobEntry:
    if not isinstance(raw, dict):
        raise SchemaError(f"manifest entry {i} is not an object")
    for key in ("image", "landmarks"):
        if key not in raw or not isinstance(raw[key], str) or not raw[key]:
            raise SchemaError(f"manifest entry {i} missing string field {key!r}")
    box = raw.get("box")
    if box is not None:
        if (not isinstance(box, (list, tuple)) or len(box) != 4
                or not all(isinstance(v, (int, float)) for v in box)):
            raise SchemaError(f"manifest entry {i} has a malformed box: {box!r}")
        box = tuple(float(v) for v in box)
    return JobEntry(
        image_path=os.path.join(base, raw["image"]),
        landmark_path=os.path.join(base, raw["landmarks"]),
        identity=raw.get("identity"),
        label=raw.get("label"),
        box=box,
    )


def load_manifest(path) -> JobManifest:
    """Parse and structurally validate a manifest file.

    Relative entry paths resolve against the manifest's directory.
    Structural problems raise SchemaError immediately; whether each
    referenced image actually exists is an item-level concern decided
    when the item runs.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such manifest: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise SchemaError("manifest must be an object with an 'entries' list")
    if not doc["entries"]:
        raise SchemaError("manifest has no entries")

    base = os.path.dirname(os.path.abspath(path))
    entries = tuple(
        _entry_from_dict(i, raw, base) for i, raw in enumerate(doc["entries"])
    )

    opts = doc.get("options", {})
    if not isinstance(opts, dict):
        raise SchemaError("manifest 'options' must be an object")
    known = {
        "bundle", "detectors", "output_dir", "emit_debug", "seed",
        "workers", "mode", "crop_factor", "crop_size",
    }
    unknown = set(opts) - known
    if unknown:
        raise SchemaError(f"unknown manifest options: {sorted(unknown)}")

    def _resolved(key):
        v = opts.get(key)
        return os.path.join(base, v) if isinstance(v, str) else v

    options = BatchOptions(
        bundle_path=_resolved("bundle"),
        detector_path=_resolved("detectors"),
        output_dir=_resolved("output_dir") or os.path.join(base, "out"),
        emit_debug=bool(opts.get("emit_debug", False)),
        seed=int(opts.get("seed", 0)),
        workers=int(opts.get("workers", 1)),
        mode=str(opts.get("mode", "auto")),
        crop_factor=float(opts.get("crop_factor", CROP_FACTOR)),
        crop_size=int(opts.get("crop_size", CROP_SIZE)),
    )
    if options.workers < 1:
        raise SchemaError("workers must be >= 1")
    if options.mode not in ("auto", "raw", "symmetric"):
        raise SchemaError(f"unknown mode {options.mode!r}")
    return JobManifest(entries=entries, options=options)


def resolve_resource(explicit: str | None, env_name: str, what: str) -> str:
    """Pick a resource path: explicit option first, then environment."""
    path = explicit or os.environ.get(env_name)
    if not path:
        raise MissingFileError(
            f"no {what} path given and {env_name} is not set"
        )
    if not os.path.exists(path):
        raise MissingFileError(f"no such {what}: {path}")
    return path


def _round6(v) -> float | None:
    return None if v is None else round(float(v), 6)


def _process_item(index: int, entry: JobEntry, bundle, detectors,
                  options: BatchOptions) -> dict:
    record = {
        "index": index,
        "image": entry.image_path,
        "status": "error",
        "selected": None,
        "output": None,
        "rms_px": None,
        "condition": None,
        "votes": None,
        "error": None,
    }
    try:
        img = load_image(entry.image_path)
        lms = parse_landmarks(
            entry.landmark_path, box=entry.box,
            crop_factor=options.crop_factor, crop_size=options.crop_size,
        )
        if entry.box is not None:
            img = crop_to_standard(img, entry.box, options.crop_factor,
                                   options.crop_size)
        res = frontalize(img, lms, bundle, detectors,
                         FrontalizeOptions(mode=options.mode))
        stem = f"item_{index:05d}"
        out_path = os.path.join(options.output_dir, "images", stem + ".png")
        save_image(res.output, out_path)
        if options.emit_debug and res.status == "ok":
            emit_debug(res, os.path.join(options.output_dir, "debug"), stem)
        record["status"] = res.status
        record["selected"] = res.selected
        record["output"] = os.path.join("images", stem + ".png")
        if res.report is not None:
            record["rms_px"] = _round6(res.report.rms_px)
            record["condition"] = _round6(res.report.condition)
        if res.detector_votes is not None:
            record["votes"] = {
                k: [bool(b) for b in v] for k, v in res.detector_votes.items()
            }
        if res.error:
            record["error"] = res.error
    except FacefrontError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


def run_batch(manifest: JobManifest, bundle=None, detectors=None) -> tuple[list[dict], dict]:
    """Frontalize every manifest entry; return (records, summary).

    The bundle and detector set load once and are shared read-only by
    all workers.  Every entry yields exactly one record with status ok,
    rejected, or error, so the summary counts always add up to the
    manifest size.  Rejected items still write an output image: the
    planar standard crop the selector fell back to.  The record file is
    sorted by index before writing, making batch output byte-identical
    for any worker count.
    """
    options = manifest.options
    if bundle is None:
        bundle = load_bundle(
            resolve_resource(options.bundle_path, BUNDLE_ENV, "reference bundle")
        )
    if detectors is None and options.mode == "auto":
        path = options.detector_path or os.environ.get(DETECTORS_ENV)
        if path:
            if not os.path.exists(path):
                raise MissingFileError(f"no such detector set: {path}")
            detectors = load_detector_set(path)

    os.makedirs(os.path.join(options.output_dir, "images"), exist_ok=True)

    n = len(manifest.entries)
    if options.workers == 1:
        records = [
            _process_item(i, e, bundle, detectors, options)
            for i, e in enumerate(manifest.entries)
        ]
    else:
        with ThreadPoolExecutor(max_workers=options.workers) as pool:
            futures = [
                pool.submit(_process_item, i, e, bundle, detectors, options)
                for i, e in enumerate(manifest.entries)
            ]
            records = [f.result() for f in futures]
    records.sort(key=lambda r: r["index"])

    ok = sum(1 for r in records if r["status"] == "ok")
    rejected = sum(1 for r in records if r["status"] == "rejected")
    errors = n - ok - rejected
    decided = ok + rejected
    summary = {
        "n_items": n,
        "ok": ok,
        "rejected": rejected,
        "item_errors": errors,
        "rejection_rate": round(rejected / decided, 6) if decided else 0.0,
    }

    with open(os.path.join(options.output_dir, "records.jsonl"), "w",
              encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    with open(os.path.join(options.output_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return records, summary
