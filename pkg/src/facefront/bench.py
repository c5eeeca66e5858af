"""Desk-scale benchmarks: pair verification and gender estimation.

Both benchmarks run identity-exclusive k-fold protocols over a rendered
corpus.  Verification stacks the 12 per-pair similarities (three
descriptor variants x {L2, sqrt-L2, OSS, sqrt-OSS}) into a linear SVM;
gender trains directly on descriptor vectors.  Fold assignments are
checked for identity leakage before any training happens.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .descriptors import DEFAULT_CONFIG, hybrid_descriptors
from .errors import FoldLeakageError, SchemaError
from .frontalize import FrontalizeOptions, frontalize
from .imagecore import Image, load_image
from .landmarks import parse_landmarks
from .learners import build_oss_bank, similarity_vector, svm_predict, svm_train
from .pipeline import crop_to_standard
from .synth import CorpusRecord


def planar_records(records: list[CorpusRecord], factor: float = 2.2,
                   size: int = 250) -> list[Image]:
    """Planar baseline alignment: standard crop around the landmark bbox.

    No pose correction at all; this is what frontalization competes
    against.
    """
    out = []
    for r in records:
        img = load_image(r.image_path)
        lms = parse_landmarks(r.landmark_path)
        xs = lms.xy[:, 0]
        ys = lms.xy[:, 1]
        box = (float(xs.min()), float(ys.min()),
               float(xs.max() - xs.min()), float(ys.max() - ys.min()))
        out.append(crop_to_standard(img, box, factor, size))
    return out


def frontalized_records(records: list[CorpusRecord], bundle, detectors=None,
                        mode: str = "auto") -> list[Image]:
    """Frontalize every corpus record; rejected items keep their fallback."""
    opts = FrontalizeOptions(mode=mode)
    out = []
    for r in records:
        img = load_image(r.image_path)
        lms = parse_landmarks(r.landmark_path)
        out.append(frontalize(img, lms, bundle, detectors, opts).output)
    return out


def check_pair_folds(records: list[CorpusRecord], folds) -> None:
    """Raise FoldLeakageError if any identity spans two verification folds."""
    ids_by_fold = []
    for pairs in folds:
        ids = set()
        for a, b, _same in pairs:
            ids.add(records[a].identity)
            ids.add(records[b].identity)
        ids_by_fold.append(ids)
    for i in range(len(ids_by_fold)):
        for j in range(i + 1, len(ids_by_fold)):
            shared = ids_by_fold[i] & ids_by_fold[j]
            if shared:
                raise FoldLeakageError(
                    f"identities {sorted(shared)} appear in folds {i} and {j}"
                )


def check_index_folds(records: list[CorpusRecord], folds) -> None:
    """Raise FoldLeakageError if any identity spans two index folds."""
    ids_by_fold = [
        {records[i].identity for i in fold} for fold in folds
    ]
    for i in range(len(ids_by_fold)):
        for j in range(i + 1, len(ids_by_fold)):
            shared = ids_by_fold[i] & ids_by_fold[j]
            if shared:
                raise FoldLeakageError(
                    f"identities {sorted(shared)} appear in folds {i} and {j}"
                )


def roc_points(scores, labels):
    """(fpr, tpr, auc) from raw scores; ties collapse to one point."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    order = np.argsort(-s, kind="stable")
    tp = np.cumsum(y[order])
    fp = np.cumsum(~y[order])
    distinct = np.r_[np.diff(s[order]) != 0, True]
    npos = max(int(tp[-1]), 1)
    nneg = max(int(fp[-1]), 1)
    tpr = np.r_[0.0, tp[distinct] / npos]
    fpr = np.r_[0.0, fp[distinct] / nneg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))
    return fpr, tpr, auc


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def bench_verify(images: list[Image], records: list[CorpusRecord], folds,
                 background: list[Image], cfg=DEFAULT_CONFIG, seed: int = 0,
                 n_neg_rows: int = 200, C: float = 1.0, out_dir=None) -> dict:
    """Cross-validated same/not-same verification with similarity stacking.

    `images` is aligned by record index (images[r.index] belongs to r);
    each fold is tested with a stacking SVM trained on the remaining
    folds' pairs.  `background` supplies the OSS negative bank and must
    show identities disjoint from every fold, aligned the same way as
    `images`: negatives drawn from fold identities leak same-identity
    twins into the OSS scores of training pairs but never test pairs,
    which shifts the two feature distributions apart and collapses the
    stacker at test time.  Returns per-fold accuracies, their
    mean +/- standard error, and the pooled ROC AUC.
    """
    if len(images) != len(records):
        raise SchemaError("one image per corpus record required")
    if not background:
        raise SchemaError("verification needs a background image set")
    check_pair_folds(records, folds)

    descs = [hybrid_descriptors(img, cfg) for img in images]
    bg_descs = [hybrid_descriptors(img, cfg) for img in background]

    per_fold = []
    pooled_scores: list[float] = []
    pooled_labels: list[bool] = []
    for k, test_pairs in enumerate(folds):
        train_pairs = [p for kk, f in enumerate(folds) if kk != k for p in f]
        bank = build_oss_bank(bg_descs, n_rows=n_neg_rows, seed=seed * 100 + k)

        def vec(pair):
            a, b, _same = pair
            return similarity_vector(descs[a], descs[b], bank).values

        Xtr = np.stack([vec(p) for p in train_pairs])
        ytr = np.array([1.0 if p[2] else -1.0 for p in train_pairs])
        model = svm_train(Xtr, ytr, C=C, seed=seed * 100 + k)

        Xte = np.stack([vec(p) for p in test_pairs])
        yte = np.array([1.0 if p[2] else -1.0 for p in test_pairs])
        sc = svm_predict(model, Xte)
        acc = float(np.mean(np.where(sc > 0, 1.0, -1.0) == yte))
        per_fold.append({"fold": k, "n_test": len(test_pairs), "accuracy": acc})
        pooled_scores.extend(float(x) for x in sc)
        pooled_labels.extend(bool(p[2]) for p in test_pairs)

    mean, se = mean_se([f["accuracy"] for f in per_fold])
    fpr, tpr, auc = roc_points(pooled_scores, pooled_labels)
    result = {
        "per_fold": per_fold,
        "mean_accuracy": mean,
        "se_accuracy": se,
        "auc": auc,
        "n_pairs": sum(f["n_test"] for f in per_fold),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "folds.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "n_test", "accuracy"])
            for f in per_fold:
                w.writerow([f["fold"], f["n_test"], f"{f['accuracy']:.6f}"])
            w.writerow(["mean", result["n_pairs"], f"{mean:.6f}"])
            w.writerow(["se", "", f"{se:.6f}"])
        with open(os.path.join(out_dir, "roc.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fpr", "tpr"])
            for a, b in zip(fpr, tpr):
                w.writerow([f"{a:.6f}", f"{b:.6f}"])
    return result


def _gender_features(descs, idx, variants):
    return np.stack([
        np.concatenate([descs[i][v].values for v in variants]) for i in idx
    ])


def bench_gender(images: list[Image], records: list[CorpusRecord], folds,
                 variants=("LBP",), dropout: float = 0.0, cfg=DEFAULT_CONFIG,
                 seed: int = 0, C: float = 1.0, out_dir=None) -> dict:
    """Subject-exclusive gender estimation on descriptor vectors."""
    if len(images) != len(records):
        raise SchemaError("one image per corpus record required")
    check_index_folds(records, folds)

    descs = [hybrid_descriptors(img, cfg) for img in images]
    labels = np.array([1.0 if r.gender == "m" else -1.0 for r in records])

    per_fold = []
    for k, test_idx in enumerate(folds):
        train_idx = sorted(
            i for kk, f in enumerate(folds) if kk != k for i in f
        )
        Xtr = _gender_features(descs, train_idx, variants)
        Xte = _gender_features(descs, test_idx, variants)
        model = svm_train(Xtr, labels[train_idx], C=C,
                          dropout_rate=dropout, seed=seed * 100 + k)
        sc = svm_predict(model, Xte)
        acc = float(np.mean(np.where(sc > 0, 1.0, -1.0) == labels[test_idx]))
        per_fold.append({"fold": k, "n_test": len(test_idx), "accuracy": acc})

    mean, se = mean_se([f["accuracy"] for f in per_fold])
    result = {
        "per_fold": per_fold,
        "mean_accuracy": mean,
        "se_accuracy": se,
        "variants": tuple(variants),
        "dropout": float(dropout),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gender_folds.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "n_test", "accuracy"])
            for f in per_fold:
                w.writerow([f["fold"], f["n_test"], f"{f['accuracy']:.6f}"])
            w.writerow(["mean", "", f"{mean:.6f}"])
            w.writerow(["se", "", f"{se:.6f}"])
    return result
