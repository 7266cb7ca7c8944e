"""Dataset ingestion (IDX image/label pairs), a synthetic few-shot class
generator, and n-way k-shot episode sampling over disjoint train/test class
splits.

The IDX format is the plain big-endian one: images carry magic 0x00000803 and
dims (count, rows, cols) with u8 pixels; labels carry magic 0x00000801. An
out-of-repo script can downsample Omniglot PNGs into this format (see
README); nothing here decodes PNGs.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TRAIN = "train"
TEST = "test"


class DataError(ValueError):
    """Raised for malformed files, bad splits, or unsatisfiable episodes."""


@dataclass
class Dataset:
    """Flattened samples with class labels and a class-level split."""

    samples: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64
    image_side: int | None = None
    split_of_class: dict = field(default_factory=dict)
    class_rows: dict = field(init=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim != 2 or self.samples.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"samples {self.samples.shape} and labels {self.labels.shape} misaligned"
            )
        self.class_rows = {}
        for row, lab in enumerate(self.labels):
            self.class_rows.setdefault(int(lab), []).append(row)

    @property
    def n_classes(self):
        return len(self.class_rows)

    @property
    def dim(self):
        return self.samples.shape[1]

    def classes_in_split(self, split):
        if split not in (TRAIN, TEST):
            raise DataError(f"split must be '{TRAIN}' or '{TEST}', got {split!r}")
        return sorted(c for c, s in self.split_of_class.items() if s == split)


def split_classes(dataset, n_test_classes, split_seed):
    """Assign classes to disjoint train/test sets.

    Classes are ranked by a deterministic hash of (split_seed, class id); the
    lowest n_test_classes become the held-out test classes, so accuracy is
    always measured on classes never seen in training.
    """
    classes = sorted(dataset.class_rows)
    if not 0 < n_test_classes < len(classes):
        raise DataError(
            f"need 0 < test classes < {len(classes)}, got {n_test_classes}"
        )

    def rank(cid):
        digest = hashlib.sha256(f"{split_seed}:{cid}".encode()).hexdigest()
        return (digest, cid)

    ordered = sorted(classes, key=rank)
    test = set(ordered[:n_test_classes])
    dataset.split_of_class = {c: (TEST if c in test else TRAIN) for c in classes}
    return dataset


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def write_idx_images(path, images):
    """images: uint8 array (N, rows, cols)."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise DataError(f"images must be (N, rows, cols), got {images.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


def _read_exact(blob, offset, count, path):
    if offset + count > len(blob):
        raise DataError(f"{path}: truncated at byte {len(blob)}, needed {offset + count}")
    return blob[offset:offset + count], offset + count


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair into a Dataset with pixels scaled to [0,1]."""
    with open(images_path, "rb") as fh:
        blob = fh.read()
    header, offset = _read_exact(blob, 0, 16, images_path)
    magic, count, rows, cols = struct.unpack(">IIII", header)
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(f"{images_path}: bad magic 0x{magic:08x} at offset 0")
    pixels, offset = _read_exact(blob, offset, count * rows * cols, images_path)
    if offset != len(blob):
        raise DataError(f"{images_path}: {len(blob) - offset} trailing bytes at offset {offset}")
    images = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols)

    with open(labels_path, "rb") as fh:
        blob = fh.read()
    header, offset = _read_exact(blob, 0, 8, labels_path)
    magic, n_labels = struct.unpack(">II", header)
    if magic != IDX_LABELS_MAGIC:
        raise DataError(f"{labels_path}: bad magic 0x{magic:08x} at offset 0")
    raw, offset = _read_exact(blob, offset, n_labels, labels_path)
    if offset != len(blob):
        raise DataError(f"{labels_path}: {len(blob) - offset} trailing bytes at offset {offset}")
    if n_labels != count:
        raise DataError(f"{labels_path}: {n_labels} labels for {count} images")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if rows != cols and count > 0:
        raise DataError(f"{images_path}: only square images supported, got {rows}x{cols}")
    return Dataset(images.astype(np.float64) / 255.0, labels, image_side=rows if count else None)


def load_manifest(path):
    """Dataset manifest: JSON {path_images, path_labels, image_side, n_classes}.
    Paths are resolved relative to the manifest file."""
    import os

    with open(path) as fh:
        blob = json.load(fh)
    required = {"path_images", "path_labels", "image_side", "n_classes"}
    unknown = set(blob) - required
    if unknown:
        raise DataError(f"{path}: unknown manifest keys {sorted(unknown)}")
    missing = required - set(blob)
    if missing:
        raise DataError(f"{path}: missing manifest keys {sorted(missing)}")
    base = os.path.dirname(os.path.abspath(path))
    ds = load_idx(
        os.path.join(base, blob["path_images"]), os.path.join(base, blob["path_labels"])
    )
    if ds.image_side is not None and ds.image_side != blob["image_side"]:
        raise DataError(f"{path}: image_side {blob['image_side']} != file's {ds.image_side}")
    if ds.n_classes != blob["n_classes"]:
        raise DataError(f"{path}: n_classes {blob['n_classes']} != file's {ds.n_classes}")
    return ds


# ---------------------------------------------------------------------------
# Synthetic classes
# ---------------------------------------------------------------------------

def synth_classes(n_classes, per_class, dim, spread, seed):
    """Isotropic Gaussian clouds around random unit-ball centers.

    Deterministic per seed; a desk-scale stand-in for image data when probing
    the learning pipeline.
    """
    if spread <= 0:
        raise DataError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(n_classes, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.uniform(0.0, 1.0, size=(n_classes, 1)) ** (1.0 / dim)
    centers = direction * radius
    samples = np.repeat(centers, per_class, axis=0) + spread * rng.normal(
        size=(n_classes * per_class, dim)
    )
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(samples, labels)


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Episode:
    """One n-way k-shot task. Class slots are a relabeling 0..n_way-1 of the
    drawn classes; support and query rows never overlap."""

    n_way: int
    k_shot: int
    q_query: int
    support_x: np.ndarray  # (n_way, k_shot, D)
    query_x: np.ndarray  # (n_way * q_query, D)
    query_slot: np.ndarray  # (n_way * q_query,)
    class_ids: tuple  # original class id per slot


def sample_episode(dataset, split, n_way, k_shot, q_query, rng):
    """Draw classes without replacement, then k_shot + q_query distinct rows
    per class; the first k_shot become support, the rest queries."""
    eligible = [
        c for c in dataset.classes_in_split(split)
        if len(dataset.class_rows[c]) >= k_shot + q_query
    ]
    if len(eligible) < n_way:
        raise DataError(
            f"split {split!r} has {len(eligible)} classes with >= {k_shot + q_query} "
            f"samples, need {n_way}"
        )
    chosen = rng.choice(len(eligible), size=n_way, replace=False)
    support = np.empty((n_way, k_shot, dataset.dim))
    query_rows = []
    query_slot = []
    class_ids = []
    for slot, ci in enumerate(chosen):
        cid = eligible[int(ci)]
        class_ids.append(cid)
        rows = dataset.class_rows[cid]
        picked = rng.choice(len(rows), size=k_shot + q_query, replace=False)
        picked_rows = [rows[int(i)] for i in picked]
        support[slot] = dataset.samples[picked_rows[:k_shot]]
        query_rows.extend(picked_rows[k_shot:])
        query_slot.extend([slot] * q_query)
    return Episode(
        n_way,
        k_shot,
        q_query,
        support,
        dataset.samples[query_rows],
        np.asarray(query_slot, dtype=np.int64),
        tuple(class_ids),
    )
