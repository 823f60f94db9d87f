"""Dataset ingestion, synthesis and label transforms.

Every ``LabeledDataset`` carries a provenance record: a nested dict that
fully describes how the dataset was built (file paths, embedded template
bytes, seeds, transform chain).  ``rebuild`` replays a provenance record
and reproduces the dataset bit-exactly.
"""

from __future__ import annotations

import base64
import csv
import gzip
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deform import DeformationSpec, deform_image
from .imgio import write_pnm
from .seeding import child_seed, child_seeds, rng_from

DATA_ROOT_ENV = "DEFORMLAB_DATA"

MNIST_MAGIC_IMAGES = 2051
MNIST_MAGIC_LABELS = 2049
CIFAR_RECORD_BYTES = 3073


class DataError(ValueError):
    pass


@dataclass
class LabeledDataset:
    """Immutable image classification data plus a replayable provenance record.

    Arrays are marked read-only on construction.  When the input array is
    already contiguous with the target dtype it is adopted (and frozen) rather
    than copied, so pass a copy if the caller needs to keep writing to it.
    """

    images: np.ndarray  # (n, h, w, c) float32
    labels: np.ndarray  # (n,) int64
    num_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be (n, h, w, c), got shape {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"labels outside 0..{self.num_classes - 1}")
        self.images.flags.writeable = False
        self.labels.flags.writeable = False

    def __len__(self):
        return len(self.images)


# ---- provenance helpers ----------------------------------------------------


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    return {
        "shape": list(arr.shape),
        "dtype": arr.dtype.str,
        "b64": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def _decode_array(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["b64"])
    return np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()


def rebuild(provenance: dict) -> LabeledDataset:
    """Replays a provenance record; output is bit-identical to the original."""
    op = provenance.get("op")
    if op == "mnist":
        return load_mnist(provenance["images_path"], provenance["labels_path"])
    if op == "cifar10":
        return load_cifar10(provenance["paths"])
    if op == "template-task":
        return make_template_task(
            _decode_array(provenance["templates"]),
            provenance["strength"],
            provenance["n_per_class"],
            grid=provenance["grid"],
            seed=provenance["seed"],
            split=provenance["split"],
        )
    if op == "randomize-labels":
        return randomize_labels(rebuild(provenance["input"]), provenance["seed"])
    if op == "subset":
        return subset(rebuild(provenance["input"]), provenance["count"], provenance["seed"])
    if op == "normalize":
        return normalize_channels(
            rebuild(provenance["input"]),
            mean=np.array(provenance["mean"]),
            std=np.array(provenance["std"]),
        )
    raise DataError(f"cannot rebuild provenance op {op!r}")


# ---- file loaders ----------------------------------------------------------


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, expected_magic):
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4)
        if len(header) != 4:
            raise DataError(f"{path}: truncated IDX header")
        magic = int.from_bytes(header, "big")
        if magic != expected_magic:
            raise DataError(f"{path}: IDX magic {magic}, expected {expected_magic}")
        ndim = magic & 0xFF
        dims = [int.from_bytes(fh.read(4), "big") for _ in range(ndim)]
        payload = fh.read()
    data = np.frombuffer(payload, dtype=np.uint8)
    expected = int(np.prod(dims))
    if data.size != expected:
        raise DataError(f"{path}: {data.size} payload bytes, expected {expected}")
    return data.reshape(dims)


def load_mnist(images_path, labels_path) -> LabeledDataset:
    """Parses the big-endian IDX pair; pixels scaled to [0, 1]."""
    images = _read_idx(images_path, MNIST_MAGIC_IMAGES)
    labels = _read_idx(labels_path, MNIST_MAGIC_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}"
        )
    if labels.size and labels.max() > 9:
        raise DataError(f"label {labels.max()} outside 0..9")
    scaled = (images.astype(np.float32) / np.float32(255.0))[:, :, :, None]
    prov = {"op": "mnist", "images_path": str(images_path), "labels_path": str(labels_path)}
    return LabeledDataset(scaled, labels.astype(np.int64), 10, prov)


def load_cifar10(paths) -> LabeledDataset:
    """Parses binary batches of 3073-byte records (label + planar RGB)."""
    paths = [str(p) for p in (paths if isinstance(paths, (list, tuple)) else [paths])]
    chunks = []
    label_chunks = []
    for path in paths:
        with _open_maybe_gzip(path) as fh:
            raw = np.frombuffer(fh.read(), dtype=np.uint8)
        if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES:
            raise DataError(
                f"{path}: size {raw.size} is not a positive multiple of {CIFAR_RECORD_BYTES}"
            )
        records = raw.reshape(-1, CIFAR_RECORD_BYTES)
        label_chunks.append(records[:, 0])
        chunks.append(records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    labels = np.concatenate(label_chunks)
    if labels.max() > 9:
        raise DataError(f"label {labels.max()} outside 0..9")
    images = (np.concatenate(chunks).astype(np.float32) / np.float32(255.0))
    stats_mean = images.mean(axis=(0, 1, 2), dtype=np.float64)
    stats_std = images.std(axis=(0, 1, 2), dtype=np.float64)
    prov = {
        "op": "cifar10",
        "paths": paths,
        "channel_stats": {"mean": stats_mean.tolist(), "std": stats_std.tolist()},
    }
    return LabeledDataset(images, labels.astype(np.int64), 10, prov)


def normalize_channels(ds: LabeledDataset, mean=None, std=None) -> LabeledDataset:
    """(x - mean) / std per channel; stats computed from ds when not given."""
    if mean is None or std is None:
        mean = ds.images.mean(axis=(0, 1, 2), dtype=np.float64)
        std = ds.images.std(axis=(0, 1, 2), dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if (std == 0).any():
        raise DataError("zero channel std, cannot normalize")
    images = ((ds.images.astype(np.float64) - mean) / std).astype(np.float32)
    prov = {
        "op": "normalize",
        "mean": mean.tolist(),
        "std": std.tolist(),
        "input": ds.provenance,
    }
    return LabeledDataset(images, ds.labels, ds.num_classes, prov)


# ---- synthetic task construction ------------------------------------------


def make_template_task(
    templates, strength, n_per_class, grid=3, seed=0, split="train"
) -> LabeledDataset:
    """Classification task: each example is a random deformation of its
    class template at the given strength.

    ``split`` selects a disjoint seed stream, so train and test examples
    never share a deformation.
    """
    templates = np.ascontiguousarray(templates, dtype=np.float32)
    if templates.ndim != 4 or templates.shape[0] < 2:
        raise DataError(f"templates must be (classes>=2, h, w, c), got {templates.shape}")
    if strength < 0 or n_per_class < 1:
        raise DataError("need strength >= 0 and n_per_class >= 1")
    classes = templates.shape[0]
    for a in range(classes):
        for b in range(a + 1, classes):
            if np.array_equal(templates[a], templates[b]):
                raise DataError(f"templates {a} and {b} are identical")
    n = classes * n_per_class
    labels = np.repeat(np.arange(classes, dtype=np.int64), n_per_class)
    seeds = child_seeds(child_seed(seed, "template-task", split), n, "example")
    images = np.empty((n,) + templates.shape[1:], dtype=np.float32)
    for i in range(n):
        spec = DeformationSpec(grid, float(strength), int(seeds[i]))
        images[i] = deform_image(templates[labels[i]], spec)[0]
    prov = {
        "op": "template-task",
        "templates": _encode_array(templates),
        "strength": float(strength),
        "n_per_class": int(n_per_class),
        "grid": int(grid),
        "seed": int(seed),
        "split": split,
    }
    return LabeledDataset(images, labels, classes, prov)


def randomize_labels(ds: LabeledDataset, seed) -> LabeledDataset:
    """Replaces labels with i.i.d. uniform draws; images are shared, not copied."""
    labels = rng_from(seed, "random-labels").integers(0, ds.num_classes, size=len(ds))
    prov = {"op": "randomize-labels", "seed": int(seed), "input": ds.provenance}
    return LabeledDataset(ds.images, labels.astype(np.int64), ds.num_classes, prov)


def subset(ds: LabeledDataset, count, seed) -> LabeledDataset:
    """Seeded sample of ``count`` examples without replacement."""
    if count < 1 or count > len(ds):
        raise DataError(f"subset count {count} outside 1..{len(ds)}")
    idx = rng_from(seed, "subset").choice(len(ds), size=count, replace=False)
    prov = {"op": "subset", "count": int(count), "seed": int(seed), "input": ds.provenance}
    return LabeledDataset(ds.images[idx], ds.labels[idx], ds.num_classes, prov)


# ---- export ----------------------------------------------------------------


def export_dataset(ds: LabeledDataset, out_dir):
    """Writes one PNM per example plus a labels.csv manifest; returns the dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(len(ds) - 1)))
    with open(out / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "label"])
        for i in range(len(ds)):
            name = f"{i:0{width}d}.ppm" if ds.images.shape[3] == 3 else f"{i:0{width}d}.pgm"
            write_pnm(out / name, ds.images[i])
            writer.writerow([name, int(ds.labels[i])])
    return out


# ---- dataset discovery -----------------------------------------------------


def dataset_root():
    """Directory named by the dataset-root env var, or None."""
    root = os.environ.get(DATA_ROOT_ENV)
    return Path(root) if root else None


def _first_existing(cands):
    for cand in cands:
        if cand.exists():
            return cand
    return None


def find_mnist(root=None, split="train"):
    """(images_path, labels_path) under the data root, or None if absent."""
    root = Path(root) if root else dataset_root()
    if root is None:
        return None
    stem = "train" if split == "train" else "t10k"
    img = _first_existing(
        [root / f"{stem}-images-idx3-ubyte", root / f"{stem}-images-idx3-ubyte.gz",
         root / "mnist" / f"{stem}-images-idx3-ubyte", root / "mnist" / f"{stem}-images-idx3-ubyte.gz"]
    )
    lbl = _first_existing(
        [root / f"{stem}-labels-idx1-ubyte", root / f"{stem}-labels-idx1-ubyte.gz",
         root / "mnist" / f"{stem}-labels-idx1-ubyte", root / "mnist" / f"{stem}-labels-idx1-ubyte.gz"]
    )
    if img is None or lbl is None:
        return None
    return img, lbl


def find_cifar10(root=None, split="train"):
    """List of binary batch paths under the data root, or None if absent."""
    root = Path(root) if root else dataset_root()
    if root is None:
        return None
    for base in (root, root / "cifar-10-batches-bin", root / "cifar10"):
        if split == "train":
            paths = [base / f"data_batch_{i}.bin" for i in range(1, 6)]
        else:
            paths = [base / "test_batch.bin"]
        if all(p.exists() for p in paths):
            return paths
    return None
