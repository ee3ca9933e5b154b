"""Corpus ingestion, test-image synthesis and leave-one-out splits."""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import read_mask

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SHAPE_SUFFIXES = (".png", ".pgm")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class TestCase:
    image: np.ndarray
    ground_truth: np.ndarray
    occlusion_rect: tuple = None
    snr_db: float = None
    source_id: str = ""


@dataclass(frozen=True)
class Split:
    train_ids: tuple
    test_id: str

    def __post_init__(self):
        if self.test_id in self.train_ids:
            raise ValueError("test shape must not be part of the training split")


def load_shape_dir(path, threshold=128):
    """Load ``<path>/<class>/<shape>.png|pgm`` as [(mask, class_name, shape_id)].

    Order is sorted by class name then file name.
    """
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"{root}: not a directory")
    out, dims = [], None
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(class_dir.iterdir()):
            if f.suffix.lower() not in SHAPE_SUFFIXES:
                continue
            try:
                mask = read_mask(f, threshold)
            except OSError as exc:
                raise CorpusError(f"{f}: unreadable ({exc})") from exc
            if dims is None:
                dims = mask.shape
            elif mask.shape != dims:
                raise CorpusError(f"{f}: dims {mask.shape} differ from {dims}")
            out.append((mask, class_dir.name, f"{class_dir.name}/{f.stem}"))
    if not out:
        raise CorpusError(f"{root}: no shapes found")
    return out


def _open_maybe_gz(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path):
    """Read an IDX file (ubyte payload) into a numpy array."""
    with _open_maybe_gz(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise CorpusError(f"{path}: truncated header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC):
        raise CorpusError(f"{path}: bad magic {magic:#010x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", data[4:4 + 4 * ndim])
    payload = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim)
    if payload.size != int(np.prod(dims)):
        raise CorpusError(f"{path}: expected {int(np.prod(dims))} values, found {payload.size}")
    return magic, payload.reshape(dims)


def write_idx(path, array):
    arr = np.asarray(array, dtype=np.uint8)
    magic = IDX_IMAGES_MAGIC if arr.ndim == 3 else IDX_LABELS_MAGIC
    if arr.ndim not in (1, 3):
        raise ValueError("IDX writer supports label vectors and image stacks only")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def load_idx_digits(images_path, labels_path, per_class=10, binarize_threshold=128):
    """First ``per_class`` images of every label, in file order, as binary masks."""
    magic_i, images = read_idx(images_path)
    magic_l, labels = read_idx(labels_path)
    if magic_i != IDX_IMAGES_MAGIC:
        raise CorpusError(f"{images_path}: not an image file (magic {magic_i:#x})")
    if magic_l != IDX_LABELS_MAGIC:
        raise CorpusError(f"{labels_path}: not a label file (magic {magic_l:#x})")
    if len(images) != len(labels):
        raise CorpusError(f"{len(images)} images but {len(labels)} labels")
    taken = {}
    out = []
    for k, (img, lab) in enumerate(zip(images, labels)):
        lab = int(lab)
        if taken.get(lab, 0) >= per_class:
            continue
        taken[lab] = taken.get(lab, 0) + 1
        out.append((img >= binarize_threshold, str(lab), f"{lab}/{k:05d}"))
    out.sort(key=lambda item: int(item[1]))
    return out


def check_rect(rect, dims):
    x, y, w, h = rect
    H, W = dims
    if w < 1 or h < 1 or x < 0 or y < 0 or x + w > W or y + h > H:
        raise ValueError(f"rectangle {rect} does not fit a {H}x{W} grid")


def synthesize_test(mask, occlusion=None, snr_db=None, fg=200.0, bg=50.0, rng=None,
                    source_id=""):
    """Two-valued image of ``mask`` with an optional occluder and white noise.

    ``occlusion`` is ``(x, y, w, h)`` in pixels and is painted with the
    background value. The noise variance makes
    ``10 log10(signal_power / noise_var) = snr_db`` where signal power is the
    mean of ``(fg - bg)**2`` over the visible foreground.
    """
    mask = np.asarray(mask, dtype=bool)
    visible = mask.copy()
    if occlusion is not None:
        check_rect(occlusion, mask.shape)
        x, y, w, h = occlusion
        visible[y:y + h, x:x + w] = False
    image = np.where(visible, fg, bg).astype(float)
    if snr_db is not None:
        if rng is None:
            raise ValueError("noise requested without a random generator")
        signal_power = float(np.mean((image[visible] - bg) ** 2)) if visible.any() else (fg - bg) ** 2
        noise_var = signal_power / 10.0 ** (snr_db / 10.0)
        image = image + rng.normal(0.0, np.sqrt(noise_var), size=image.shape)
    return TestCase(image, mask, tuple(occlusion) if occlusion is not None else None,
                    snr_db, source_id)


def leave_one_out(corpus_ids, index):
    ids = list(corpus_ids)
    if not 0 <= index < len(ids):
        raise IndexError(f"index {index} outside corpus of {len(ids)}")
    return Split(tuple(ids[:index] + ids[index + 1:]), ids[index])
