"""MNIST IDX and CIFAR-10 binary readers, plus area-average downsampling."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .circuits import ConfigError
from .encoding import ImageTensor, LUMA

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32
RESOLUTIONS = (8, 16, 32)


class FormatError(ValueError):
    """Malformed dataset bytes (bad magic, wrong size, bad label)."""


class LengthError(FormatError):
    """Payload shorter or longer than the header declares."""


@dataclass(frozen=True)
class IdxImages:
    count: int
    rows: int
    cols: int
    pixels: bytes


@dataclass(frozen=True)
class IdxLabels:
    count: int
    labels: bytes


def parse_idx(data: bytes) -> Union[IdxImages, IdxLabels]:
    """Parse an IDX image (magic 0x803) or label (magic 0x801) file."""
    data = bytes(data)
    if len(data) < 8:
        raise FormatError(f"IDX header needs at least 8 bytes, got {len(data)}")
    magic, count = struct.unpack(">II", data[:8])
    if magic == IDX_LABELS_MAGIC:
        payload = data[8:]
        if len(payload) != count:
            raise LengthError(f"header declares {count} labels, payload holds {len(payload)}")
        return IdxLabels(count, payload)
    if magic == IDX_IMAGES_MAGIC:
        if len(data) < 16:
            raise FormatError("IDX image header needs 16 bytes")
        rows, cols = struct.unpack(">II", data[8:16])
        payload = data[16:]
        if len(payload) != count * rows * cols:
            raise LengthError(
                f"header declares {count}x{rows}x{cols} pixels, payload holds {len(payload)}"
            )
        return IdxImages(count, rows, cols, payload)
    raise FormatError(f"unsupported IDX magic 0x{magic:08x}")


def parse_cifar10_batch(data: bytes) -> list[tuple[int, bytes]]:
    """Split a CIFAR-10 binary batch into ``(label, 3072 channel-planar bytes)`` records."""
    data = bytes(data)
    if len(data) % CIFAR_RECORD:
        raise FormatError(f"{len(data)} bytes is not a multiple of {CIFAR_RECORD}")
    records = []
    for off in range(0, len(data), CIFAR_RECORD):
        label = data[off]
        if label > 9:
            raise FormatError(f"record {off // CIFAR_RECORD} has label {label}")
        records.append((label, data[off + 1 : off + CIFAR_RECORD]))
    return records


def read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return raw


@dataclass
class DatasetSlice:
    images: list
    labels: list
    source: str
    resolution: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise FormatError("images and labels differ in length")
        if any(not 0 <= lab < 10 for lab in self.labels):
            raise FormatError("labels must lie in 0..9")

    def __len__(self):
        return len(self.images)

    def pixel_matrix(self) -> np.ndarray:
        return np.stack([im.pixels for im in self.images]) if self.images else np.zeros((0, 0))


def pad_to(image: ImageTensor, size: int) -> ImageTensor:
    """Center-pad with zeros to ``size x size``."""
    arr = image.as_array()
    h, w = arr.shape
    if h > size or w > size:
        raise ConfigError(f"{w}x{h} image does not fit in {size}x{size}")
    top, left = (size - h) // 2, (size - w) // 2
    out = np.zeros((size, size))
    out[top : top + h, left : left + w] = arr
    return ImageTensor(size, size, out)


def downsample(image: ImageTensor, target: int) -> ImageTensor:
    """Area-average to ``target x target``; 28x28 inputs are first center-padded to 32x32."""
    if image.width == image.height == 28:
        image = pad_to(image, 32)
    if image.width % target or image.height % target:
        raise ConfigError(f"{image.width}x{image.height} is not divisible into {target}x{target}")
    bh, bw = image.height // target, image.width // target
    blocks = image.as_array().reshape(target, bh, target, bw)
    return ImageTensor(target, target, blocks.mean(axis=(1, 3)))


def load_mnist(images_path, labels_path, resolution: int = 8, limit=None) -> DatasetSlice:
    if resolution not in RESOLUTIONS:
        raise ConfigError(f"resolution must be one of {RESOLUTIONS}")
    imgs = parse_idx(read_bytes(images_path))
    labs = parse_idx(read_bytes(labels_path))
    if not isinstance(imgs, IdxImages) or not isinstance(labs, IdxLabels):
        raise FormatError("expected an IDX image file and an IDX label file")
    if imgs.count != labs.count:
        raise FormatError(f"{imgs.count} images but {labs.count} labels")
    count = imgs.count if limit is None else min(limit, imgs.count)
    raw = np.frombuffer(imgs.pixels, dtype=np.uint8).reshape(imgs.count, imgs.rows, imgs.cols)
    images = [
        downsample(ImageTensor(imgs.cols, imgs.rows, raw[i] / 255.0), resolution)
        for i in range(count)
    ]
    return DatasetSlice(images, list(labs.labels[:count]), "mnist", resolution)


def cifar_record_to_gray(pixels: bytes) -> ImageTensor:
    planes = np.frombuffer(pixels, dtype=np.uint8).reshape(3, 32 * 32).astype(np.float64)
    return ImageTensor(32, 32, LUMA @ planes / 255.0)


def load_cifar10(paths, resolution: int = 16, limit=None) -> DatasetSlice:
    if resolution not in RESOLUTIONS:
        raise ConfigError(f"resolution must be one of {RESOLUTIONS}")
    if isinstance(paths, (str, Path)):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        for label, pixels in parse_cifar10_batch(read_bytes(path)):
            if limit is not None and len(images) >= limit:
                break
            images.append(downsample(cifar_record_to_gray(pixels), resolution))
            labels.append(label)
    return DatasetSlice(images, labels, "cifar10", resolution)


def class_filter(data: DatasetSlice, digit: int) -> DatasetSlice:
    if not 0 <= digit <= 9:
        raise ConfigError(f"class id {digit} outside 0..9")
    keep = [i for i, lab in enumerate(data.labels) if lab == digit]
    return DatasetSlice(
        [data.images[i] for i in keep], [data.labels[i] for i in keep], data.source, data.resolution
    )
