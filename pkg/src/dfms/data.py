"""
Datasets: labeled corpora for victims and evaluation, and proxy images for the GAN.

Sources are named by a short string:

- ``cifar10``, ``cifar100``, ``svhn``, ``mnist``: torchvision downloads under
  ``settings.DATA_ROOT``. ``cifar100:3,17,42`` keeps only the listed classes
  (relabelled 0..n-1). MNIST digits are padded to 32x32.
- ``folder:<dir>``: one sub-directory per class, classes in sorted order.
- any directory path: a synthetic corpus or flat image folder (proxy only).

Every image comes back as float32 ``(C, H, W)`` in [-1, 1] with the requested channel
count and side.
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
import torchvision
from loguru import logger
from PIL import Image
from torch.utils.data import Dataset, TensorDataset

from dfms.core.config import settings
from dfms.core.errors import InvariantError
from dfms.synth.corpus import IMAGE_SUFFIXES, load_corpus

TORCHVISION_SOURCES = ("cifar10", "cifar100", "svhn", "mnist")


def _normalize(pixels: np.ndarray) -> torch.Tensor:
    """uint8 ``(N, C, H, W)`` -> float32 in [-1, 1]."""
    return torch.from_numpy(pixels.astype(np.float32) / 127.5 - 1.0)


def fit_images(images: torch.Tensor, channels: int, image_size: int) -> torch.Tensor:
    """Match an image batch to ``(channels, image_size, image_size)``."""
    if images.shape[1] != channels:
        if images.shape[1] == 1:
            images = images.repeat(1, channels, 1, 1)
        elif channels == 1:
            weights = torch.tensor([0.299, 0.587, 0.114], dtype=images.dtype).view(1, 3, 1, 1)
            images = (images[:, :3] * weights).sum(dim=1, keepdim=True)
        else:
            raise InvariantError(f"cannot map {images.shape[1]} channels to {channels}")
    if images.shape[-1] != image_size or images.shape[-2] != image_size:
        images = F.interpolate(images, size=(image_size, image_size), mode="bilinear", align_corners=False)
    return images.contiguous()


def _torchvision_arrays(name: str, train: bool, root: Path) -> Tuple[np.ndarray, np.ndarray]:
    root.mkdir(parents=True, exist_ok=True)
    if name == "cifar10":
        ds = torchvision.datasets.CIFAR10(root, train=train, download=True)
        return np.transpose(ds.data, (0, 3, 1, 2)), np.asarray(ds.targets)
    if name == "cifar100":
        ds = torchvision.datasets.CIFAR100(root, train=train, download=True)
        return np.transpose(ds.data, (0, 3, 1, 2)), np.asarray(ds.targets)
    if name == "svhn":
        ds = torchvision.datasets.SVHN(root, split="train" if train else "test", download=True)
        return ds.data, np.asarray(ds.labels)
    ds = torchvision.datasets.MNIST(root, train=train, download=True)
    digits = np.pad(ds.data.numpy(), ((0, 0), (2, 2), (2, 2)))
    return digits[:, np.newaxis], ds.targets.numpy()


def _folder_arrays(root: Path) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not classes:
        raise InvariantError(f"{root} has no class sub-directories")
    images, labels = [], []
    for label, name in enumerate(classes):
        for path in sorted((root / name).iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            with Image.open(path) as im:
                images.append(np.transpose(np.asarray(im.convert("RGB")), (2, 0, 1)))
            labels.append(label)
    sizes = {img.shape for img in images}
    if len(sizes) > 1:
        raise InvariantError(f"images under {root} have mixed shapes {sorted(sizes)}")
    return np.stack(images) if images else np.zeros((0, 3, 0, 0), np.uint8), np.asarray(labels), classes


def _parse_classes(spec: str) -> List[int]:
    try:
        return [int(c) for c in spec.split(",") if c.strip()]
    except ValueError:
        raise InvariantError(f"class filter must be comma-separated integers, got '{spec}'") from None


def load_labeled(
    source: str,
    train: bool = True,
    channels: int = 3,
    image_size: int = 32,
    root: Optional[Path] = None,
) -> TensorDataset:
    """Load a labeled dataset as ``TensorDataset(images, labels)``."""
    root = Path(root) if root is not None else settings.DATA_ROOT
    name, _, arg = source.partition(":")
    if name == "folder":
        pixels, labels, _ = _folder_arrays(Path(arg))
    elif name in TORCHVISION_SOURCES:
        pixels, labels = _torchvision_arrays(name, train, root)
        if arg:
            keep = _parse_classes(arg)
            mask = np.isin(labels, keep)
            remap = {c: i for i, c in enumerate(keep)}
            pixels, labels = pixels[mask], np.asarray([remap[int(c)] for c in labels[mask]])
    else:
        raise InvariantError(
            f"unknown dataset source '{source}', expected one of {TORCHVISION_SOURCES} or folder:<dir>"
        )
    if len(labels) == 0:
        return TensorDataset(torch.zeros((0, channels, image_size, image_size)), torch.zeros(0, dtype=torch.long))
    images = fit_images(_normalize(pixels), channels, image_size)
    logger.info(f"Loaded {len(labels)} {'train' if train else 'test'} images from {source}")
    return TensorDataset(images, torch.as_tensor(labels, dtype=torch.long))


def load_proxy(
    source: Union[str, Path],
    channels: int = 3,
    image_size: int = 32,
    root: Optional[Path] = None,
) -> torch.Tensor:
    """Load proxy images (labels, if any, are discarded) as an ImageBatch."""
    path = Path(source)
    if path.is_dir():
        images = torch.from_numpy(load_corpus(path, channels))
        if images.shape[0] == 0:
            return torch.zeros((0, channels, image_size, image_size))
        return fit_images(images, channels, image_size)
    return load_labeled(str(source), train=True, channels=channels, image_size=image_size, root=root).tensors[0]


def dataset_tensors(dataset: Union[Dataset, Tuple[torch.Tensor, torch.Tensor]]) -> Tuple[torch.Tensor, torch.Tensor]:
    """``(images, labels)`` of a ``TensorDataset``, a pair, or any map-style dataset."""
    if isinstance(dataset, TensorDataset):
        return dataset.tensors[0], dataset.tensors[1]
    if isinstance(dataset, tuple):
        return dataset[0], dataset[1]
    items = [dataset[i] for i in range(len(dataset))]
    if not items:
        return torch.zeros(0), torch.zeros(0, dtype=torch.long)
    return torch.stack([x for x, _ in items]), torch.as_tensor([int(y) for _, y in items])
