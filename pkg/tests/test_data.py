"""
Tests for dataset loading: channel/size fitting, proxy folders and labeled folders.
"""

import numpy as np
import pytest
import torch
from PIL import Image
from torch.utils.data import TensorDataset

from dfms.core.errors import InvariantError
from dfms.data import dataset_tensors, fit_images, load_labeled, load_proxy


def _write_png(path, value, mode="L", size=8):
    path.parent.mkdir(parents=True, exist_ok=True)
    shape = (size, size) if mode == "L" else (size, size, 3)
    Image.fromarray(np.full(shape, value, dtype=np.uint8)).save(path)


def test_fit_images_channels_and_size():
    grey = torch.zeros((2, 1, 16, 16))
    assert fit_images(grey, 3, 8).shape == (2, 3, 8, 8)
    color = torch.rand((2, 3, 8, 8))
    fitted = fit_images(color, 1, 8)
    expected = 0.299 * color[:, 0] + 0.587 * color[:, 1] + 0.114 * color[:, 2]
    assert torch.allclose(fitted[:, 0], expected, atol=1e-6)
    with pytest.raises(InvariantError):
        fit_images(torch.zeros((1, 2, 8, 8)), 3, 8)


def test_load_proxy_from_flat_folder(tmp_path):
    for i, value in enumerate([0, 255, 255]):
        _write_png(tmp_path / "proxy" / f"{i}.png", value, size=16)
    proxy = load_proxy(tmp_path / "proxy", channels=1, image_size=8)
    assert proxy.shape == (3, 1, 8, 8)
    assert torch.allclose(proxy[0], torch.full((1, 8, 8), -1.0))
    assert torch.allclose(proxy[1], torch.ones((1, 8, 8)))


def test_load_proxy_empty_folder(tmp_path):
    (tmp_path / "empty").mkdir()
    assert load_proxy(tmp_path / "empty", channels=3, image_size=8).shape == (0, 3, 8, 8)


def test_load_labeled_folder(tmp_path):
    root = tmp_path / "labeled"
    _write_png(root / "cat" / "a.png", 10, mode="RGB")
    _write_png(root / "cat" / "b.png", 20, mode="RGB")
    _write_png(root / "dog" / "a.png", 200, mode="RGB")
    (root / "dog" / "notes.txt").write_text("skipped")
    dataset = load_labeled(f"folder:{root}", channels=3, image_size=8)
    images, labels = dataset.tensors
    assert images.shape == (3, 3, 8, 8)
    assert labels.tolist() == [0, 0, 1]
    assert images.min() >= -1 and images.max() <= 1


def test_load_labeled_errors(tmp_path):
    with pytest.raises(InvariantError):
        load_labeled("imagenet")
    (tmp_path / "flat").mkdir()
    with pytest.raises(InvariantError):
        load_labeled(f"folder:{tmp_path / 'flat'}")


def test_dataset_tensors():
    images, labels = torch.zeros((3, 1, 4, 4)), torch.tensor([0, 1, 2])
    for dataset in (TensorDataset(images, labels), (images, labels)):
        x, y = dataset_tensors(dataset)
        assert x.shape == (3, 1, 4, 4)
        assert y.tolist() == [0, 1, 2]
    x, y = dataset_tensors([(images[i], int(labels[i])) for i in range(3)])
    assert x.shape == (3, 1, 4, 4)
    assert y.tolist() == [0, 1, 2]
