"""
Default layer plans.

The generator upsamples a latent vector from 4x4 with stride-2 transposed convolutions
(BN + ReLU, tanh output); the discriminator mirrors it (LeakyReLU, sigmoid output).
Classifier plans double as clone and victim architectures.
"""

import math
from typing import Callable, Dict, List

from dfms.core.errors import InvariantError
from dfms.nets.spec import LayerSpec, NetworkSpec


def _upsample_steps(image_size: int) -> int:
    steps = math.log2(image_size / 4)
    if image_size < 8 or steps != int(steps):
        raise InvariantError(f"image_size must be a power of two >= 8, got {image_size}")
    return int(steps)


def generator_spec(latent_dim: int = 100, channels: int = 3, image_size: int = 32, width: int = 64) -> NetworkSpec:
    """m -> 4x4x(width*2^(n-1)) -> ... -> width -> channels, n = log2(image_size/4)."""
    steps = _upsample_steps(image_size)
    widths = [width * 2 ** (steps - 1 - i) for i in range(steps)]
    layers = [LayerSpec(kind="convt", out=widths[0], kernel=4, stride=1, padding=0, norm="batch", act="relu")]
    for w in widths[1:]:
        layers.append(LayerSpec(kind="convt", out=w, kernel=4, stride=2, padding=1, norm="batch", act="relu"))
    layers.append(LayerSpec(kind="convt", out=channels, kernel=4, stride=2, padding=1, act="tanh"))
    return NetworkSpec(
        role="generator",
        input_shape=(latent_dim,),
        output_shape=(channels, image_size, image_size),
        layers=layers,
    )


def discriminator_spec(channels: int = 3, image_size: int = 32, width: int = 64) -> NetworkSpec:
    steps = _upsample_steps(image_size)
    layers = [LayerSpec(kind="conv", out=width, kernel=4, stride=2, padding=1, act="leaky_relu")]
    for i in range(1, steps):
        layers.append(
            LayerSpec(kind="conv", out=width * 2**i, kernel=4, stride=2, padding=1, norm="batch", act="leaky_relu")
        )
    layers.append(LayerSpec(kind="conv", out=1, kernel=4, stride=1, padding=0, act="sigmoid"))
    layers.append(LayerSpec(kind="flatten"))
    return NetworkSpec(
        role="discriminator",
        input_shape=(channels, image_size, image_size),
        output_shape=(1,),
        layers=layers,
    )


def _conv(out: int) -> LayerSpec:
    return LayerSpec(kind="conv", out=out, kernel=3, stride=1, padding=1, norm="batch", act="relu")


def _pool() -> LayerSpec:
    return LayerSpec(kind="maxpool", kernel=2)


def _cnn2(channels: int, num_classes: int, image_size: int) -> List[LayerSpec]:
    return [_conv(32), _pool(), _conv(64), _pool(), LayerSpec(kind="flatten"),
            LayerSpec(kind="linear", out=num_classes)]


def _cnn4(channels: int, num_classes: int, image_size: int) -> List[LayerSpec]:
    layers: List[LayerSpec] = []
    for width in (32, 64, 128, 256):
        layers += [_conv(width), _pool()]
    return layers + [LayerSpec(kind="flatten"), LayerSpec(kind="linear", out=num_classes)]


def _cnn6(channels: int, num_classes: int, image_size: int) -> List[LayerSpec]:
    layers: List[LayerSpec] = []
    for width in (64, 128, 256):
        layers += [_conv(width), _conv(width), _pool()]
    return layers + [
        LayerSpec(kind="avgpool", kernel=image_size // 8),
        LayerSpec(kind="flatten"),
        LayerSpec(kind="linear", out=num_classes),
    ]


def _resnet8(channels: int, num_classes: int, image_size: int) -> List[LayerSpec]:
    return [
        _conv(32),
        LayerSpec(kind="resblock", out=32, stride=1, act="relu"),
        LayerSpec(kind="resblock", out=64, stride=2, act="relu"),
        LayerSpec(kind="resblock", out=128, stride=2, act="relu"),
        LayerSpec(kind="avgpool", kernel=image_size // 4),
        LayerSpec(kind="flatten"),
        LayerSpec(kind="linear", out=num_classes),
    ]


CLASSIFIER_PLANS: Dict[str, Callable[[int, int, int], List[LayerSpec]]] = {
    "cnn2": _cnn2,
    "cnn4": _cnn4,
    "cnn6": _cnn6,
    "resnet8": _resnet8,
}


def classifier_spec(
    arch: str = "cnn4",
    channels: int = 3,
    num_classes: int = 10,
    image_size: int = 32,
    role: str = "clone",
) -> NetworkSpec:
    """Clone or victim plan by architecture name (``cnn2``, ``cnn4``, ``cnn6``, ``resnet8``)."""
    if arch not in CLASSIFIER_PLANS:
        raise InvariantError(f"unknown classifier architecture '{arch}', expected one of {sorted(CLASSIFIER_PLANS)}")
    if role not in ("clone", "victim"):
        raise InvariantError(f"classifier role must be clone or victim, got '{role}'")
    return NetworkSpec(
        role=role,
        input_shape=(channels, image_size, image_size),
        output_shape=(num_classes,),
        layers=CLASSIFIER_PLANS[arch](channels, num_classes, image_size),
    )
