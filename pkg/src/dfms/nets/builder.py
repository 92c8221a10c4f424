"""
Turns a ``NetworkSpec`` into a torch module, samples latent vectors, and stores
networks on disk with their spec.
"""

from pathlib import Path
from typing import List, Tuple, Union

import torch
from loguru import logger
from torch import nn

from dfms.core.errors import CheckpointError, InvariantError
from dfms.nets.spec import LayerSpec, NetworkSpec, infer_shapes

NETWORK_FORMAT_VERSION = 1

Seed = Union[int, torch.Generator]


class ResidualBlock(nn.Module):
    """Two 3x3 conv/BN layers with an identity or 1x1 projection shortcut."""

    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, stride, 1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, 1, 1, bias=False),
            nn.BatchNorm2d(out_channels),
        )
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x) + self.shortcut(x)


def _activation(name: str) -> nn.Module:
    if name == "relu":
        return nn.ReLU(inplace=True)
    if name == "leaky_relu":
        return nn.LeakyReLU(0.2, inplace=True)
    if name == "tanh":
        return nn.Tanh()
    if name == "sigmoid":
        return nn.Sigmoid()
    return nn.Identity()


def _layer_modules(layer: LayerSpec, in_shape: Tuple[int, ...]) -> List[nn.Module]:
    in_ch = in_shape[0]
    has_norm = layer.norm == "batch"
    modules: List[nn.Module] = []
    if layer.kind == "conv":
        modules.append(nn.Conv2d(in_ch, layer.out, layer.kernel, layer.stride, layer.padding, bias=not has_norm))
    elif layer.kind == "convt":
        modules.append(
            nn.ConvTranspose2d(in_ch, layer.out, layer.kernel, layer.stride, layer.padding, bias=not has_norm)
        )
    elif layer.kind == "resblock":
        modules.append(ResidualBlock(in_ch, layer.out, layer.stride))
        has_norm = False
    elif layer.kind == "linear":
        modules.append(nn.Linear(in_ch, layer.out))
    elif layer.kind == "flatten":
        modules.append(nn.Flatten())
    elif layer.kind == "maxpool":
        modules.append(nn.MaxPool2d(layer.kernel))
    elif layer.kind == "avgpool":
        modules.append(nn.AvgPool2d(layer.kernel))

    if has_norm:
        if layer.kind == "linear":
            modules.append(nn.BatchNorm1d(layer.out))
        else:
            modules.append(nn.BatchNorm2d(layer.out))
    modules.append(_activation(layer.act))
    return modules


class PlanNetwork(nn.Module):
    """Sequential network built from a layer plan.

    Flat inputs feeding a conv stack are reshaped to ``(N, F, 1, 1)``; a discriminator's
    ``(N, 1)`` output is squeezed to ``(N,)``.
    """

    def __init__(self, spec: NetworkSpec):
        super().__init__()
        shapes = infer_shapes(spec)
        self.spec = spec
        in_shapes = [tuple(spec.input_shape)] + shapes[:-1]
        modules: List[nn.Module] = []
        for layer, in_shape in zip(spec.layers, in_shapes):
            if len(in_shape) == 1 and layer.kind in ("conv", "convt"):
                in_shape = (in_shape[0], 1, 1)
            modules.extend(_layer_modules(layer, in_shape))
        self.body = nn.Sequential(*modules)
        self._unflatten_input = len(spec.input_shape) == 1 and spec.layers[0].kind in ("conv", "convt")
        self._squeeze_output = spec.role == "discriminator" and tuple(spec.output_shape) == (1,)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self._unflatten_input and x.dim() == 2:
            x = x[:, :, None, None]
        out = self.body(x)
        if self._squeeze_output:
            out = out.reshape(out.shape[0])
        return out


def _resolve_seed(rng: Seed) -> int:
    if isinstance(rng, torch.Generator):
        return int(torch.randint(0, 2**31 - 1, (1,), generator=rng).item())
    return int(rng)


def init_weights(module: nn.Module) -> None:
    """DCGAN initialization: conv weights ~ N(0, 0.02), BN scale ~ N(1, 0.02), BN shift 0."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm1d)):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)


def build_network(spec: NetworkSpec, rng: Seed = 0) -> PlanNetwork:
    """Instantiate a network from its spec.

    Construction runs under a forked torch RNG seeded from ``rng`` so the same seed
    always yields the same parameters and the global RNG is left untouched.

    Args:
        spec: Architecture description
        rng: Integer seed or torch generator to draw one from

    Returns:
        The parameterized network, in training mode
    """
    seed = _resolve_seed(rng)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        network = PlanNetwork(spec)
        network.apply(init_weights)
    n_params = sum(p.numel() for p in network.parameters())
    logger.debug(f"Built {spec.role} network: {len(spec.layers)} layers, {n_params} parameters")
    return network


def sample_latent(
    batch: int,
    m: int,
    rng: torch.Generator,
    device: Union[str, torch.device] = "cpu",
) -> torch.Tensor:
    """Draw a latent batch ``z`` of shape ``(batch, m)`` with i.i.d. N(0, 1) entries.

    Sampling happens on the generator's device and is moved to ``device`` afterwards,
    so a fixed generator state gives the same values everywhere.
    """
    if batch <= 0 or m <= 0:
        raise InvariantError(f"latent batch dimensions must be positive, got ({batch}, {m})")
    return torch.randn((batch, m), generator=rng).to(device)


def save_network(path: Path, network: PlanNetwork) -> None:
    """Store a network's spec text and parameters with a format-version tag."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": NETWORK_FORMAT_VERSION,
            "spec": network.spec.to_text(),
            "state_dict": network.state_dict(),
        },
        path,
    )
    logger.info(f"Saved {network.spec.role} network to {path}")


def load_network(path: Path, map_location: Union[str, torch.device] = "cpu") -> PlanNetwork:
    """Load a network stored by :func:`save_network`."""
    try:
        payload = torch.load(Path(path), map_location=map_location, weights_only=False)
    except (OSError, RuntimeError) as e:
        raise CheckpointError(f"cannot read network file {path}: {e}") from e
    version = payload.get("format_version")
    if version != NETWORK_FORMAT_VERSION:
        raise CheckpointError(f"{path}: network format version {version}, expected {NETWORK_FORMAT_VERSION}")
    spec = NetworkSpec.from_text(payload["spec"])
    network = PlanNetwork(spec)
    network.load_state_dict(payload["state_dict"])
    return network
