"""
Image batches on the wire: base64 of a packed uint8 ``(n, c, h, w)`` tensor.

Pixels in [-1, 1] are quantized as ``round((x + 1) * 127.5)``, the inverse of the
corpus normalization, so stored 8-bit images travel losslessly.
"""

import base64
import binascii
from typing import List, Sequence, Tuple

import numpy as np
import torch

from dfms.core.errors import InvariantError


def encode_images(batch: torch.Tensor) -> Tuple[str, List[int]]:
    """Pack an ImageBatch into ``(base64 payload, shape)``."""
    if batch.dim() != 4:
        raise InvariantError(f"bad_shape: image batch must be rank 4, got {tuple(batch.shape)}")
    pixels = torch.round((batch.detach().float().cpu().clamp(-1.0, 1.0) + 1.0) * 127.5)
    packed = pixels.to(torch.uint8).numpy()
    return base64.b64encode(packed.tobytes()).decode("ascii"), list(packed.shape)


def decode_images(payload: str, shape: Sequence[int]) -> torch.Tensor:
    """Unpack a payload into a float32 ImageBatch in [-1, 1].

    Raises:
        InvariantError: malformed base64, a non rank-4 shape, or a byte count
            that does not match the shape
    """
    if len(shape) != 4 or any(int(d) < 0 for d in shape):
        raise InvariantError(f"bad_shape: shape must be [n, c, h, w], got {list(shape)}")
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as e:
        raise InvariantError(f"bad_shape: images are not valid base64 ({e})") from e
    expected = int(np.prod([int(d) for d in shape]))
    if len(raw) != expected:
        raise InvariantError(f"bad_shape: {len(raw)} bytes do not fill shape {list(shape)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape([int(d) for d in shape])
    return torch.from_numpy(pixels.astype(np.float32) / 127.5 - 1.0)
