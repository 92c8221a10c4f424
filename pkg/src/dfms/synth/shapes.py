"""
Random-shape image rendering.

An image is a handful of filled shapes (triangles, rectangles, circles, ellipses) of
random size, position and color drawn onto a square canvas, the uncovered pixels
painted one random background color, then box-blurred, downscaled and optionally
converted to grey. Everything is driven by one integer seed.
"""

from typing import Dict, FrozenSet, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import ndimage
from skimage import draw, transform

ShapeKind = Literal["triangle", "rectangle", "circle", "ellipse"]

ALL_SHAPES: FrozenSet[str] = frozenset({"triangle", "rectangle", "circle", "ellipse"})

# ITU-R BT.601 luma weights
LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ShapeImageSpec(BaseModel):
    """Parameters of one family of shape images."""

    model_config = ConfigDict(frozen=True)

    canvas_size: int = 100
    output_size: int = 32
    num_shapes: int = 50
    min_size: int = 20
    max_size: int = 50
    shape_palette: FrozenSet[ShapeKind] = ALL_SHAPES
    blur_kernel: int = 4
    blur_border: Literal["zero", "reflect"] = "zero"
    greyscale: bool = True

    @model_validator(mode="after")
    def check_invariants(self) -> "ShapeImageSpec":
        if not 0 < self.min_size <= self.max_size <= self.canvas_size:
            raise ValueError(
                "invariant 0 < min_size <= max_size <= canvas_size violated "
                f"(min_size={self.min_size}, max_size={self.max_size}, canvas_size={self.canvas_size})"
            )
        if self.num_shapes < 0:
            raise ValueError(f"invariant num_shapes >= 0 violated (num_shapes={self.num_shapes})")
        if not 0 < self.output_size <= self.canvas_size:
            raise ValueError(
                f"invariant output_size <= canvas_size violated "
                f"(output_size={self.output_size}, canvas_size={self.canvas_size})"
            )
        if self.blur_kernel < 1:
            raise ValueError(f"invariant blur_kernel >= 1 violated (blur_kernel={self.blur_kernel})")
        if self.num_shapes > 0 and not self.shape_palette:
            raise ValueError("invariant shape_palette non-empty violated")
        return self

    @property
    def channels(self) -> int:
        return 1 if self.greyscale else 3


PRESETS: Dict[str, ShapeImageSpec] = {
    "large": ShapeImageSpec(num_shapes=50, min_size=20, max_size=50),
    "small": ShapeImageSpec(num_shapes=50, min_size=5, max_size=10),
    # main-text description of the textured variant: up to 100 small shapes
    "textured": ShapeImageSpec(num_shapes=100, min_size=5, max_size=10),
}


def preset(name: str, greyscale: bool = True) -> ShapeImageSpec:
    """Return a named preset with the requested color mode."""
    try:
        base = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown shape preset '{name}', expected one of {sorted(PRESETS)}") from None
    return base.model_copy(update={"greyscale": greyscale})


def _rasterize(
    kind: str, r0: int, c0: int, size: int, spec: ShapeImageSpec, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    shape = (spec.canvas_size, spec.canvas_size)
    if kind == "rectangle":
        width = int(rng.integers(spec.min_size, size + 1))
        rr, cc = draw.rectangle(start=(r0, c0), extent=(size, width), shape=shape)
    elif kind == "circle":
        half = size / 2.0
        rr, cc = draw.disk((r0 + half, c0 + half), half, shape=shape)
    elif kind == "ellipse":
        minor = int(rng.integers(spec.min_size, size + 1))
        angle = float(rng.uniform(0.0, np.pi))
        half = size / 2.0
        rr, cc = draw.ellipse(
            r0 + half, c0 + half, half, minor / 2.0, shape=shape, rotation=angle
        )
    else:
        bottom = r0 + size - 1
        rows = np.array([bottom, bottom, r0])
        cols = np.array([c0, c0 + size - 1, c0 + (size - 1) / 2.0])
        rr, cc = draw.polygon(rows, cols, shape=shape)
    return rr, cc


def render_shape_pixels(spec: ShapeImageSpec, seed: int) -> np.ndarray:
    """Render one image as raw 8-bit pixels.

    Args:
        spec: Image family parameters
        seed: Non-negative integer seed

    Returns:
        ``(output_size, output_size)`` uint8 array when greyscale, else
        ``(output_size, output_size, 3)``
    """
    rng = np.random.default_rng(seed)
    size = spec.canvas_size
    palette = sorted(spec.shape_palette)

    canvas = np.zeros((size, size, 3), dtype=np.float64)
    covered = np.zeros((size, size), dtype=bool)

    # later shapes overwrite earlier ones
    for _ in range(spec.num_shapes):
        kind = palette[int(rng.integers(len(palette)))]
        extent = int(rng.integers(spec.min_size, spec.max_size + 1))
        color = rng.integers(0, 256, size=3)
        r0 = int(rng.integers(0, size - extent + 1))
        c0 = int(rng.integers(0, size - extent + 1))
        rr, cc = _rasterize(kind, r0, c0, extent, spec, rng)
        canvas[rr, cc] = color
        covered[rr, cc] = True

    background = rng.integers(0, 256, size=3)
    canvas[~covered] = background

    k = spec.blur_kernel
    if k > 1:
        mode = "constant" if spec.blur_border == "zero" else "reflect"
        canvas = ndimage.uniform_filter(canvas, size=(k, k, 1), mode=mode, cval=0.0)

    if spec.output_size != size:
        canvas = transform.resize(
            canvas,
            (spec.output_size, spec.output_size, 3),
            order=1,
            mode="edge",
            anti_aliasing=False,
            preserve_range=True,
        )

    if spec.greyscale:
        canvas = np.tensordot(canvas, LUMINANCE_WEIGHTS, axes=([2], [0]))

    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def pixels_to_image(pixels: np.ndarray) -> np.ndarray:
    """Map stored 8-bit pixels to a ``(C, H, W)`` float32 image in [-1, 1]."""
    planes = pixels[np.newaxis] if pixels.ndim == 2 else np.transpose(pixels, (2, 0, 1))
    return (planes.astype(np.float32) / 127.5) - 1.0


def render_shape_image(spec: ShapeImageSpec, seed: int) -> np.ndarray:
    """Render one image of overlapping shapes, normalized to [-1, 1].

    Pipeline: draw ``num_shapes`` shapes, paint the background, box-blur, resize to
    ``output_size``, optionally convert to grey, rescale.

    Args:
        spec: Image family parameters
        seed: Non-negative integer seed

    Returns:
        ``(C, output_size, output_size)`` float32 array with C = 1 for grey, 3 for color
    """
    return pixels_to_image(render_shape_pixels(spec, seed))
