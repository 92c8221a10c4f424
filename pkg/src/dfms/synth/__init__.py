"""
Synthetic proxy data: random overlapping shapes on planar backgrounds.
"""

from dfms.synth.corpus import (
    CorpusManifest,
    CorpusVariant,
    allocate_counts,
    build_corpus,
    corpus_checksum,
    image_seed,
    load_corpus,
    parse_mix,
    read_manifest,
    verify_corpus,
)
from dfms.synth.shapes import (
    PRESETS,
    ShapeImageSpec,
    pixels_to_image,
    preset,
    render_shape_image,
    render_shape_pixels,
)

__all__ = [
    "ShapeImageSpec",
    "PRESETS",
    "preset",
    "render_shape_image",
    "render_shape_pixels",
    "pixels_to_image",
    "CorpusManifest",
    "CorpusVariant",
    "allocate_counts",
    "build_corpus",
    "corpus_checksum",
    "image_seed",
    "load_corpus",
    "parse_mix",
    "read_manifest",
    "verify_corpus",
]
