"""
Tests for shape rendering and corpus building.
"""

import numpy as np
import pytest
from PIL import Image

from dfms.core.errors import InvariantError
from dfms.synth import (
    CorpusVariant,
    ShapeImageSpec,
    allocate_counts,
    build_corpus,
    corpus_checksum,
    load_corpus,
    parse_mix,
    preset,
    read_manifest,
    render_shape_image,
    render_shape_pixels,
    verify_corpus,
)


@pytest.fixture
def small_spec():
    """A cheap image family for corpus tests."""
    return ShapeImageSpec(canvas_size=32, output_size=16, num_shapes=5, min_size=4, max_size=10, blur_kernel=2)


@pytest.fixture
def variants(small_spec):
    big = small_spec.model_copy(update={"min_size": 8, "max_size": 16})
    return [CorpusVariant("small", small_spec, 0.5), CorpusVariant("big", big, 0.5)]


def test_render_is_deterministic(small_spec):
    a = render_shape_pixels(small_spec, 42)
    b = render_shape_pixels(small_spec, 42)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, render_shape_pixels(small_spec, 43))


def test_render_shapes_and_range(small_spec):
    grey = render_shape_image(small_spec, 0)
    assert grey.shape == (1, 16, 16)
    assert grey.dtype == np.float32
    assert grey.min() >= -1.0 and grey.max() <= 1.0

    color = render_shape_image(small_spec.model_copy(update={"greyscale": False}), 0)
    assert color.shape == (3, 16, 16)


def test_no_shapes_reflect_border_gives_plain_image():
    spec = ShapeImageSpec(canvas_size=20, output_size=10, num_shapes=0, min_size=2, max_size=4, blur_border="reflect")
    pixels = render_shape_pixels(spec, 7)
    assert len(np.unique(pixels)) == 1


def test_zero_border_darkens_edges():
    spec = ShapeImageSpec(canvas_size=20, output_size=20, num_shapes=0, min_size=2, max_size=4, blur_kernel=4)
    pixels = render_shape_pixels(spec, 3).astype(int)
    assert pixels[0, 0] <= pixels[10, 10]


def test_spec_invariants():
    with pytest.raises(ValueError):
        ShapeImageSpec(canvas_size=20, min_size=30, max_size=40)
    with pytest.raises(ValueError):
        ShapeImageSpec(canvas_size=20, output_size=32, min_size=2, max_size=4)


def test_presets():
    assert preset("large").min_size == 20
    assert preset("small").max_size == 10
    assert preset("textured").num_shapes == 100
    assert preset("small", greyscale=False).channels == 3
    with pytest.raises(ValueError):
        preset("nope")


def test_parse_mix_and_allocation():
    assert parse_mix("large=0.5, small=0.5") == {"large": 0.5, "small": 0.5}
    with pytest.raises(InvariantError):
        parse_mix("large")
    assert allocate_counts([0.5, 0.5], 7) == [4, 3]
    assert sum(allocate_counts([0.2, 0.3, 0.5], 11)) == 11


def test_build_corpus_writes_manifest(tmp_path, variants):
    manifest = build_corpus(variants, 6, seed=5, out_dir=tmp_path / "corpus")
    assert manifest.count == 6
    assert manifest.variant_counts == {"small": 3, "big": 3}
    assert manifest.image_format == "png;uint8;L;16x16"
    assert read_manifest(tmp_path / "corpus") == manifest
    assert verify_corpus(tmp_path / "corpus")

    with Image.open(tmp_path / "corpus" / "images" / "000000.png") as im:
        assert im.mode == "L"
        assert im.size == (16, 16)


def test_checksum_independent_of_workers(tmp_path, variants):
    one = build_corpus(variants, 8, seed=11, out_dir=tmp_path / "w1", workers=1)
    two = build_corpus(variants, 8, seed=11, out_dir=tmp_path / "w2", workers=2)
    again = build_corpus(variants, 8, seed=11, out_dir=tmp_path / "w3", workers=1)
    assert one.checksum == two.checksum == again.checksum
    assert corpus_checksum(tmp_path / "w2") == one.checksum


def test_verify_detects_tampering(tmp_path, variants):
    out = tmp_path / "corpus"
    build_corpus(variants, 4, seed=0, out_dir=out)
    Image.fromarray(np.zeros((16, 16), dtype=np.uint8)).save(out / "images" / "000001.png")
    assert not verify_corpus(out)


def test_build_corpus_validation(tmp_path, variants):
    with pytest.raises(InvariantError):
        build_corpus(variants, -1, seed=0, out_dir=tmp_path)
    with pytest.raises(InvariantError):
        build_corpus([variants[0]._replace(fraction=0.7), variants[1]], 4, seed=0, out_dir=tmp_path)
    mixed = [variants[0], variants[1]._replace(spec=variants[1].spec.model_copy(update={"greyscale": False}))]
    with pytest.raises(InvariantError):
        build_corpus(mixed, 4, seed=0, out_dir=tmp_path)


def test_empty_corpus(tmp_path, variants):
    manifest = build_corpus(variants, 0, seed=0, out_dir=tmp_path / "empty")
    assert manifest.count == 0
    assert load_corpus(tmp_path / "empty").shape[0] == 0


def test_load_corpus_roundtrips_pixels(tmp_path, variants):
    out = tmp_path / "corpus"
    build_corpus(variants, 4, seed=9, out_dir=out)
    grey = load_corpus(out, channels=1)
    color = load_corpus(out, channels=3)
    assert grey.shape == (4, 1, 16, 16)
    assert color.shape == (4, 3, 16, 16)
    assert np.array_equal(color[:, 0], color[:, 2])

    with Image.open(out / "images" / "000000.png") as im:
        expected = np.asarray(im).astype(np.float32) / 127.5 - 1.0
    assert np.allclose(grey[0, 0], expected)


def test_rebuild_into_same_directory_drops_old_images(tmp_path, variants):
    out = tmp_path / "corpus"
    build_corpus(variants, 10, seed=0, out_dir=out)
    manifest = build_corpus(variants, 4, seed=0, out_dir=out)

    assert manifest.count == 4
    assert len(list((out / "images").glob("*.png"))) == 4
    assert load_corpus(out, channels=1).shape[0] == 4
    assert verify_corpus(out)


def test_load_reads_only_manifest_images(tmp_path, variants):
    out = tmp_path / "corpus"
    build_corpus(variants, 4, seed=0, out_dir=out)
    Image.fromarray(np.zeros((16, 16), dtype=np.uint8)).save(out / "images" / "000099.png")

    assert load_corpus(out, channels=1).shape[0] == 4
    assert verify_corpus(out)


def test_missing_image_fails_verification(tmp_path, variants):
    out = tmp_path / "corpus"
    build_corpus(variants, 4, seed=0, out_dir=out)
    (out / "images" / "000002.png").unlink()

    assert not verify_corpus(out)
    with pytest.raises(InvariantError):
        load_corpus(out)
