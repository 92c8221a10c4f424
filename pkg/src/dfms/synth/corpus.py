"""
Synthetic proxy corpus: a directory of 8-bit PNG images plus a key-value manifest.

Per-image seeds are derived from (corpus seed, image index), so the content of a
corpus depends only on its seed, its variants and its size, never on how many
workers rendered it.
"""

import hashlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
from loguru import logger
from PIL import Image
from pydantic import BaseModel, field_validator
from tqdm import tqdm

from dfms.core.errors import InvariantError
from dfms.synth.shapes import LUMINANCE_WEIGHTS, ShapeImageSpec, pixels_to_image, render_shape_pixels

MANIFEST_NAME = "manifest.txt"
IMAGE_DIR = "images"
FRACTION_TOLERANCE = 1e-9
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class CorpusVariant(NamedTuple):
    """One named image family and the share of the corpus it gets."""

    name: str
    spec: ShapeImageSpec
    fraction: float


class CorpusManifest(BaseModel):
    """Description of a written corpus."""

    seed: int
    count: int
    variant_mix: Dict[str, float]
    variant_counts: Dict[str, int]
    image_format: str
    checksum: str

    @field_validator("variant_mix")
    @classmethod
    def fractions_sum_to_one(cls, v: Dict[str, float]) -> Dict[str, float]:
        if v and abs(sum(v.values()) - 1.0) > FRACTION_TOLERANCE:
            raise ValueError(f"variant fractions sum to {sum(v.values())}, expected 1.0")
        return v

    def to_text(self) -> str:
        mix = ",".join(f"{k}={v!r}" for k, v in self.variant_mix.items())
        counts = ",".join(f"{k}={v}" for k, v in self.variant_counts.items())
        lines = [
            f"seed = {self.seed}",
            f"count = {self.count}",
            f"mix = {mix}",
            f"variant_counts = {counts}",
            f"format = {self.image_format}",
            f"checksum = {self.checksum}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CorpusManifest":
        fields: Dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()

        def _pairs(raw: str) -> Dict[str, str]:
            return dict(item.split("=", 1) for item in raw.split(",") if item)

        return cls(
            seed=int(fields["seed"]),
            count=int(fields["count"]),
            variant_mix={k: float(v) for k, v in _pairs(fields.get("mix", "")).items()},
            variant_counts={k: int(v) for k, v in _pairs(fields.get("variant_counts", "")).items()},
            image_format=fields["format"],
            checksum=fields["checksum"],
        )


def parse_mix(text: str) -> Dict[str, float]:
    """Parse ``large=0.5,small=0.5`` into a name -> fraction mapping."""
    mix: Dict[str, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        if not sep:
            raise InvariantError(f"bad mix entry '{item}', expected name=fraction")
        mix[name.strip()] = float(value)
    return mix


def allocate_counts(fractions: Sequence[float], total: int) -> List[int]:
    """Split ``total`` by ``fractions`` using largest-remainder rounding.

    Ties on the remainder go to the earlier entry.
    """
    raw = [f * total for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    leftover = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def image_seed(corpus_seed: int, index: int) -> int:
    """Seed of image ``index`` in a corpus generated from ``corpus_seed``."""
    return int(np.random.SeedSequence([corpus_seed, index]).generate_state(1)[0])


def _render_job(job: Tuple[ShapeImageSpec, int]) -> np.ndarray:
    spec, seed = job
    return render_shape_pixels(spec, seed)


def _image_format(specs: Iterable[ShapeImageSpec]) -> str:
    specs = list(specs)
    if not specs:
        return "png;uint8;L;0x0"
    modes = {"L" if s.greyscale else "RGB" for s in specs}
    sizes = {s.output_size for s in specs}
    if len(modes) > 1 or len(sizes) > 1:
        raise InvariantError("all corpus variants must share output_size and color mode")
    size = sizes.pop()
    return f"png;uint8;{modes.pop()};{size}x{size}"


def _jobs(variants: Sequence[CorpusVariant], counts: Sequence[int], seed: int) -> Iterator[Tuple[ShapeImageSpec, int]]:
    index = 0
    for variant, n in zip(variants, counts):
        for _ in range(n):
            yield variant.spec, image_seed(seed, index)
            index += 1


def build_corpus(
    variants: Sequence[CorpusVariant],
    total: int,
    seed: int,
    out_dir: Path,
    workers: int = 1,
) -> CorpusManifest:
    """Render and store a synthetic corpus.

    Images are assigned to variants in contiguous blocks, in the order given.

    Args:
        variants: Image families with their fractions; fractions must sum to 1
        total: Number of images to write
        seed: Non-negative corpus seed
        out_dir: Destination directory (created if needed)
        workers: Rendering processes; the output does not depend on it

    Returns:
        The manifest, which is also written to ``out_dir/manifest.txt``
    """
    if total < 0:
        raise InvariantError(f"total must be >= 0, got {total}")
    if seed < 0:
        raise InvariantError(f"seed must be >= 0, got {seed}")
    names = [v.name for v in variants]
    if len(set(names)) != len(names):
        raise InvariantError(f"duplicate variant names in {names}")
    fraction_sum = sum(v.fraction for v in variants)
    if variants and abs(fraction_sum - 1.0) > FRACTION_TOLERANCE:
        raise InvariantError(f"variant fractions sum to {fraction_sum}, expected 1.0")
    if not variants and total > 0:
        raise InvariantError("a non-empty corpus needs at least one variant")

    image_format = _image_format(v.spec for v in variants)
    counts = allocate_counts([v.fraction for v in variants], total)

    out_dir = Path(out_dir)
    image_dir = out_dir / IMAGE_DIR
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create corpus directory {out_dir}: {e}") from e
    stale = sorted(image_dir.glob("*.png"))
    if stale:
        logger.warning(f"Removing {len(stale)} images of a previous corpus in {image_dir}")
        for path in stale:
            path.unlink()
    (out_dir / MANIFEST_NAME).unlink(missing_ok=True)

    logger.info(
        f"Building corpus of {total} images in {out_dir} "
        f"({', '.join(f'{n}={c}' for n, c in zip(names, counts))}, workers={workers})"
    )

    digest = hashlib.sha256()
    jobs = _jobs(variants, counts, seed)

    def _consume(results: Iterable[np.ndarray]) -> None:
        for index, pixels in enumerate(tqdm(results, total=total, disable=total < 1000, desc="synth")):
            digest.update(pixels.tobytes())
            Image.fromarray(pixels).save(image_dir / f"{index:06d}.png")

    if workers > 1 and total > 0:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            _consume(pool.map(_render_job, jobs, chunksize=64))
    else:
        _consume(map(_render_job, jobs))

    manifest = CorpusManifest(
        seed=seed,
        count=total,
        variant_mix={v.name: v.fraction for v in variants},
        variant_counts=dict(zip(names, counts)),
        image_format=image_format,
        checksum=digest.hexdigest(),
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.to_text(), encoding="utf-8")
    logger.info(f"Corpus written: checksum {manifest.checksum}")
    return manifest


def read_manifest(corpus_dir: Path) -> CorpusManifest:
    """Read ``manifest.txt`` from a corpus directory."""
    path = Path(corpus_dir) / MANIFEST_NAME
    return CorpusManifest.from_text(path.read_text(encoding="utf-8"))


def corpus_image_paths(corpus_dir: Path) -> List[Path]:
    """Image files of a corpus in index order.

    With a manifest present, exactly its ``count`` indexed files are returned.
    """
    corpus_dir = Path(corpus_dir)
    image_dir = corpus_dir / IMAGE_DIR
    if not (corpus_dir / MANIFEST_NAME).exists():
        return sorted(image_dir.glob("*.png"))
    paths = [image_dir / f"{index:06d}.png" for index in range(read_manifest(corpus_dir).count)]
    missing = [p.name for p in paths if not p.exists()]
    if missing:
        raise InvariantError(f"corpus {corpus_dir} is missing {len(missing)} images (first: {missing[0]})")
    return paths


def corpus_checksum(corpus_dir: Path) -> str:
    """Recompute the content hash of a stored corpus."""
    digest = hashlib.sha256()
    for path in corpus_image_paths(corpus_dir):
        with Image.open(path) as im:
            digest.update(np.asarray(im).tobytes())
    return digest.hexdigest()


def verify_corpus(corpus_dir: Path) -> bool:
    """Check stored pixels against the manifest checksum."""
    manifest = read_manifest(corpus_dir)
    try:
        actual = corpus_checksum(corpus_dir)
    except InvariantError as e:
        logger.warning(str(e))
        return False
    if actual != manifest.checksum:
        logger.warning(f"Corpus {corpus_dir} checksum mismatch: {actual} != {manifest.checksum}")
        return False
    return True


def _to_channels(planes: np.ndarray, channels: int) -> np.ndarray:
    if planes.shape[0] == channels:
        return planes
    if planes.shape[0] == 1:
        return np.repeat(planes, channels, axis=0)
    if channels == 1:
        grey = np.tensordot(LUMINANCE_WEIGHTS, planes[:3], axes=([0], [0]))
        return grey[np.newaxis].astype(np.float32)
    raise InvariantError(f"cannot map {planes.shape[0]} image channels to {channels}")


def load_corpus(corpus_dir: Path, channels: int = 3) -> np.ndarray:
    """Read a corpus, or any flat directory of images, as an ``(N, C, H, W)`` batch in [-1, 1].

    Single-channel images are repeated across ``channels`` planes; colour images are
    converted to grey when ``channels`` is 1. All images must share one size.
    """
    corpus_dir = Path(corpus_dir)
    if (corpus_dir / IMAGE_DIR).is_dir():
        paths = corpus_image_paths(corpus_dir)
    else:
        paths = sorted(p for p in corpus_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        return np.zeros((0, channels, 0, 0), dtype=np.float32)

    images = []
    for path in paths:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            images.append(_to_channels(pixels_to_image(np.asarray(im)), channels))
    sizes = {img.shape for img in images}
    if len(sizes) != 1:
        raise InvariantError(f"images in {corpus_dir} have mixed shapes {sorted(sizes)}")
    logger.info(f"Loaded {len(images)} images from {corpus_dir}")
    return np.stack(images)
