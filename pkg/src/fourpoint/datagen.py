"""Labeled training pairs from an image corpus, persisted deterministically.

A sample is built by cropping a square patch A from a prepared grayscale
image, perturbing its four corners by i.i.d. uniform offsets in
[-rho, rho], converting those four correspondences to a homography, and
rendering patch B as the view of the same region under that homography.
The offsets are the regression label.

Dataset directory layout:

* ``manifest.json`` — format version, counts, generation parameters,
  the RNG contract string, and source-image checksums.
* ``samples.bin`` — fixed-size little-endian records, each
  ``[patch_a: side^2 u8] [patch_b: side^2 u8] [label: 8 x f32]`` with
  intensities stored as ``round(p * 255)``.

Every random draw for record ``i`` comes from generators derived as
``PCG64(SeedSequence([seed, i, stream]))``, so records are independent
of generation order and the bytes are a pure function of (corpus bytes,
config).  That derivation is part of the file-format contract (the
``rng`` manifest field names it).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    DegenerateError,
    PatchFrame,
    four_point_to_matrix,
)
from .imaging import (
    AugmentConfig,
    add_gaussian_noise,
    crop,
    gaussian_blur,
    load_image,
    occlude,
    quantize_u8,
    resize_bilinear,
    warp_patch,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
RNG_CONTRACT = "pcg64-seedseq[seed,record,stream]-v1"

# Per-record stream ids.
_GEOM, _OCC_A, _NOISE_A, _OCC_B, _NOISE_B = range(5)

_IDENTITY = np.eye(3)


class DatasetError(ValueError):
    """Malformed or inconsistent dataset on disk."""


class ImageTooSmallError(ValueError):
    """Source image cannot host a patch with the required margins."""


@dataclass(frozen=True)
class GenConfig:
    """Generation parameters; defaults reproduce the training recipe.

    ``resize_to`` is (width, height); ``None`` keeps native image sizes.
    ``border_margin`` defaults to ``ceil(rho)`` so perturbed corners can
    never leave the image.
    """

    patch_size: int = 128
    rho: float = 32.0
    resize_to: tuple[int, int] | None = (320, 240)
    border_margin: int | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 2:
            raise ValueError(f"patch_size must be >= 2, got {self.patch_size}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        if self.rho > self.margin:
            raise ValueError(f"rho {self.rho} exceeds border margin {self.margin}")
        if self.resize_to is not None:
            if self.patch_size + 2 * self.margin > min(self.resize_to):
                raise ValueError(
                    f"patch {self.patch_size} + margins {2 * self.margin} does not fit "
                    f"into resize target {self.resize_to}"
                )

    @property
    def margin(self) -> int:
        return int(np.ceil(self.rho)) if self.border_margin is None else self.border_margin

    @property
    def record_bytes(self) -> int:
        return 2 * self.patch_size * self.patch_size + 8 * 4


def test_config(seed: int = 0, augment: AugmentConfig | None = None) -> GenConfig:
    """The evaluation-set recipe: 256-px patches, rho=64, 640x480 sources."""
    return GenConfig(
        patch_size=256,
        rho=64.0,
        resize_to=(640, 480),
        seed=seed,
        augment=augment or AugmentConfig(),
    )


@dataclass(frozen=True)
class TrainingTriplet:
    """A training unit: two equal-size patches and the corner offsets
    mapping patch A's frame corners onto their positions in patch B."""

    patch_a: np.ndarray
    patch_b: np.ndarray
    label: np.ndarray
    frame: PatchFrame


@dataclass(frozen=True)
class DatasetManifest:
    version: int
    count: int
    patch_size: int
    rho: float
    seed: int
    rng: str
    sources: tuple
    record_bytes: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.version,
                "count": self.count,
                "patch_size": self.patch_size,
                "rho": self.rho,
                "seed": self.seed,
                "rng": self.rng,
                "sources": [{"file": f, "sha256": h} for f, h in self.sources],
                "record_bytes": self.record_bytes,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        try:
            return cls(
                version=raw["version"],
                count=raw["count"],
                patch_size=raw["patch_size"],
                rho=raw["rho"],
                seed=raw["seed"],
                rng=raw.get("rng", "unknown"),
                sources=tuple((s["file"], s["sha256"]) for s in raw["sources"]),
                record_bytes=raw["record_bytes"],
            )
        except KeyError as exc:
            raise DatasetError(f"manifest is missing field {exc}") from exc


def record_rng(seed: int, index: int, stream: int) -> np.random.Generator:
    """The derived generator for one stream of one record."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index, stream])))


def prepare_image(img: np.ndarray, cfg: GenConfig) -> np.ndarray:
    """Resize to the configured working size (no-op when unset)."""
    if cfg.resize_to is None:
        return img
    w, h = cfg.resize_to
    return np.clip(resize_bilinear(img, w, h), 0.0, 1.0)


def _check_fits(img: np.ndarray, cfg: GenConfig) -> None:
    h, w = img.shape
    need = cfg.patch_size + 2 * cfg.margin
    if w < need or h < need:
        raise ImageTooSmallError(
            f"image {w}x{h} cannot host a {cfg.patch_size}-px patch with {cfg.margin}-px margins"
        )


def _draw_geometry(img_shape, cfg: GenConfig, rng, zero_perturbation: bool):
    """Frame origin, corner offsets, and the homography they define.

    Degenerate corner draws (measure zero for continuous offsets) are
    redrawn from the same stream, so the record remains a deterministic
    function of its seed.
    """
    h, w = img_shape
    m, s = cfg.margin, cfg.patch_size
    for _ in range(32):
        u0 = int(rng.integers(m, w - m - s + 1))
        v0 = int(rng.integers(m, h - m - s + 1))
        frame = PatchFrame((float(u0), float(v0)), s)
        if zero_perturbation:
            return frame, np.zeros(8), _IDENTITY.copy()
        offsets = rng.uniform(-cfg.rho, cfg.rho, size=8)
        try:
            return frame, offsets, four_point_to_matrix(offsets, frame)
        except DegenerateError:
            continue
    raise DegenerateError("could not draw a non-degenerate corner perturbation")


def _finish_patch(patch, cfg: GenConfig, rng_occ, rng_noise):
    aug = cfg.augment
    if aug.occlusion_count > 0:
        patch = occlude(patch, aug, rng_occ)
    if aug.noise_sigma > 0:
        patch = add_gaussian_noise(patch, aug.noise_sigma, rng_noise)
    return patch


def _make_triplet(prepared, cfg, rngs, zero_perturbation=False) -> TrainingTriplet:
    """Core sampler; ``prepared`` must already be resized and blurred."""
    _check_fits(prepared, cfg)
    frame, offsets, h_ab = _draw_geometry(prepared.shape, cfg, rngs[_GEOM], zero_perturbation)
    patch_a = crop(prepared, frame)
    patch_b = warp_patch(prepared, h_ab, frame)
    patch_a = _finish_patch(patch_a, cfg, rngs[_OCC_A], rngs[_NOISE_A])
    patch_b = _finish_patch(patch_b, cfg, rngs[_OCC_B], rngs[_NOISE_B])
    return TrainingTriplet(patch_a, patch_b, offsets, frame)


def generate_triplet(
    img: np.ndarray,
    cfg: GenConfig,
    rng: np.random.Generator,
    *,
    zero_perturbation: bool = False,
) -> TrainingTriplet:
    """One labeled pair from a raw grayscale image.

    All draws (origin, offsets, patch effects) come from ``rng`` in a
    fixed order.  ``zero_perturbation`` is a test hook: the label is all
    zeros and patch B is bit-identical to patch A.
    """
    prepared = prepare_image(img, cfg)
    if cfg.augment.blur_sigma > 0:
        prepared = gaussian_blur(prepared, cfg.augment.blur_sigma)
    return _make_triplet(prepared, cfg, [rng] * 5, zero_perturbation)


def _record_to_bytes(triplet: TrainingTriplet) -> bytes:
    label = np.asarray(triplet.label, dtype="<f4")
    return (
        quantize_u8(triplet.patch_a).tobytes()
        + quantize_u8(triplet.patch_b).tobytes()
        + label.tobytes()
    )


def _list_corpus(corpus_dir) -> list[str]:
    exts = (".pgm", ".png", ".jpg", ".jpeg", ".bmp")
    names = sorted(
        f for f in os.listdir(corpus_dir) if f.lower().endswith(exts)
    )
    if not names:
        raise DatasetError(f"no corpus images found in {corpus_dir}")
    return names


def generate_dataset(corpus_dir, cfg: GenConfig, out_dir, n: int) -> DatasetManifest:
    """Write ``n`` records drawn round-robin over the sorted corpus.

    Record ``i`` uses corpus image ``i mod k`` with randomness derived
    from ``(cfg.seed, i)``, so output bytes do not depend on generation
    order.  Images too small for the configured patch are skipped (with
    a logged count) before round-robin assignment.
    """
    if n < 0:
        raise ValueError(f"record count must be nonnegative, got {n}")
    names = _list_corpus(corpus_dir)
    os.makedirs(out_dir, exist_ok=True)

    sources = []
    usable = []
    skipped = 0
    for name in names:
        path = os.path.join(corpus_dir, name)
        digest = hashlib.sha256(open(path, "rb").read()).hexdigest()
        prepared = prepare_image(load_image(path), cfg)
        try:
            _check_fits(prepared, cfg)
        except ImageTooSmallError:
            skipped += 1
            continue
        sources.append((name, digest))
        usable.append(name)
    if skipped:
        log.warning("skipped %d too-small corpus image(s)", skipped)
    if not usable and n > 0:
        raise DatasetError("no usable corpus images after size filtering")

    samples_path = os.path.join(out_dir, "samples.bin")
    rb = cfg.record_bytes
    with open(samples_path, "wb") as f:
        if n > 0:
            f.truncate(n * rb)
            # Outer loop over images so each source is loaded and blurred
            # once; records are written at their index offset.
            for j, name in enumerate(usable):
                indices = range(j, n, len(usable))
                if not len(indices):
                    continue
                prepared = prepare_image(load_image(os.path.join(corpus_dir, name)), cfg)
                if cfg.augment.blur_sigma > 0:
                    prepared = gaussian_blur(prepared, cfg.augment.blur_sigma)
                for i in indices:
                    rngs = [record_rng(cfg.seed, i, s) for s in range(5)]
                    triplet = _make_triplet(prepared, cfg, rngs)
                    f.seek(i * rb)
                    f.write(_record_to_bytes(triplet))

    manifest = DatasetManifest(
        version=FORMAT_VERSION,
        count=n,
        patch_size=cfg.patch_size,
        rho=cfg.rho,
        seed=cfg.seed,
        rng=RNG_CONTRACT,
        sources=tuple(sources),
        record_bytes=rb,
    )
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as f:
        f.write(manifest.to_json() + "\n")
    return manifest


def read_manifest(dataset_dir) -> DatasetManifest:
    path = os.path.join(dataset_dir, "manifest.json")
    if not os.path.exists(path):
        raise DatasetError(f"missing manifest: {path}")
    manifest = DatasetManifest.from_json(open(path, encoding="utf-8").read())
    if manifest.version != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset version {manifest.version} (expected {FORMAT_VERSION})"
        )
    expected = 2 * manifest.patch_size**2 + 32
    if manifest.record_bytes != expected:
        raise DatasetError(
            f"manifest record_bytes {manifest.record_bytes} does not match "
            f"patch size {manifest.patch_size} (expected {expected})"
        )
    samples = os.path.join(dataset_dir, "samples.bin")
    actual = os.path.getsize(samples) if os.path.exists(samples) else -1
    if actual != manifest.count * manifest.record_bytes:
        raise DatasetError(
            f"samples.bin holds {actual} bytes, expected "
            f"{manifest.count * manifest.record_bytes} for {manifest.count} records"
        )
    return manifest


def load_dataset(dataset_dir):
    """Yield :class:`TrainingTriplet` records in file order.

    Loaded patches carry the on-disk u8 quantization (values k/255) and
    a patch-local frame at the origin; corner offsets are translation
    invariant, so the local frame is equivalent to the generation frame
    for every geometric purpose.
    """
    manifest = read_manifest(dataset_dir)
    s = manifest.patch_size
    frame = PatchFrame((0.0, 0.0), s)
    with open(os.path.join(dataset_dir, "samples.bin"), "rb") as f:
        for _ in range(manifest.count):
            raw = f.read(manifest.record_bytes)
            a = np.frombuffer(raw, dtype=np.uint8, count=s * s).reshape(s, s)
            b = np.frombuffer(raw, dtype=np.uint8, count=s * s, offset=s * s).reshape(s, s)
            label = np.frombuffer(raw, dtype="<f4", count=8, offset=2 * s * s)
            yield TrainingTriplet(
                a.astype(np.float64) / 255.0,
                b.astype(np.float64) / 255.0,
                label.astype(np.float64),
                frame,
            )


def load_dataset_arrays(dataset_dir) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Whole dataset as (patches_a u8, patches_b u8, labels f32) arrays.

    The compact u8 form is what the training loop wants to hold in
    memory; batches are converted to float on the fly.
    """
    manifest = read_manifest(dataset_dir)
    s = manifest.patch_size
    raw = np.fromfile(
        os.path.join(dataset_dir, "samples.bin"), dtype=np.uint8
    ).reshape(manifest.count, manifest.record_bytes)
    a = raw[:, : s * s].reshape(manifest.count, s, s)
    b = raw[:, s * s : 2 * s * s].reshape(manifest.count, s, s)
    labels = raw[:, 2 * s * s :].copy().view("<f4").astype(np.float32)
    return a.copy(), b.copy(), labels


def with_seed(cfg: GenConfig, seed: int) -> GenConfig:
    return replace(cfg, seed=seed)
