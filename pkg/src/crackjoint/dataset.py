"""Image/mask pairs: synthetic generation, directory ingestion, manifests."""

import hashlib
import json
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import DataError, ParameterError
from .imaging import read_png, write_png

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MANIFEST_VERSION = 1
MAX_CRACK_FRACTION = 0.045
_WIDTH_PROBS = {1: [1.0], 3: [0.35, 0.45, 0.2]}


@dataclass
class Sample:
    image: np.ndarray        # (H, W, C) in [0, 1]
    mask: np.ndarray         # (H, W) uint8 in {0, 1}
    name: str = ""


# Synthetic data ----------------------------------------------------------

def _texture(rng: np.random.Generator, size: int, channels: int) -> np.ndarray:
    base = rng.uniform(0.45, 0.75) + rng.uniform(-0.05, 0.05, size=channels)
    coarse = ndimage.gaussian_filter(rng.standard_normal((size, size)), rng.uniform(1.5, 4.0))
    coarse *= rng.uniform(0.04, 0.10) / (coarse.std() + 1e-12)
    fine = rng.normal(0.0, rng.uniform(0.005, 0.02), size=(size, size, channels))
    return np.clip(base[None, None, :] + coarse[:, :, None] + fine, 0.0, 1.0)


def _segment_distance(yy, xx, a, b) -> np.ndarray:
    d = b - a
    denom = float(d @ d) or 1.0
    t = np.clip(((yy - a[0]) * d[0] + (xx - a[1]) * d[1]) / denom, 0.0, 1.0)
    return np.hypot(yy - (a[0] + t * d[0]), xx - (a[1] + t * d[1]))


def _polyline(rng: np.random.Generator, size: int) -> np.ndarray:
    n = int(rng.integers(3, 7))
    step = size / 6.0
    pts = [rng.uniform(0, size - 1, size=2)]
    heading = rng.uniform(0, 2 * np.pi)
    for _ in range(n):
        heading += rng.normal(0.0, 0.5)
        pts.append(pts[-1] + step * rng.uniform(0.6, 1.4) * np.array([np.sin(heading), np.cos(heading)]))
    return np.array(pts)


def _crack_mask(rng: np.random.Generator, size: int, max_lines: int, widths) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(int(rng.integers(1, max_lines + 1))):
        pts = _polyline(rng, size)
        width = float(rng.choice(widths, p=_WIDTH_PROBS[len(widths)]))
        dist = np.full((size, size), np.inf)
        for a, b in zip(pts[:-1], pts[1:]):
            dist = np.minimum(dist, _segment_distance(yy, xx, a, b))
        mask |= dist <= width / 2.0
    return mask


def synth_cracks(count: int, size: int = 64, seed: int = 0, channels: int = 3,
                 crack_free_fraction: float = 0.1) -> list[Sample]:
    """Textured backgrounds with dark 1-3 px polyline cracks and exact masks.

    Roughly ``crack_free_fraction`` of the images contain no crack; every
    crack image keeps its crack-pixel fraction below 4.5%.
    """
    if size < 32:
        raise ParameterError("synthetic images must be at least 32x32")
    samples = []
    for i in range(count):
        rng = np.random.default_rng([seed, i, 7])
        img = _texture(rng, size, channels)
        mask = np.zeros((size, size), dtype=bool)
        if rng.uniform() >= crack_free_fraction:
            for attempt in range(20):
                widths = (1.0, 2.0, 3.0) if attempt < 10 else (1.0,)
                mask = _crack_mask(rng, size, 2 if attempt < 10 else 1, widths)
                if 0 < mask.mean() < MAX_CRACK_FRACTION:
                    break
            else:
                mask = _crack_mask(rng, size, 1, (1.0,))
                keep = np.zeros_like(mask)
                keep[: size // 2] = True
                mask &= keep
            depth = rng.uniform(0.55, 0.8)
            img = np.where(mask[:, :, None], img * (1.0 - depth), img)
        samples.append(Sample(img, mask.astype(np.uint8), f"crack_{seed}_{i:05d}"))
    return samples


def synth_textures(count: int, size: int = 64, seed: int = 0, channels: int = 3) -> list[np.ndarray]:
    """Generic SR pre-training images: textures with random blobs, bars and lines."""
    out = []
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for i in range(count):
        rng = np.random.default_rng([seed, i, 11])
        img = _texture(rng, size, channels)
        for _ in range(int(rng.integers(2, 7))):
            color = rng.uniform(0.05, 0.95, size=channels)
            kind = rng.integers(0, 3)
            if kind == 0:
                c = rng.uniform(0, size, 2)
                region = np.hypot(yy - c[0], xx - c[1]) <= rng.uniform(2, size / 4)
            elif kind == 1:
                y0, x0 = rng.integers(0, size, 2)
                h, w = rng.integers(2, size // 2, 2)
                region = (yy >= y0) & (yy < y0 + h) & (xx >= x0) & (xx < x0 + w)
            else:
                a, b = rng.uniform(0, size - 1, 2), rng.uniform(0, size - 1, 2)
                region = _segment_distance(yy, xx, a, b) <= rng.uniform(0.5, 2.5)
            img = np.where(region[:, :, None], color[None, None, :], img)
        out.append(np.clip(img, 0.0, 1.0))
    return out


def save_samples(samples, root) -> Path:
    """Write samples as ``root/images/<name>.png`` and ``root/masks/<name>.png``."""
    root = Path(root)
    for s in samples:
        write_png(root / "images" / f"{s.name}.png", s.image)
        write_png(root / "masks" / f"{s.name}.png", s.mask.astype(np.float64))
    return root


# Manifests ---------------------------------------------------------------

@dataclass
class SampleRecord:
    image: str
    mask: str
    split: str
    sidecar: str | None = None


@dataclass
class Manifest:
    seed: int
    records: list[SampleRecord]
    version: int = MANIFEST_VERSION
    root: str | None = None
    unpaired: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        recs = [SampleRecord(**r) for r in d["records"]]
        return cls(seed=d["seed"], records=recs, version=d.get("version", MANIFEST_VERSION),
                   root=d.get("root"), unpaired=list(d.get("unpaired", [])),
                   warnings=list(d.get("warnings", [])))

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        return cls.from_dict(json.loads(text))

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]


def assign_split(stem: str, seed: int, fractions=(0.8, 0.1, 0.1)) -> str:
    digest = hashlib.sha256(f"{seed}:{stem}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0 ** 64
    if u < fractions[0]:
        return "train"
    if u < fractions[0] + fractions[1]:
        return "val"
    return "test"


def _index(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        return {}
    return {p.stem: p for p in sorted(directory.iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def ingest(root, seed: int = 0, fractions=(0.8, 0.1, 0.1)) -> Manifest:
    """Pair ``root/images/*`` with ``root/masks/*`` by file stem.

    Unpaired files and size mismatches are reported in the manifest rather
    than raised; no valid pair at all is a DataError.
    """
    root = Path(root)
    images, masks = _index(root / "images"), _index(root / "masks")
    records, warnings = [], []
    unpaired = sorted(str(p.relative_to(root)) for s, p in {**images, **masks}.items()
                      if s not in images or s not in masks)
    for stem in sorted(set(images) & set(masks)):
        ip, mp = images[stem], masks[stem]
        with PILImage.open(ip) as a, PILImage.open(mp) as b:
            if a.size != b.size:
                msg = f"rejected {stem}: image {a.size} vs mask {b.size}"
                log.warning(msg)
                warnings.append(msg)
                continue
        records.append(SampleRecord(str(ip.relative_to(root)), str(mp.relative_to(root)),
                                    assign_split(stem, seed, fractions)))
    if not records:
        raise DataError(f"no image/mask pairs found under {root}")
    return Manifest(seed=seed, records=records, root=str(root), unpaired=unpaired, warnings=warnings)


def load_record(record: SampleRecord, root) -> Sample:
    """Load an image/mask pair; the mask is binarized at 0.5."""
    root = Path(root)
    img = read_png(root / record.image) if record.image.lower().endswith(".png") else \
        np.asarray(PILImage.open(root / record.image).convert("RGB"), dtype=np.float64) / 255.0
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    m = read_png(root / record.mask)
    if m.ndim == 3:
        m = m.mean(axis=2)
    return Sample(img, (m >= 0.5).astype(np.uint8), Path(record.image).stem)


def load_split(manifest: Manifest, split: str, root=None) -> list[Sample]:
    root = root or manifest.root
    if root is None:
        raise DataError("manifest has no root; pass one explicitly")
    samples = [load_record(r, root) for r in manifest.split(split)]
    if not samples:
        raise DataError(f"split {split!r} is empty")
    return samples
