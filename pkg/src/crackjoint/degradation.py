"""Synthetic LR generation: Gaussian blur, bicubic downscale, crop/flip augmentation."""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .imaging import (SIGMA2_RANGE, as_fraction, bicubic_resize, check_sigma_theta,
                      convolve, gaussian_kernel, read_png, write_png)

ALLOWED_SCALES = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8))


def item_seed(global_seed: int, index: int) -> int:
    """Order-independent per-item seed derived from ``(global_seed, index)``."""
    return int(np.random.SeedSequence([int(global_seed), int(index)]).generate_state(1)[0])


@dataclass(frozen=True)
class DegradationSpec:
    sigma_a: float
    sigma_b: float
    theta: float
    scale: Fraction = Fraction(1, 4)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scale", as_fraction(self.scale))
        check_sigma_theta(self.sigma_a, self.sigma_b, self.theta)
        if self.scale not in ALLOWED_SCALES:
            raise ParameterError(f"scale must be one of 1/2, 1/4, 1/8, got {self.scale}")

    def kernel(self) -> np.ndarray:
        return gaussian_kernel(self.sigma_a, self.sigma_b, self.theta)

    def to_dict(self) -> dict:
        return {"sigma_a": self.sigma_a, "sigma_b": self.sigma_b, "theta": self.theta,
                "scale": str(self.scale), "seed": self.seed}


def sample_spec(seed: int, scale=Fraction(1, 4), sigma2_range=SIGMA2_RANGE) -> DegradationSpec:
    """Draw a blur uniformly in variance (both axes) and in angle over [0, pi)."""
    rng = np.random.default_rng(seed)
    var_a, var_b = rng.uniform(sigma2_range[0], sigma2_range[1], size=2)
    theta = rng.uniform(0.0, np.pi)
    return DegradationSpec(float(np.sqrt(var_a)), float(np.sqrt(var_b)), float(theta),
                           scale=scale, seed=int(seed))


def degrade(hr: np.ndarray, spec: DegradationSpec) -> tuple[np.ndarray, np.ndarray]:
    """Blur ``hr`` with the kernel of ``spec`` and downscale; returns ``(lr, kernel)``."""
    hr = np.asarray(hr, dtype=np.float64)
    factor = spec.scale.denominator // spec.scale.numerator
    if hr.shape[0] % factor or hr.shape[1] % factor:
        raise ParameterError(f"HR size {hr.shape[:2]} not divisible by {factor}")
    kernel = spec.kernel()
    lr = bicubic_resize(convolve(hr, kernel), spec.scale)
    return lr, kernel


@dataclass(frozen=True)
class AugmentParams:
    top: int
    left: int
    patch: int
    vflip: bool
    hflip: bool


def sample_augment(shape: tuple[int, int], patch: int, seed: int) -> AugmentParams:
    h, w = shape[:2]
    if patch < 1 or patch > min(h, w):
        raise ParameterError(f"patch {patch} does not fit in {h}x{w}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - patch + 1))
    left = int(rng.integers(0, w - patch + 1))
    vflip, hflip = (bool(b) for b in rng.integers(0, 2, size=2))
    return AugmentParams(top, left, patch, vflip, hflip)


def apply_augment(array: np.ndarray, params: AugmentParams) -> np.ndarray:
    out = array[params.top:params.top + params.patch, params.left:params.left + params.patch]
    if params.vflip:
        out = out[::-1]
    if params.hflip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(hr: np.ndarray, mask: np.ndarray, patch: int, seed: int):
    """Random crop plus vertical/horizontal flips, identical for image and mask."""
    if hr.shape[:2] != mask.shape[:2]:
        raise ParameterError(f"image {hr.shape[:2]} and mask {mask.shape[:2]} differ in size")
    params = sample_augment(hr.shape, patch, seed)
    return apply_augment(hr, params), apply_augment(mask, params)


# Directory batch job ------------------------------------------------------

def sidecar_dict(spec: DegradationSpec, kernel: np.ndarray, extra: dict | None = None) -> dict:
    d = spec.to_dict()
    d["kernel"] = [float(v) for v in np.asarray(kernel).ravel()]
    d.update(extra or {})
    return d


def load_sidecar(path) -> tuple[DegradationSpec, np.ndarray]:
    d = json.loads(Path(path).read_text())
    spec = DegradationSpec(d["sigma_a"], d["sigma_b"], d["theta"], Fraction(d["scale"]), d["seed"])
    n = int(round(np.sqrt(len(d["kernel"]))))
    return spec, np.array(d["kernel"], dtype=np.float64).reshape(n, n)


def degrade_directory(src, dst, seed: int = 0, scale=Fraction(1, 4),
                      extra_meta: dict | None = None) -> list[Path]:
    """Degrade every PNG in ``src``; writes ``<stem>.png`` + ``<stem>.json`` into ``dst``."""
    src, dst = Path(src), Path(dst)
    files = sorted(p for p in src.iterdir() if p.suffix.lower() == ".png") if src.is_dir() else []
    if not files:
        raise DataError(f"no PNG images in {src}")
    dst.mkdir(parents=True, exist_ok=True)
    written = []
    for i, path in enumerate(files):
        spec = sample_spec(item_seed(seed, i), scale=scale)
        lr, kernel = degrade(read_png(path), spec)
        text = {k: str(v) for k, v in (extra_meta or {}).items()}
        text["seed"] = str(spec.seed)
        write_png(dst / f"{path.stem}.png", lr, text=text)
        side = sidecar_dict(spec, kernel, {"source": path.name, **(extra_meta or {})})
        (dst / f"{path.stem}.json").write_text(json.dumps(side, indent=1))
        written.append(dst / f"{path.stem}.png")
    return written
