"""Grid primitives: blur kernels, convolution, bicubic resampling, distances.

Images are ``(H, W)`` or ``(H, W, C)`` float arrays in ``[0, 1]``.  Masks are
``(H, W)`` arrays interpreted as boolean.
"""

import functools
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL.PngImagePlugin import PngInfo
from scipy import ndimage, signal

from .errors import EmptyRegionError, ParameterError

KERNEL_SIZE = 21
SIGMA2_RANGE = (0.2, 4.0)
_RANGE_SLACK = 1e-12


def as_fraction(scale) -> Fraction:
    if isinstance(scale, Fraction):
        return scale
    if isinstance(scale, str):
        return Fraction(scale)
    return Fraction(scale).limit_denominator(10_000)


def check_sigma_theta(sigma_a: float, sigma_b: float, theta: float) -> None:
    lo, hi = SIGMA2_RANGE
    for name, s in (("sigma_a", sigma_a), ("sigma_b", sigma_b)):
        if not np.isfinite(s) or not (lo - _RANGE_SLACK <= s * s <= hi + _RANGE_SLACK):
            raise ParameterError(f"{name}**2 = {s * s!r} outside [{lo}, {hi}]")
    if not (0.0 <= theta < np.pi):
        raise ParameterError(f"theta = {theta!r} outside [0, pi)")


def gaussian_kernel(sigma_a: float, sigma_b: float, theta: float,
                    size: int = KERNEL_SIZE) -> np.ndarray:
    """Centered anisotropic Gaussian kernel, normalized to sum 1.

    ``sigma_a`` is the standard deviation along the direction at angle
    ``theta`` from the horizontal (column) axis, ``sigma_b`` along the
    perpendicular direction.
    """
    check_sigma_theta(sigma_a, sigma_b, theta)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([sigma_a ** 2, sigma_b ** 2]) @ rot.T
    inv = np.linalg.inv(cov)
    r = np.arange(size) - (size - 1) / 2.0
    yy, xx = np.meshgrid(r, r, indexing="ij")
    q = inv[0, 0] * xx * xx + 2.0 * inv[0, 1] * xx * yy + inv[1, 1] * yy * yy
    k = np.exp(-0.5 * q)
    return k / k.sum()


def delta_kernel(size: int = KERNEL_SIZE) -> np.ndarray:
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k


def _channels_last(image: np.ndarray) -> tuple[np.ndarray, bool]:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image[:, :, None], True
    if image.ndim == 3:
        return image, False
    raise ParameterError(f"expected (H, W) or (H, W, C) image, got shape {image.shape}")


def convolve(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D convolution of each channel with ``kernel``, same-size output.

    Borders use reflect padding without edge repetition (``d c b | a b c d``).
    """
    img, squeeze = _channels_last(image)
    kernel = np.asarray(kernel, dtype=np.float64)
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ParameterError("empty image")
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ParameterError(f"kernel must be 2-D with odd sides, got {kernel.shape}")
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(img, ((ph, ph), (pw, pw), (0, 0)), mode="reflect")
    out = signal.fftconvolve(padded, kernel[:, :, None], mode="valid", axes=(0, 1))
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def _cubic(x: np.ndarray) -> np.ndarray:
    # Keys cubic convolution kernel, a = -0.5
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    return ((1.5 * ax3 - 2.5 * ax2 + 1.0) * (ax <= 1)
            + (-0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0) * ((ax > 1) & (ax <= 2)))


@functools.lru_cache(maxsize=64)
def resize_matrix(in_len: int, out_len: int, scale: float) -> np.ndarray:
    """``(out_len, in_len)`` bicubic interpolation matrix along one axis.

    Downscaling widens the kernel by ``1/scale`` (antialiasing); borders are
    mirrored with edge repetition.  Rows sum to 1.
    """
    width = 4.0 / scale if scale < 1 else 4.0
    u = (np.arange(out_len) + 0.5) / scale - 0.5
    left = np.floor(u - width / 2.0)
    taps = int(np.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = u[:, None] - idx
    w = scale * _cubic(scale * dist) if scale < 1 else _cubic(dist)
    w = w / w.sum(axis=1, keepdims=True)
    period = 2 * in_len
    mirrored = np.mod(idx.astype(np.int64), period)
    mirrored = np.where(mirrored >= in_len, period - 1 - mirrored, mirrored)
    m = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), taps)
    np.add.at(m, (rows, mirrored.ravel()), w.ravel())
    m.flags.writeable = False  # cached
    return m


def bicubic_resize(image: np.ndarray, scale) -> np.ndarray:
    """Resample by a rational ``scale`` with Keys bicubic interpolation."""
    frac = as_fraction(scale)
    if frac <= 0:
        raise ParameterError(f"scale must be positive, got {scale!r}")
    img, squeeze = _channels_last(image)
    h, w = img.shape[:2]
    oh, ow = h * frac, w * frac
    if oh.denominator != 1 or ow.denominator != 1 or oh == 0 or ow == 0:
        raise ParameterError(f"{h}x{w} * {frac} is not an integral size")
    if frac == 1:
        out = img.copy()
    else:
        rm = resize_matrix(h, int(oh), float(frac))
        cm = resize_matrix(w, int(ow), float(frac))
        # separable: rows, then columns
        out = np.einsum("jw,iwc->ijc", cm, np.einsum("ih,hwc->iwc", rm, img))
        out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def _as_bool_mask(mask) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ParameterError(f"mask must be 2-D, got shape {mask.shape}")
    return mask.astype(bool)


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest foreground pixel."""
    m = _as_bool_mask(mask)
    if not m.any():
        raise EmptyRegionError("distance_transform needs at least one foreground pixel")
    return ndimage.distance_transform_edt(~m)


def level_set(mask) -> np.ndarray:
    """Signed distance map: ``-d(q, background)`` inside, ``+d(q, mask)`` outside.

    Returns zeros when the mask is empty or full.
    """
    m = _as_bool_mask(mask)
    if not m.any() or m.all():
        return np.zeros(m.shape)
    return ndimage.distance_transform_edt(~m) - ndimage.distance_transform_edt(m)


# PNG I/O -----------------------------------------------------------------

def read_png(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as floats in [0, 1]; drops alpha."""
    with PILImage.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if mode in ("1", "LA"):
                im = im.convert("L")
            elif mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)


def write_png(path, image: np.ndarray, bits: int = 8, text: dict | None = None) -> None:
    """Write a [0, 1] image as PNG.  16-bit output is single-channel only.

    ``text`` entries are stored as PNG tEXt chunks.
    """
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if bits == 8:
        pil = PILImage.fromarray(np.round(img * 255.0).astype(np.uint8))
    elif bits == 16:
        if img.ndim != 2:
            raise ParameterError("16-bit PNG output supports single-channel images only")
        pil = PILImage.fromarray(np.round(img * 65535.0).astype(np.uint16))
    else:
        raise ParameterError(f"bits must be 8 or 16, got {bits}")
    info = PngInfo()
    for key, value in (text or {}).items():
        info.add_text(str(key), str(value))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, pnginfo=info)
