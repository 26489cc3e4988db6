"""Brute-force reference implementations used by the tests.

These are deliberately naive and share no code with the package.
"""

import numpy as np


def naive_convolve(img, k):
    h, w = img.shape
    r = k.shape[0] // 2
    p = np.pad(img, r, mode="reflect")
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for i in range(k.shape[0]):
                for j in range(k.shape[1]):
                    acc += k[i, j] * p[y + 2 * r - i, x + 2 * r - j]
            out[y, x] = acc
    return out


def brute_distance(mask):
    """Distance from every pixel to the nearest True pixel, by pairwise minimum."""
    pts = np.argwhere(mask)
    yy, xx = np.indices(mask.shape)
    d = np.full(mask.shape, np.inf)
    for py, px in pts:
        d = np.minimum(d, np.sqrt((yy - py) ** 2 + (xx - px) ** 2))
    return d


def brute_level_set(mask):
    return np.where(mask, -brute_distance(~mask), brute_distance(mask))


def brute_hd95(a, b):
    pa, pb = np.argwhere(a).astype(float), np.argwhere(b).astype(float)
    d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(-1))
    return max(np.percentile(d.min(axis=1), 95), np.percentile(d.min(axis=0), 95))


def finite_diff(f, x, h=1e-4):
    """Central finite differences of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-30))


def brute_iou(a, b):
    pa = {tuple(i) for i in np.argwhere(a)}
    pb = {tuple(i) for i in np.argwhere(b)}
    union = pa | pb
    return len(pa & pb) / len(union) if union else 1.0
