"""Segmentation-aware pixel weights for the SR loss.

All maps are ``(B, H, W)`` float64 tensors at SR resolution and are treated
as constants: they are built under ``torch.no_grad`` and never carry a graph.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch

from .errors import ParameterError
from .imaging import distance_transform
from .losses import LossConfig, _batched, dice_loss, gdice_loss, wce_pixel_map

M_GRID = tuple(2.0 ** k for k in range(-3, 4))
FO_TARGETS = ("sr_loss", "seg_loss")


@dataclass
class WeightConfig:
    use_lc_weight: bool = False
    use_co_weight: bool = False
    use_fo_weight: bool = False
    m_C: float = 8.0
    m_F: float = 1.0
    fo_target: str = "sr_loss"
    normalization: str = "unit-mean"

    def __post_init__(self):
        if self.m_C < 0 or self.m_F < 0 or not (math.isfinite(self.m_C) and math.isfinite(self.m_F)):
            raise ParameterError("m_C and m_F must be finite and non-negative")
        if self.fo_target not in FO_TARGETS:
            raise ParameterError(f"fo_target must be one of {FO_TARGETS}")
        if self.normalization != "unit-mean":
            raise ParameterError("only 'unit-mean' normalization is supported")

    @property
    def any_sr_weight(self) -> bool:
        return self.use_lc_weight or self.use_co_weight or (self.use_fo_weight and self.fo_target == "sr_loss")

    def to_dict(self) -> dict:
        return asdict(self)


def _as_tensor(x, dtype=torch.float64) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.detach().to(dtype)
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def co_weight_map(gt, m_C: float) -> torch.Tensor:
    """Crack-oriented weight ``exp(-m_C * D)``, D = distance to the nearest crack pixel.

    Images without crack pixels get an all-ones map.
    """
    g = _as_tensor(gt)
    squeeze = g.dim() == 2
    g = g.reshape((-1,) + tuple(g.shape[-2:])).numpy() > 0.5
    out = np.ones(g.shape)
    for i, m in enumerate(g):
        if m.any():
            out[i] = np.exp(-m_C * distance_transform(m))
    t = torch.from_numpy(out)
    return t[0] if squeeze else t


def fo_weight_map(pred, gt, m_F: float) -> torch.Tensor:
    """Fail-oriented weight ``exp(m_F * |pred - gt|)`` on crack probabilities."""
    p, g = _as_tensor(pred), _as_tensor(gt)
    if p.shape != g.shape:
        raise ParameterError(f"pred {tuple(p.shape)} and gt {tuple(g.shape)} differ")
    return torch.exp(m_F * (p - g).abs())


@torch.no_grad()
def seg_loss_map(probs, target, levelset, config: LossConfig, class_weights=None) -> torch.Tensor:
    """Per-pixel segmentation-loss map rescaled to unit mean per image.

    Pixel terms: distance-weighted mismatch ``phi * (s - g)`` and the WCE excess
    over its clamped optimum; the region (Dice/GDice) loss enters as a per-image
    constant.  With ``r`` the raw non-negative map and ``m`` its mean, the
    weight is ``(r + m) / (2 m)``; an all-zero ``r`` yields ones.
    """
    probs, target = _batched(_as_tensor(probs), _as_tensor(target))
    phi = _as_tensor(levelset).reshape(target.shape)
    weights = class_weights or config.wce_class_weights or (1.0, 1.0)
    generalized = config.loss in ("gbc", "boundary+gdice")
    boundary = (phi * (probs[:, 1] - target)).clamp_min(0.0)
    w = torch.as_tensor(weights, dtype=probs.dtype)
    floor = -math.log1p(-config.wce_eps) * (w[0] * (1.0 - target) + w[1] * target)
    wce = (wce_pixel_map(probs, target, weights, config.wce_eps) - floor).clamp_min(0.0)
    region = torch.stack([
        gdice_loss(p[None], t[None], config.gdice_eps) if generalized else dice_loss(p[None], t[None])
        for p, t in zip(probs, target)
    ]).view(-1, 1, 1)
    a, gm = config.alpha, config.gamma
    raw = a * boundary + (1.0 - a) * ((1.0 - gm) * region + gm * wce)
    m = raw.mean(dim=(1, 2), keepdim=True)
    safe = torch.where(m > 1e-12, m, torch.ones_like(m))
    return torch.where(m > 1e-12, (raw + safe) / (2.0 * safe), torch.ones_like(raw))


def apply_weights(sr_pixel_loss: torch.Tensor, maps=()) -> torch.Tensor:
    """Mean over pixels of ``sr_pixel_loss`` times the product of ``maps``."""
    out = sr_pixel_loss
    for w in maps:
        w = _as_tensor(w, dtype=sr_pixel_loss.dtype)
        if w.shape != sr_pixel_loss.shape:
            raise ParameterError(f"weight map {tuple(w.shape)} does not match loss map {tuple(sr_pixel_loss.shape)}")
        out = out * w
    return out.mean()


def sr_weight_maps(config: WeightConfig, probs, target, levelset,
                   loss_config: LossConfig, class_weights=None) -> list[torch.Tensor]:
    """Weight maps to multiply into the SR pixel loss for one batch."""
    maps = []
    if config.use_lc_weight:
        maps.append(seg_loss_map(probs, target, levelset, loss_config, class_weights))
    if config.use_co_weight:
        maps.append(co_weight_map(target, config.m_C))
    if config.use_fo_weight and config.fo_target == "sr_loss":
        maps.append(fo_weight_map(_as_tensor(probs)[:, 1], target, config.m_F))
    return maps
