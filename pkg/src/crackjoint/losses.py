"""Segmentation and SR losses.

Conventions: ``probs`` is ``(B, 2, H, W)`` with channel 0 = background and
channel 1 = crack; ``target`` is a binary ``(B, H, W)`` mask; level sets are
``(B, H, W)``.  Unbatched inputs (no leading ``B``) are accepted.  All losses
return torch scalars and are differentiated with autograd.
"""

from dataclasses import dataclass, asdict
from typing import NamedTuple

import numpy as np
import torch

from .errors import ParameterError

LOSS_PRESETS = ("bc", "gbc", "wce", "dice", "combo", "boundary+gdice")


@dataclass
class LossConfig:
    alpha: float = 0.5
    gamma: float = 0.5
    beta: float = 0.3
    loss: str = "bc"
    wce_class_weights: tuple[float, float] | None = None
    gdice_eps: float = 1e-7
    wce_eps: float = 1e-7
    kernel_loss_weight: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "gamma", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {v}")
        if self.loss not in LOSS_PRESETS:
            raise ParameterError(f"unknown loss {self.loss!r}; expected one of {LOSS_PRESETS}")
        if self.wce_class_weights is not None:
            self.wce_class_weights = tuple(float(w) for w in self.wce_class_weights)
            if len(self.wce_class_weights) != 2 or min(self.wce_class_weights) <= 0:
                raise ParameterError("wce_class_weights must be two positive reals")
        if self.gdice_eps <= 0 or self.wce_eps <= 0:
            raise ParameterError("epsilons must be positive")
        if self.kernel_loss_weight < 0:
            raise ParameterError("kernel_loss_weight must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["wce_class_weights"] is not None:
            d["wce_class_weights"] = list(d["wce_class_weights"])
        return d


def class_balanced_weights(masks) -> tuple[float, float]:
    """Inverse-frequency class weights ``N' / (2 * count_j)`` over a mask corpus."""
    total = 0
    crack = 0
    for m in masks:
        m = np.asarray(m) > 0.5
        total += m.size
        crack += int(m.sum())
    counts = np.maximum([total - crack, crack], 1)
    w = total / (2.0 * counts)
    return float(w[0]), float(w[1])


def _batched(probs: torch.Tensor, target: torch.Tensor):
    if probs.dim() == 3:
        probs, target = probs.unsqueeze(0), target.unsqueeze(0)
    if probs.dim() != 4 or probs.shape[1] != 2:
        raise ParameterError(f"probs must be (B, 2, H, W), got {tuple(probs.shape)}")
    if target.shape != probs.shape[:1] + probs.shape[2:]:
        raise ParameterError(f"target shape {tuple(target.shape)} does not match probs {tuple(probs.shape)}")
    return probs, target.to(probs.dtype)


def one_hot(target: torch.Tensor) -> torch.Tensor:
    return torch.stack([1.0 - target, target], dim=1)


def boundary_loss(crack_prob: torch.Tensor, levelset: torch.Tensor,
                  pixel_weight: torch.Tensor | None = None) -> torch.Tensor:
    """Mean of ``levelset * crack_prob`` over all pixels."""
    levelset = torch.as_tensor(levelset, dtype=crack_prob.dtype)
    if crack_prob.shape != levelset.shape:
        raise ParameterError(f"pred {tuple(crack_prob.shape)} and level set {tuple(levelset.shape)} differ")
    term = levelset * crack_prob
    if pixel_weight is not None:
        term = term * pixel_weight
    return term.mean()


def dice_loss(probs: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """``1 - 2 sum(p g) / sum(p^2 + g^2)`` per image, averaged over the batch."""
    probs, target = _batched(probs, target)
    g = one_hot(target)
    num = 2.0 * (probs * g).sum(dim=(1, 2, 3))
    den = (probs * probs + g * g).sum(dim=(1, 2, 3))
    return (1.0 - num / den).mean()


def gdice_loss(probs: torch.Tensor, target: torch.Tensor, eps: float = 1e-7) -> torch.Tensor:
    """Generalized Dice with per-image class weights ``1 / (count_j + eps)``."""
    probs, target = _batched(probs, target)
    g = one_hot(target)
    w = 1.0 / (g.sum(dim=(2, 3)) + eps)
    num = 2.0 * (w * (probs * g).sum(dim=(2, 3))).sum(dim=1)
    den = (w * (probs + g).sum(dim=(2, 3))).sum(dim=1)
    return (1.0 - num / den).mean()


def wce_pixel_map(probs: torch.Tensor, target: torch.Tensor, weights=(1.0, 1.0),
                  eps: float = 1e-7) -> torch.Tensor:
    """Per-pixel weighted cross entropy ``-sum_j w_j g_j log p_j``, shape (B, H, W)."""
    probs, target = _batched(probs, target)
    w = torch.as_tensor(weights, dtype=probs.dtype).view(1, 2, 1, 1)
    p = probs.clamp(eps, 1.0 - eps)
    return -(w * one_hot(target) * torch.log(p)).sum(dim=1)


def wce_loss(probs: torch.Tensor, target: torch.Tensor, weights=(1.0, 1.0),
             eps: float = 1e-7, pixel_weight: torch.Tensor | None = None) -> torch.Tensor:
    term = wce_pixel_map(probs, target, weights, eps)
    if pixel_weight is not None:
        term = term * pixel_weight.reshape(term.shape)
    return term.mean()


def bc_loss(probs, target, levelset, config: LossConfig, generalized: bool = False,
            class_weights=None, pixel_weight=None) -> torch.Tensor:
    """Boundary Combo loss; ``generalized=True`` swaps Dice for Generalized Dice.

    ``pixel_weight`` (optional) multiplies the pixelwise Boundary and WCE terms.
    """
    probs, target = _batched(probs, target)
    levelset = torch.as_tensor(levelset, dtype=probs.dtype).reshape(target.shape)
    weights = class_weights or config.wce_class_weights or (1.0, 1.0)
    region = gdice_loss(probs, target, config.gdice_eps) if generalized else dice_loss(probs, target)
    pw = None if pixel_weight is None else pixel_weight.reshape(target.shape)
    lb = boundary_loss(probs[:, 1], levelset, pw)
    lw = wce_loss(probs, target, weights, config.wce_eps, pw)
    a, g = config.alpha, config.gamma
    return a * lb + (1.0 - a) * ((1.0 - g) * region + g * lw)


def segmentation_loss(probs, target, levelset, config: LossConfig,
                      class_weights=None, pixel_weight=None) -> torch.Tensor:
    """Dispatch on ``config.loss``.

    ``combo`` is BC with the boundary term off, ``boundary+gdice`` is GBC with
    the WCE term off; ``wce`` and ``dice`` are the bare losses.
    """
    name = config.loss
    probs, target = _batched(probs, target)
    weights = class_weights or config.wce_class_weights or (1.0, 1.0)
    pw = None if pixel_weight is None else pixel_weight.reshape(target.shape)
    if name == "bc":
        return bc_loss(probs, target, levelset, config, False, weights, pw)
    if name == "gbc":
        return bc_loss(probs, target, levelset, config, True, weights, pw)
    if name == "wce":
        return wce_loss(probs, target, weights, config.wce_eps, pw)
    if name == "dice":
        return dice_loss(probs, target)
    if name == "combo":
        g = config.gamma
        return (1.0 - g) * dice_loss(probs, target) + g * wce_loss(probs, target, weights, config.wce_eps, pw)
    if name == "boundary+gdice":
        a = config.alpha
        levelset = torch.as_tensor(levelset, dtype=probs.dtype).reshape(target.shape)
        return a * boundary_loss(probs[:, 1], levelset, pw) + (1.0 - a) * gdice_loss(probs, target, config.gdice_eps)
    raise ParameterError(f"unknown loss {name!r}")


class SRLossTerms(NamedTuple):
    total: torch.Tensor
    image: torch.Tensor
    kernel: torch.Tensor
    pixel_map: torch.Tensor
    kernel_weight: float


def sr_loss(sr: torch.Tensor, hr: torch.Tensor, pred_kernel: torch.Tensor,
            gt_kernel: torch.Tensor, kernel_weight: float = 1.0) -> SRLossTerms:
    """L1 image error plus ``kernel_weight`` times L1 kernel error.

    Images are ``(B, C, H, W)`` (or ``(C, H, W)``); ``pixel_map`` is the
    channel-averaged absolute error, ``(B, H, W)``.
    """
    if sr.shape != hr.shape:
        raise ParameterError(f"SR {tuple(sr.shape)} and HR {tuple(hr.shape)} differ")
    if pred_kernel.shape != gt_kernel.shape:
        raise ParameterError(f"kernel shapes {tuple(pred_kernel.shape)} and {tuple(gt_kernel.shape)} differ")
    if sr.dim() == 3:
        sr, hr = sr.unsqueeze(0), hr.unsqueeze(0)
    pixel_map = (sr - hr).abs().mean(dim=1)
    image = pixel_map.mean()
    kernel = (pred_kernel - gt_kernel).abs().mean()
    return SRLossTerms(image + kernel_weight * kernel, image, kernel, pixel_map, kernel_weight)


def joint_loss(l_s, l_c, beta: float):
    """Convex task mix ``(1 - beta) * l_s + beta * l_c``."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    return (1.0 - beta) * l_s + beta * l_c


def value_and_grad(fn, x, *args, **kwargs) -> tuple[float, np.ndarray]:
    """Evaluate ``fn(x, ...)`` in float64 and return ``(value, d value / d x)``.

    If ``fn`` returns a tuple, its first element is differentiated.
    """
    xt = torch.as_tensor(np.asarray(x, dtype=np.float64)).clone().requires_grad_(True)
    out = fn(xt, *args, **kwargs)
    if isinstance(out, tuple):
        out = out[0]
    out.backward()
    return float(out.detach()), xt.grad.numpy().copy()
