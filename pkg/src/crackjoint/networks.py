"""Small stand-in networks.

``SRNet``  : LR image -> (x4 SR image, 21x21 kernel estimate).
``SegNet`` : 3-level U-Net -> two-class softmax, optionally conditioned on a
             blur kernel through ``BlurSkip`` right before the classifier.
"""

from dataclasses import dataclass, asdict

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ParameterError
from .imaging import KERNEL_SIZE

_PROJ = {2: (6, 2, 2), 4: (8, 4, 2), 8: (12, 8, 2)}


@dataclass
class NetworkConfig:
    channels: int = 3
    scale: int = 4
    sr_features: int = 32
    sr_blocks: int = 4
    seg_base: int = 16
    kernel_embed: int = 32
    blur_skip: bool = False

    def __post_init__(self):
        if self.scale not in _PROJ:
            raise ParameterError(f"scale must be one of {sorted(_PROJ)}")
        if self.channels not in (1, 3):
            raise ParameterError("channels must be 1 or 3")

    def to_dict(self) -> dict:
        return asdict(self)


class ResBlock(nn.Module):
    def __init__(self, features):
        super().__init__()
        self.conv1 = nn.Conv2d(features, features, 3, padding=1)
        self.conv2 = nn.Conv2d(features, features, 3, padding=1)
        self.act = nn.PReLU(features)

    def forward(self, x):
        return x + self.conv2(self.act(self.conv1(x)))


class UpProjection(nn.Module):
    """Back-projection up unit: up, down again, correct with the up-projected residual."""

    def __init__(self, features, scale):
        super().__init__()
        k, s, p = _PROJ[scale]
        self.up1 = nn.ConvTranspose2d(features, features, k, s, p)
        self.down = nn.Conv2d(features, features, k, s, p)
        self.up2 = nn.ConvTranspose2d(features, features, k, s, p)
        self.act = nn.PReLU(features)

    def forward(self, lr_feat):
        h0 = self.act(self.up1(lr_feat))
        l0 = self.act(self.down(h0))
        h1 = self.act(self.up2(l0 - lr_feat))
        return h0 + h1


class DownProjection(nn.Module):
    def __init__(self, features, scale):
        super().__init__()
        k, s, p = _PROJ[scale]
        self.down1 = nn.Conv2d(features, features, k, s, p)
        self.up = nn.ConvTranspose2d(features, features, k, s, p)
        self.down2 = nn.Conv2d(features, features, k, s, p)
        self.act = nn.PReLU(features)

    def forward(self, hr_feat):
        l0 = self.act(self.down1(hr_feat))
        h0 = self.act(self.up(l0))
        l1 = self.act(self.down2(h0 - hr_feat))
        return l0 + l1


class SRNet(nn.Module):
    def __init__(self, channels=3, features=32, blocks=4, scale=4, kernel_size=KERNEL_SIZE):
        super().__init__()
        self.scale = scale
        self.kernel_size = kernel_size
        self.head = nn.Sequential(nn.Conv2d(channels, features, 3, padding=1), nn.PReLU(features))
        self.body = nn.Sequential(*[ResBlock(features) for _ in range(blocks)])
        self.up1 = UpProjection(features, scale)
        self.down1 = DownProjection(features, scale)
        self.up2 = UpProjection(features, scale)
        self.tail = nn.Conv2d(2 * features, channels, 3, padding=1)
        self.kernel_feat = nn.Sequential(
            nn.Conv2d(features, features, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(features, features, 3, padding=1), nn.LeakyReLU(0.1),
        )
        self.kernel_fc = nn.Linear(features, kernel_size * kernel_size)
        nn.init.normal_(self.kernel_fc.weight, std=1e-3)
        nn.init.zeros_(self.kernel_fc.bias)

    def forward(self, lr):
        if lr.dim() != 4:
            raise ParameterError(f"expected (B, C, h, w) input, got {tuple(lr.shape)}")
        if min(lr.shape[-2:]) < 16:
            raise ParameterError(f"LR input must be at least 16x16, got {tuple(lr.shape[-2:])}")
        feat = self.body(self.head(lr))
        h1 = self.up1(feat)
        h2 = self.up2(self.down1(h1))
        residual = self.tail(torch.cat([h1, h2], dim=1))
        base = F.interpolate(lr, scale_factor=self.scale, mode="bicubic", align_corners=False)
        sr = (base + residual).clamp(0.0, 1.0)
        logits = self.kernel_fc(self.kernel_feat(feat).mean(dim=(2, 3)))
        kernel = torch.softmax(logits, dim=1).view(-1, self.kernel_size, self.kernel_size)
        return sr, kernel


class BlurSkip(nn.Module):
    """Feature modulation conditioned on a blur kernel.

    The flattened kernel is embedded, tiled over the grid and concatenated
    with the features; two 1x1-conv branches then predict per-pixel scale and
    shift.  The last layers start at scale 1, shift 0, i.e. identity.
    """

    def __init__(self, features, kernel_size=KERNEL_SIZE, embed=32, hidden=32):
        super().__init__()
        self.kernel_numel = kernel_size * kernel_size
        self.embed = nn.Sequential(nn.Linear(self.kernel_numel, embed), nn.LeakyReLU(0.1))
        self.scale = nn.Sequential(nn.Conv2d(features + embed, hidden, 1), nn.LeakyReLU(0.1),
                                   nn.Conv2d(hidden, features, 1))
        self.shift = nn.Sequential(nn.Conv2d(features + embed, hidden, 1), nn.LeakyReLU(0.1),
                                   nn.Conv2d(hidden, features, 1))
        self.reset_identity()

    def reset_identity(self):
        for branch, bias in ((self.scale, 1.0), (self.shift, 0.0)):
            nn.init.zeros_(branch[-1].weight)
            nn.init.constant_(branch[-1].bias, bias)

    def forward(self, features, kernel):
        b, _, h, w = features.shape
        cond = self.embed(kernel.reshape(b, -1) * self.kernel_numel)
        cond = cond[:, :, None, None].expand(-1, -1, h, w)
        x = torch.cat([features, cond], dim=1)
        return features * self.scale(x) + self.shift(x)


def _double_conv(cin, cout):
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(),
                         nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU())


class SegNet(nn.Module):
    def __init__(self, channels=3, base=16, blur_skip=False, kernel_embed=32, kernel_size=KERNEL_SIZE):
        super().__init__()
        self.enc1 = _double_conv(channels, base)
        self.enc2 = _double_conv(base, 2 * base)
        self.enc3 = _double_conv(2 * base, 4 * base)
        self.up3 = nn.ConvTranspose2d(4 * base, 2 * base, 2, stride=2)
        self.dec2 = _double_conv(4 * base, 2 * base)
        self.up2 = nn.ConvTranspose2d(2 * base, base, 2, stride=2)
        self.dec1 = _double_conv(2 * base, base)
        self.classifier = nn.Conv2d(base, 2, 1)
        # built last so the shared layers get the same init with or without it
        self.blur_skip = BlurSkip(base, kernel_size, kernel_embed) if blur_skip else None

    def features(self, x):
        if x.shape[-1] % 4 or x.shape[-2] % 4:
            raise ParameterError(f"segmentation input sides must be divisible by 4, got {tuple(x.shape[-2:])}")
        e1 = self.enc1(x)
        e2 = self.enc2(F.max_pool2d(e1, 2))
        e3 = self.enc3(F.max_pool2d(e2, 2))
        d2 = self.dec2(torch.cat([self.up3(e3), e2], dim=1))
        return self.dec1(torch.cat([self.up2(d2), e1], dim=1))

    def forward(self, x, kernel=None):
        feat = self.features(x)
        if self.blur_skip is not None and kernel is not None:
            feat = self.blur_skip(feat, kernel)
        return torch.softmax(self.classifier(feat), dim=1)


class JointNet(nn.Module):
    """SR followed by segmentation of the SR output."""

    def __init__(self, config: NetworkConfig | None = None):
        super().__init__()
        self.config = config = config or NetworkConfig()
        self.sr = SRNet(config.channels, config.sr_features, config.sr_blocks, config.scale)
        self.seg = SegNet(config.channels, config.seg_base, config.blur_skip, config.kernel_embed)

    def forward(self, lr, detach_sr=False):
        sr, kernel = self.sr(lr)
        if detach_sr:
            sr, kernel = sr.detach(), kernel.detach()
        probs = self.seg(sr, kernel if self.config.blur_skip else None)
        return sr, kernel, probs


def build_model(config: NetworkConfig | None = None, seed: int = 0) -> JointNet:
    torch.manual_seed(seed)
    return JointNet(config)


@torch.no_grad()
def sr_forward(model: JointNet, lr):
    """Eval-mode SR pass on an ``(h, w[, C])`` numpy image; returns numpy arrays."""
    x = _to_batch(lr)
    sr, kernel = model.sr(x)
    return _from_batch(sr), kernel[0].double().numpy()


@torch.no_grad()
def seg_forward(model: JointNet, sr, kernel=None):
    """Eval-mode segmentation of an SR image; returns the crack-probability map."""
    x = _to_batch(sr)
    k = None if kernel is None else torch.as_tensor(kernel, dtype=torch.float32)[None]
    return model.seg(x, k)[0, 1].double().numpy()


def _to_batch(image) -> torch.Tensor:
    t = torch.as_tensor(image, dtype=torch.float32)
    if t.dim() == 2:
        t = t[:, :, None]
    return t.permute(2, 0, 1)[None].contiguous()


def _from_batch(t: torch.Tensor):
    return t[0].permute(1, 2, 0).double().numpy()
