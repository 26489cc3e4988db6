# Degradation model and the segmentation losses on one synthetic crack.
#
# Run: python demos/01_degradation_and_losses.py
import numpy as np
import torch

from crackjoint.dataset import synth_cracks
from crackjoint.degradation import degrade, sample_spec
from crackjoint.imaging import level_set
from crackjoint.losses import LossConfig, boundary_loss, dice_loss, gdice_loss, segmentation_loss, wce_loss

sample = next(s for s in synth_cracks(20, 64, seed=3) if s.mask.any())
print(f"HR {sample.image.shape}, crack pixels {int(sample.mask.sum())} ({sample.mask.mean():.2%})")

# blur with a random anisotropic Gaussian, then bicubic x1/4
spec = sample_spec(11)
lr, kernel = degrade(sample.image, spec)
print(f"sigma_a^2={spec.sigma_a**2:.2f} sigma_b^2={spec.sigma_b**2:.2f} theta={spec.theta:.2f}")
print(f"LR {lr.shape}, kernel sum {kernel.sum():.12f}")

# the level set is negative on the crack and grows with distance outside it
phi = level_set(sample.mask)
print(f"level set range [{phi.min():.2f}, {phi.max():.2f}]")

g = torch.from_numpy(sample.mask.astype(float))
ls = torch.from_numpy(phi)


def as_probs(crack):
    return torch.stack([1 - crack, crack])


# three predictions: perfect, blurry, and "everything is background"
blurry = torch.from_numpy(np.clip(np.asarray(g) * 0.7 + 0.05, 0, 1))
cases = {"perfect": g, "blurry": blurry, "background": torch.zeros_like(g)}
cw = (0.5, 25.0)
print(f"\n{'case':<11}{'L_B':>9}{'L_D':>9}{'L_GD':>9}{'L_WCE':>9}{'BC':>9}{'GBC':>9}")
for name, s in cases.items():
    p = as_probs(s)
    row = [boundary_loss(s, ls), dice_loss(p, g), gdice_loss(p, g), wce_loss(p, g, cw),
           segmentation_loss(p, g, ls, LossConfig(loss="bc"), cw),
           segmentation_loss(p, g, ls, LossConfig(loss="gbc"), cw)]
    print(f"{name:<11}" + "".join(f"{v.item():9.4f}" for v in row))

# two-class Dice is dominated by the background class, so it hardly moves;
# GDice reweights classes by their pixel counts and reacts to the crack.
# the all-background prediction is cheap under plain cross entropy but not under BC
plain = wce_loss(as_probs(cases["background"].clamp(1e-3, 1)), g).item()
print(f"\nunweighted CE of the all-background guess: {plain:.4f}")
