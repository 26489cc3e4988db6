# Pixel weights for the SR loss: crack-oriented (CO), fail-oriented (FO) and L_C maps.
#
# Run: python demos/02_sr_weights.py
import numpy as np
import torch

from crackjoint.dataset import synth_cracks
from crackjoint.imaging import level_set
from crackjoint.losses import LossConfig
from crackjoint.weighting import M_GRID, apply_weights, co_weight_map, fo_weight_map, seg_loss_map

sample = next(s for s in synth_cracks(20, 64, seed=5) if s.mask.any())
g = sample.mask.astype(float)
rng = np.random.default_rng(0)

# a prediction that misses part of the crack and adds some false positives
pred = 0.85 * g
ys, xs = np.nonzero(g)
pred[ys[: len(ys) // 3], xs[: len(xs) // 3]] = 0.1
pred[rng.random(g.shape) < 0.02] = 0.9
pred = np.clip(pred + 0.05 * rng.random(g.shape), 0, 1)

for m in M_GRID:
    w = co_weight_map(g, m).numpy()
    print(f"m_C={m:<6} CO mean {w.mean():.4f}, share of weight on cracks {w[g > 0].sum() / w.sum():.2%}")

fo = fo_weight_map(pred, g, 1.0).numpy()
print(f"\nFO (m_F=1): min {fo.min():.3f}, max {fo.max():.3f} (upper bound e = {np.e:.3f})")

probs = torch.from_numpy(np.stack([1 - pred, pred]))
lc = seg_loss_map(probs, g, level_set(g), LossConfig()).numpy()[0]
wrong = np.abs(pred - g) > 0.5
print(f"L_C map: mean {lc.mean():.6f}, wrong pixels {lc[wrong].mean():.3f}, right pixels {lc[~wrong].mean():.3f}")

# weights multiply the per-pixel SR error before averaging
err = torch.from_numpy(np.abs(rng.normal(0, 0.05, g.shape)))
print(f"\nplain SR loss {apply_weights(err).item():.5f}")
print(f"with CO(m_C=8) {apply_weights(err, [co_weight_map(g, 8.0)]).item():.5f}")
print(f"with FO(m_F=1) {apply_weights(err, [torch.from_numpy(fo)]).item():.5f}")
