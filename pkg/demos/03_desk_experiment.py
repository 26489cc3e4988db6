# Joint SR + segmentation training at desk scale, against the independent baseline.
#
# Three steps: SR pre-training on textures, SR finetuning on cracks, then
# step 3 either jointly (gradients of L_C reach the SR net) or independently
# (SR output detached).  Takes a few minutes per seed on one CPU core.
#
# Run: python demos/03_desk_experiment.py [seed ...]
import sys
import time

import torch

from crackjoint.experiment import desk_experiment
from crackjoint.plotting import sweep_plot

torch.set_num_threads(1)
seeds = [int(a) for a in sys.argv[1:]] or [0]

for seed in seeds:
    t0 = time.time()
    reports = desk_experiment(seed, variants=("joint", "independent"))
    print(f"\nseed {seed} ({time.time() - t0:.0f} s)")
    print(f"{'':<12}{'IoU_max':>9}{'AIU':>8}{'HD95_min':>10}{'AHD95':>8}{'PSNR':>8}{'kPSNR':>8}")
    for name, r in reports.items():
        print(f"{name:<12}{r.IoU_max:9.3f}{r.AIU:8.3f}{r.HD95_min:10.2f}{r.AHD95:8.2f}{r.PSNR:8.2f}{r.kernel_PSNR:8.2f}")
    path = sweep_plot({k: reports[k] for k in ("init", "independent", "joint")},
                      f"desk_seed{seed}.svg", title=f"desk run, seed {seed}")
    print(f"threshold curves: {path}")
