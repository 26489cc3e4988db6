# Ablation table along one axis (beta, loss, weights or blur_skip).
#
# Steps 1-2 are trained once; every row restarts step 3 from the same state.
#
# Run: python demos/04_ablation.py beta
import sys

import torch

from crackjoint.config import RunConfig
from crackjoint.experiment import ABLATION_AXES, run_ablation

torch.set_num_threads(1)
axis = sys.argv[1] if len(sys.argv) > 1 else "beta"
print(f"axis {axis}: {ABLATION_AXES[axis]}")

table = run_ablation(RunConfig.desk(), axis)
print(table.to_csv())
table.write("ablation_out")
