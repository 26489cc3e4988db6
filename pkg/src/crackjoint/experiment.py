"""Desk-scale experiments and ablation tables.

Steps 1 and 2 are trained once per seed; every step-3 variant restarts from
the same step-2 checkpoint so that rows differ only in the step-3 setting.
"""

import copy
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig
from .errors import ParameterError
from .metrics import MetricReport
from .trainer import Checkpoint, Trainer, TrainingData, prepare_eval_set

ABLATION_AXES = {
    "beta": ["0.1", "0.3", "0.5", "0.7", "0.9", "1.0", "increasing"],
    "loss": ["bc", "gbc", "wce", "dice", "combo", "boundary+gdice"],
    "weights": ["none", "lc", "co", "fo", "fo_seg"],
    "blur_skip": ["off", "on", "on+fo"],
}
REPORT_COLUMNS = ("IoU_max", "AIU", "HD95_min", "AHD95", "PSNR", "SSIM", "kernel_PSNR")


def variant_config(base: RunConfig, axis: str, value: str) -> RunConfig:
    """Step-3 config for one ablation row."""
    if axis == "beta":
        sched = "increasing" if value == "increasing" else f"fixed:{float(value)}"
        return base.replace(**{"train.beta_schedule": sched})
    if axis == "loss":
        return base.replace(**{"loss.loss": value})
    if axis == "weights":
        flags = {"none": {}, "lc": {"weights.use_lc_weight": True},
                 "co": {"weights.use_co_weight": True, "weights.m_C": 8.0},
                 "fo": {"weights.use_fo_weight": True, "weights.m_F": 1.0},
                 "fo_seg": {"weights.use_fo_weight": True, "weights.m_F": 0.5,
                            "weights.fo_target": "seg_loss"}}
        if value not in flags:
            raise ParameterError(f"unknown weights setting {value!r}")
        return base.replace(**flags[value])
    if axis == "blur_skip":
        if value not in ABLATION_AXES["blur_skip"]:
            raise ParameterError(f"unknown blur_skip setting {value!r}")
        cfg = base.replace(**{"network.blur_skip": value != "off"})
        if value == "on+fo":
            cfg = cfg.replace(**{"weights.use_fo_weight": True, "weights.m_F": 1.0})
        return cfg
    raise ParameterError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_AXES)}")


@dataclass
class SharedRun:
    """Data, evaluation set and step-2 state shared by all step-3 variants of one seed."""

    config: RunConfig
    data: TrainingData
    eval_set: object
    step2: Checkpoint
    init_report: MetricReport
    step2_report: MetricReport
    trainer: Trainer = field(repr=False, default=None)


def pretrain(config: RunConfig, data: TrainingData | None = None) -> SharedRun:
    trainer = Trainer(config, data)
    eval_set = prepare_eval_set(trainer.data.test, config)
    init = trainer.evaluate(eval_set)
    trainer.run(1)
    ckpt = trainer.run(2)
    return SharedRun(config, trainer.data, eval_set, ckpt, init, trainer.evaluate(eval_set), trainer)


def run_step3(shared: SharedRun, config: RunConfig) -> tuple[MetricReport, Trainer]:
    """Step 3 under ``config`` starting from the shared step-2 state.

    Blur-skip variants get a fresh (identity-initialized) module on top of
    the shared parameters.
    """
    trainer = Trainer(config, shared.data)
    state = shared.step2.state["model"]
    missing, unexpected = trainer.model.load_state_dict(state, strict=False)
    if unexpected or any(not k.startswith("seg.blur_skip.") for k in missing):
        raise ParameterError("step-3 variant changes more than the blur-skip module")
    trainer.completed.update({1, 2})
    trainer.run(3)
    return trainer.evaluate(shared.eval_set), trainer


def desk_experiment(seed: int, base: RunConfig | None = None, variants=("joint", "independent", "fo")) -> dict:
    """One seed of the desk comparison; returns MetricReports keyed by variant.

    ``joint``: step 3 with the base config; ``independent``: C trained on the
    frozen step-2 SR output; ``fo``: joint plus the FO weight (m_F = 1) on L_S.
    """
    base = copy.deepcopy(base or RunConfig.desk())
    base.seed = seed
    base.data.synthetic["seed"] = seed
    shared = pretrain(base)
    out = {"init": shared.init_report, "step2": shared.step2_report}
    for v in variants:
        if v == "joint":
            cfg = base
        elif v == "independent":
            cfg = base.replace(**{"train.mode": "independent"})
        elif v == "fo":
            cfg = variant_config(base, "weights", "fo")
        else:
            raise ParameterError(f"unknown variant {v!r}")
        out[v], _ = run_step3(shared, cfg)
    return out


@dataclass
class AblationTable:
    axis: str
    rows: list[dict]
    config_hash: str
    seed: int

    def to_json(self) -> str:
        return json.dumps({"axis": self.axis, "config_hash": self.config_hash, "seed": self.seed,
                           "rows": self.rows}, indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", *REPORT_COLUMNS])
        for r in self.rows:
            w.writerow([r["setting"], *(repr(r["report"][c]) for c in REPORT_COLUMNS)])
        return buf.getvalue()

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"ablation_{self.axis}.json").write_text(self.to_json())
        (out / f"ablation_{self.axis}.csv").write_text(self.to_csv())


def run_ablation(config: RunConfig, axis: str, values=None, shared: SharedRun | None = None) -> AblationTable:
    """One row per setting along ``axis`` (beta, loss, weights, blur_skip)."""
    if axis not in ABLATION_AXES:
        raise ParameterError(f"unknown ablation axis {axis!r}; expected one of {sorted(ABLATION_AXES)}")
    values = list(values or ABLATION_AXES[axis])
    shared = shared or pretrain(config)
    rows = []
    for v in values:
        report, _ = run_step3(shared, variant_config(config, axis, v))
        rows.append({"setting": v, "report": report.to_dict()})
    return AblationTable(axis, rows, config.hash(), config.seed)
