"""Three-step training: SR pre-training, SR finetuning on crack data, joint finetuning.

Batches are a pure function of ``(seed, stage, iteration)``, so a run resumed
from a checkpoint replays exactly the same batches as an uninterrupted one.
"""

import copy
import json
import logging
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, beta_at
from .dataset import Sample, load_split, synth_cracks, synth_textures, Manifest
from .degradation import augment, degrade, item_seed, sample_spec
from .errors import DataError, NaNLossError, StateError
from .imaging import level_set
from .losses import class_balanced_weights, joint_loss, segmentation_loss, sr_loss
from .metrics import MetricReport, evaluate
from .networks import JointNet, build_model
from .weighting import apply_weights, fo_weight_map, sr_weight_maps

log = logging.getLogger(__name__)

__all__ = ["beta_at", "Trainer", "TrainingData", "EvalSet", "Checkpoint", "train_step1",
           "train_step2", "train_step3", "evaluate_model", "load_checkpoint"]


@dataclass
class TrainingData:
    pretrain: list[np.ndarray]
    train: list[Sample]
    test: list[Sample]

    @classmethod
    def from_config(cls, config: RunConfig) -> "TrainingData":
        syn = config.data.synthetic
        c = config.network.channels
        if config.data.manifest:
            manifest = Manifest.from_json(Path(config.data.manifest).read_text())
            train = load_split(manifest, "train")
            test = load_split(manifest, "test")
        else:
            train = synth_cracks(syn["train"], syn["size"], syn["seed"], channels=c)
            test = synth_cracks(syn["test"], syn["size"], syn["seed"] + 1_000_003, channels=c)
        pretrain = synth_textures(syn["pretrain"], syn["size"], syn["seed"] + 2_000_003, channels=c)
        return cls(pretrain, train, test)


@dataclass
class EvalSet:
    lr: list[np.ndarray]
    hr: list[np.ndarray]
    masks: list[np.ndarray]
    kernels: list[np.ndarray]
    names: list[str]


def prepare_eval_set(samples, config: RunConfig, seed: int | None = None) -> EvalSet:
    """Degrade each test image once with a fixed per-image blur."""
    seed = config.seed + 77 if seed is None else seed
    out = EvalSet([], [], [], [], [])
    for i, s in enumerate(samples):
        spec = sample_spec(item_seed(seed, i), config.degradation.fraction, config.degradation.sigma2_range)
        lr, k = degrade(s.image, spec)
        out.lr.append(lr)
        out.hr.append(s.image)
        out.masks.append(s.mask)
        out.kernels.append(k)
        out.names.append(s.name or f"{i:04d}")
    return out


@dataclass
class Batch:
    lr: torch.Tensor        # (B, C, h, w) float32
    hr: torch.Tensor        # (B, C, H, W) float64
    mask: torch.Tensor      # (B, H, W) float64
    levelset: torch.Tensor  # (B, H, W) float64
    kernel: torch.Tensor    # (B, k, k) float64


def make_batch(images, masks, *, stage: int, iteration: int, config: RunConfig) -> Batch:
    rng = np.random.default_rng([config.seed, stage, iteration])
    idx = rng.integers(0, len(images), size=config.train.batch_size)
    seeds = rng.integers(0, 2 ** 62, size=config.train.batch_size)
    lrs, hrs, ms, lss, ks = [], [], [], [], []
    for i, s in zip(idx, seeds):
        img = images[i]
        mask = masks[i] if masks is not None else np.zeros(img.shape[:2], np.uint8)
        patch = min(config.data.patch, img.shape[0], img.shape[1])
        img, mask = augment(img, mask, patch, int(s))
        spec = sample_spec(int(s) + 1, config.degradation.fraction, config.degradation.sigma2_range)
        lr, k = degrade(img, spec)
        lrs.append(lr.transpose(2, 0, 1))
        hrs.append(img.transpose(2, 0, 1))
        ms.append(mask.astype(np.float64))
        lss.append(level_set(mask))
        ks.append(k)
    return Batch(torch.from_numpy(np.stack(lrs)).float(), torch.from_numpy(np.stack(hrs)),
                 torch.from_numpy(np.stack(ms)), torch.from_numpy(np.stack(lss)),
                 torch.from_numpy(np.stack(ks)))


@dataclass
class Checkpoint:
    stage: int
    iteration: int
    total: int
    beta: float
    config_hash: str
    seed: int
    state: dict = field(repr=False, default_factory=dict)
    path: Path | None = None
    metrics: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return self.iteration >= self.total

    def manifest(self) -> dict:
        return {"stage": self.stage, "step": self.iteration, "total": self.total, "beta": self.beta,
                "config_hash": self.config_hash, "seed": self.seed, "metrics": self.metrics}

    def save(self, directory) -> Path:
        path = Path(directory) / f"ckpt_{self.iteration}"
        path.mkdir(parents=True, exist_ok=True)
        torch.save(self.state, path / "params.pt")
        (path / "manifest.json").write_text(json.dumps(self.manifest(), indent=1, sort_keys=True))
        self.path = path
        return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not (path / "manifest.json").is_file() or not (path / "params.pt").is_file():
        raise StateError(f"no checkpoint at {path}")
    m = json.loads((path / "manifest.json").read_text())
    state = torch.load(path / "params.pt", weights_only=False)
    return Checkpoint(m["stage"], m["step"], m["total"], m["beta"], m["config_hash"], m["seed"],
                      state, path, m.get("metrics", {}))


class Trainer:
    """Owns the model, optimizer and training log for one run."""

    def __init__(self, config: RunConfig, data: TrainingData | None = None,
                 model: JointNet | None = None, out_dir=None):
        self.config = config
        self.config_hash = config.hash()
        self.data = data if data is not None else TrainingData.from_config(config)
        if not self.data.train:
            raise DataError("empty crack training set")
        self.model = model if model is not None else build_model(config.network, config.seed)
        self.out_dir = Path(out_dir) if out_dir else (Path(config.out) if config.out else None)
        self.log: list[dict] = []
        self.completed: set[int] = set()
        cw = config.loss.wce_class_weights
        self.class_weights = tuple(cw) if cw else class_balanced_weights(s.mask for s in self.data.train)
        self._t0 = time.perf_counter()
        self._last_ms = -1

    # ---- helpers -------------------------------------------------------
    def _optimizer(self, stage: int) -> torch.optim.Optimizer:
        tc = self.config.train
        kw = dict(betas=tc.adam_betas, eps=tc.adam_eps)
        if stage == 1:
            return torch.optim.Adam(self.model.sr.parameters(), lr=tc.lr_pretrain, **kw)
        if stage == 2:
            return torch.optim.Adam(self.model.sr.parameters(), lr=tc.lr_finetune, **kw)
        seg_group = {"params": list(self.model.seg.parameters()), "lr": tc.lr_seg or tc.lr_finetune}
        if tc.mode == "independent":
            return torch.optim.Adam([seg_group], **kw)
        return torch.optim.Adam([{"params": list(self.model.sr.parameters()), "lr": tc.lr_finetune},
                                 seg_group], **kw)

    def _set_trainable(self, stage: int) -> None:
        sr_on = stage in (1, 2) or self.config.train.mode == "joint"
        for p in self.model.sr.parameters():
            p.requires_grad_(sr_on)
        for p in self.model.seg.parameters():
            p.requires_grad_(stage == 3)

    def _beta(self, stage: int, t: int, total: int) -> float:
        if stage < 3:
            return 0.0
        if self.config.train.mode == "independent":
            return 1.0
        return beta_at(t, total, self.config.beta_schedule)

    def _snapshot(self, opt) -> dict:
        return {"model": copy.deepcopy(self.model.state_dict()), "optimizer": copy.deepcopy(opt.state_dict())}

    def _emit(self, entry: dict) -> None:
        ms = int((time.perf_counter() - self._t0) * 1000)
        ms = max(ms, self._last_ms)
        self._last_ms = ms
        entry["wallclock_ms"] = ms
        self.log.append(entry)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with open(self.out_dir / "train_log.jsonl", "a") as fh:
                fh.write(json.dumps(entry) + "\n")

    def _nan_abort(self, stage, t, batch: Batch, parts: dict):
        dump = self.out_dir or Path(tempfile.mkdtemp(prefix="crackjoint_nan_"))
        dump.mkdir(parents=True, exist_ok=True)
        np.savez(dump / "nan_batch.npz", lr=batch.lr.numpy(), hr=batch.hr.numpy(),
                 mask=batch.mask.numpy(), kernel=batch.kernel.numpy())
        (dump / "nan_losses.json").write_text(json.dumps({"stage": stage, "step": t, **parts}))
        raise NaNLossError(f"non-finite loss at stage {stage} step {t}: {parts}; dump in {dump}")

    # ---- one iteration -------------------------------------------------
    def losses(self, batch: Batch, stage: int, beta: float):
        """Forward pass; returns ``(L_J, L_S, L_C)`` as float64 tensors (L_C None before stage 3)."""
        cfg = self.config
        independent = stage == 3 and cfg.train.mode == "independent"
        if stage < 3:
            sr, kp = self.model.sr(batch.lr)
            probs = None
        else:
            sr, kp, probs = self.model(batch.lr, detach_sr=independent)
        terms = sr_loss(sr.double(), batch.hr, kp.double(), batch.kernel, cfg.loss.kernel_loss_weight)
        maps = []
        l_c = None
        if probs is not None:
            p64 = probs.double()
            wc = cfg.weights
            maps = sr_weight_maps(wc, p64.detach(), batch.mask, batch.levelset, cfg.loss, self.class_weights)
            seg_pw = None
            if wc.use_fo_weight and wc.fo_target == "seg_loss":
                seg_pw = fo_weight_map(p64.detach()[:, 1], batch.mask, wc.m_F)
            l_c = segmentation_loss(p64, batch.mask, batch.levelset, cfg.loss, self.class_weights, seg_pw)
        l_s = apply_weights(terms.pixel_map, maps) + terms.kernel_weight * terms.kernel
        l_j = l_s if l_c is None else joint_loss(l_s, l_c, beta)
        return l_j, l_s, l_c

    # ---- stages --------------------------------------------------------
    def run(self, stage: int, resume: Checkpoint | str | Path | None = None,
            stop_at: int | None = None) -> Checkpoint:
        """Train ``stage`` (1, 2 or 3) to completion, or until ``stop_at`` iterations."""
        if stage not in (1, 2, 3):
            raise StateError(f"unknown stage {stage}")
        if isinstance(resume, (str, Path)):
            resume = load_checkpoint(resume)
        total = self.config.train.iters(stage)
        start = 0
        opt_state = None
        if resume is not None:
            if resume.stage == stage:
                if resume.config_hash != self.config_hash:
                    raise StateError("checkpoint was written under a different config")
                start, opt_state = resume.iteration, resume.state.get("optimizer")
            elif not (resume.stage == stage - 1 and resume.complete):
                raise StateError(f"checkpoint (stage {resume.stage}, step {resume.iteration}) cannot start stage {stage}")
            try:
                self.model.load_state_dict(resume.state["model"])
            except (KeyError, RuntimeError) as exc:
                raise StateError(f"checkpoint parameters do not fit this model: {exc}") from exc
            self.completed.update(range(1, resume.stage + (1 if resume.complete else 0)))
        elif stage > 1 and stage - 1 not in self.completed:
            raise StateError(f"stage {stage} needs a completed stage-{stage - 1} checkpoint")

        self._set_trainable(stage)
        opt = self._optimizer(stage)
        if opt_state is not None:
            opt.load_state_dict(opt_state)
        images = [x for x in self.data.pretrain] if stage == 1 else [s.image for s in self.data.train]
        masks = None if stage == 1 else [s.mask for s in self.data.train]
        if not images:
            raise DataError(f"no training images for stage {stage}")
        end = total if stop_at is None else min(stop_at, total)
        lrs = [g["lr"] for g in opt.param_groups]
        self.model.train()
        beta = self._beta(stage, start, total)
        for t in range(start, end):
            beta = self._beta(stage, t, total)
            batch = make_batch(images, masks, stage=stage, iteration=t, config=self.config)
            opt.zero_grad(set_to_none=True)
            l_j, l_s, l_c = self.losses(batch, stage, beta)
            parts = {"L_J": l_j.item(), "L_S": l_s.item(), "L_C": None if l_c is None else l_c.item()}
            if not all(math.isfinite(v) for v in parts.values() if v is not None):
                self._nan_abort(stage, t, batch, parts)
            l_j.backward()
            opt.step()
            self._emit({"stage": stage, "step": t, **parts, "beta": beta, "lr": lrs[0]})
            every = self.config.train.ckpt_every
            if every and self.out_dir is not None and (t + 1) % every == 0 and t + 1 < end:
                self._checkpoint(stage, t + 1, total, beta, opt)
        ckpt = self._checkpoint(stage, end, total, beta, opt)
        if ckpt.complete:
            self.completed.add(stage)
        return ckpt

    def _checkpoint(self, stage, iteration, total, beta, opt) -> Checkpoint:
        ckpt = Checkpoint(stage, iteration, total, beta, self.config_hash, self.config.seed,
                          self._snapshot(opt))
        if self.out_dir is not None:
            ckpt.save(self.out_dir / f"step{stage}")
        return ckpt

    def evaluate(self, eval_set: EvalSet | None = None) -> MetricReport:
        eval_set = eval_set or prepare_eval_set(self.data.test, self.config)
        return evaluate_model(self.model, eval_set,
                              meta={"config_hash": self.config_hash, "seed": self.config.seed})


def train_step1(model, data, config, out_dir=None) -> Checkpoint:
    return Trainer(config, data, model, out_dir).run(1)


def train_step2(model, data, config, checkpoint, out_dir=None) -> Checkpoint:
    if checkpoint is None:
        raise StateError("step 2 needs the step-1 checkpoint")
    return Trainer(config, data, model, out_dir).run(2, resume=checkpoint)


def train_step3(model, data, config, checkpoint, out_dir=None) -> Checkpoint:
    if checkpoint is None:
        raise StateError("step 3 needs the step-2 checkpoint")
    return Trainer(config, data, model, out_dir).run(3, resume=checkpoint)


@torch.no_grad()
def predict_arrays(model: JointNet, lr_images, batch_size: int = 8):
    """Run the joint network on numpy LR images; returns (sr, kernels, crack_probs)."""
    model.eval()
    srs, ks, ps = [], [], []
    for i in range(0, len(lr_images), batch_size):
        chunk = lr_images[i:i + batch_size]
        x = torch.from_numpy(np.stack([np.atleast_3d(a).transpose(2, 0, 1) for a in chunk])).float()
        sr, k, probs = model(x)
        srs += [a.transpose(1, 2, 0) for a in sr.double().numpy()]
        ks += list(k.double().numpy())
        ps += list(probs[:, 1].double().numpy())
    model.train()
    return srs, ks, ps


def evaluate_model(model: JointNet, eval_set: EvalSet, meta=None, thresholds=None) -> MetricReport:
    srs, ks, ps = predict_arrays(model, eval_set.lr)
    return evaluate(ps, eval_set.masks, names=eval_set.names, thresholds=thresholds,
                    sr=srs, hr=eval_set.hr, pred_kernels=ks, gt_kernels=eval_set.kernels, meta=meta)
