"""Command line: ``python -m crackjoint [--config F] [--seed N] [--out D] <command> ...``.

Exit codes: 0 success, 2 config/parameter error, 3 data error, 4 state or NaN abort.
"""

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import RunConfig
from .degradation import degrade_directory
from .errors import ConfigError, CrackJointError, DataError, StateError
from .experiment import ABLATION_AXES, run_ablation
from .imaging import read_png, write_png
from .metrics import MetricReport, evaluate
from .networks import build_model
from .trainer import Trainer, load_checkpoint, predict_arrays, prepare_eval_set

log = logging.getLogger("crackjoint")


def load_config(args) -> RunConfig:
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        cfg = RunConfig.from_json(path.read_text())
    else:
        cfg = RunConfig.desk()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.data.synthetic["seed"] = args.seed
    if args.out:
        cfg.out = args.out
    return cfg


def _out(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(report: MetricReport, out: Path, stem="report") -> None:
    (out / f"{stem}.json").write_text(report.to_json())
    (out / f"{stem}_sweep.csv").write_text(report.sweep_csv())


def _final_checkpoint(step_dir: Path) -> Path | None:
    done = []
    for p in step_dir.glob("ckpt_*"):
        try:
            c = json.loads((p / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError):
            continue
        if c["step"] >= c["total"]:
            done.append((c["step"], p))
    return max(done)[1] if done else None


def _model_from_checkpoint(cfg: RunConfig, path):
    ckpt = load_checkpoint(path)
    if ckpt.config_hash != cfg.hash():
        raise StateError(f"checkpoint {path} was written under config {ckpt.config_hash}, "
                         f"current config is {cfg.hash()}")
    model = build_model(cfg.network, cfg.seed)
    model.load_state_dict(ckpt.state["model"])
    return model


# commands ---------------------------------------------------------------------

def cmd_degrade(args, cfg):
    out = _out(cfg)
    scale = Fraction(args.scale or cfg.degradation.scale)
    written = degrade_directory(args.input, out, seed=cfg.seed, scale=scale,
                                extra_meta={"config_hash": cfg.hash()})
    print(f"degraded {len(written)} image(s) into {out}")


def cmd_train(args, cfg):
    out = _out(cfg)
    (out / "config.json").write_text(cfg.to_json())
    trainer = Trainer(cfg, out_dir=out)
    resume = args.resume
    if resume is None and args.step > 1:
        resume = _final_checkpoint(out / f"step{args.step - 1}")
        if resume is None:
            raise StateError(f"step {args.step} needs --resume or a finished step-{args.step - 1} "
                             f"checkpoint under {out}")
    ckpt = trainer.run(args.step, resume=resume)
    report = trainer.evaluate()
    _write_report(report, out, f"report_step{args.step}")
    print(f"step {args.step}: checkpoint {ckpt.path}; AIU {report.AIU:.4f}, PSNR {report.PSNR:.2f} dB")


def _read_maps(directory: Path, kind: str) -> dict[str, np.ndarray]:
    if not directory.is_dir():
        raise DataError(f"{kind} directory {directory} not found")
    maps = {p.stem: read_png(p) for p in sorted(directory.glob("*.png"))}
    if not maps:
        raise DataError(f"no PNG files in {directory}")
    return {k: (v.mean(axis=2) if v.ndim == 3 else v) for k, v in maps.items()}


def cmd_eval(args, cfg):
    out = _out(cfg)
    meta = {"config_hash": cfg.hash(), "seed": cfg.seed}
    if args.checkpoint:
        model = _model_from_checkpoint(cfg, args.checkpoint)
        trainer = Trainer(cfg, model=model)
        report = trainer.evaluate(prepare_eval_set(trainer.data.test, cfg))
    else:
        if not (args.pred and args.gt):
            raise ConfigError("eval needs --checkpoint, or both --pred and --gt")
        preds, gts = _read_maps(Path(args.pred), "prediction"), _read_maps(Path(args.gt), "ground-truth")
        names = sorted(set(preds) & set(gts))
        if not names:
            raise DataError("no prediction/ground-truth pairs share a file stem")
        report = evaluate([preds[n] for n in names], [gts[n] >= 0.5 for n in names], names=names, meta=meta)
    _write_report(report, out)
    print(f"IoU_max {report.IoU_max:.4f}  AIU {report.AIU:.4f}  HD95_min {report.HD95_min:.3f}  AHD95 {report.AHD95:.3f}")


def cmd_predict(args, cfg):
    out = _out(cfg)
    model = _model_from_checkpoint(cfg, args.checkpoint)
    threshold, source = 0.5, "default"
    if args.threshold is not None:
        threshold, source = args.threshold, "argument"
    elif args.report:
        threshold = MetricReport.from_dict(json.loads(Path(args.report).read_text())).iou_threshold
        source = f"IoU_max threshold of {args.report}"
    src = Path(args.input)
    files = sorted(src.glob("*.png")) if src.is_dir() else []
    if not files:
        raise DataError(f"no PNG images in {src}")
    lrs = []
    for f in files:
        img = read_png(f)
        lrs.append(np.repeat(img[:, :, None], cfg.network.channels, 2) if img.ndim == 2 else img)
    srs, kernels, probs = predict_arrays(model, lrs)
    text = {"config_hash": cfg.hash(), "seed": str(cfg.seed), "threshold": repr(threshold)}
    for f, sr, k, p in zip(files, srs, kernels, probs):
        write_png(out / "sr" / f"{f.stem}.png", sr, text=text)
        write_png(out / "prob" / f"{f.stem}.png", p, bits=16, text=text)
        write_png(out / "mask" / f"{f.stem}.png", (p >= threshold).astype(np.float64), text=text)
        np.save(out / "sr" / f"{f.stem}_kernel.npy", k)
    record = {"config_hash": cfg.hash(), "seed": cfg.seed, "checkpoint": str(args.checkpoint),
              "threshold": threshold, "threshold_source": source, "images": [f.name for f in files]}
    (out / "predict.json").write_text(json.dumps(record, indent=1, sort_keys=True))
    print(f"wrote {len(files)} prediction(s) to {out} at threshold {threshold}")


def cmd_sweep_plot(args, cfg):
    from .plotting import sweep_plot

    out = _out(cfg)
    reports = {}
    for p in args.reports:
        path = Path(p)
        if not path.is_file():
            raise DataError(f"report {path} not found")
        reports[path.stem] = MetricReport.from_dict(json.loads(path.read_text()))
    target = sweep_plot(reports, out / f"sweep.{args.format}", title=args.title)
    print(f"wrote {target}")


def cmd_ablate(args, cfg):
    out = _out(cfg)
    table = run_ablation(cfg, args.axis, args.values)
    table.write(out)
    print(table.to_csv(), end="")


# wiring -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crackjoint", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="run config JSON (default: desk-scale preset)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("degrade", help="blur + downscale a directory of HR PNGs")
    d.add_argument("input")
    d.add_argument("--scale", choices=["1/2", "1/4", "1/8"])
    d.set_defaults(func=cmd_degrade)

    t = sub.add_parser("train", help="run one training step")
    t.add_argument("--step", type=int, choices=[1, 2, 3], required=True)
    t.add_argument("--resume", help="checkpoint directory ckpt_<n>")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="threshold-sweep evaluation")
    e.add_argument("--checkpoint")
    e.add_argument("--pred", help="directory of probability PNGs")
    e.add_argument("--gt", help="directory of ground-truth mask PNGs")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="SR images, probability maps and masks from LR PNGs")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--threshold", type=float)
    pr.add_argument("--report", help="eval report whose IoU_max threshold becomes the default")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("sweep-plot", help="plot IoU/HD95 threshold curves from reports")
    s.add_argument("reports", nargs="+")
    s.add_argument("--format", choices=["svg", "png"], default="svg")
    s.add_argument("--title")
    s.set_defaults(func=cmd_sweep_plot)

    a = sub.add_parser("ablate", help="step-3 ablation table along one axis")
    a.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    a.add_argument("--values", nargs="+")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args)
        args.func(args, cfg)
    except CrackJointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
