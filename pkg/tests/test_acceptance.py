"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line in ``RESULTS``; the conftest hook
prints them after the run.  Run directly (``python tests/test_acceptance.py``)
to execute all criteria and print the lines without pytest.
"""

import json
import statistics
import time

import numpy as np
import pytest
import torch

from crackjoint.cli import main as cli_main
from crackjoint.config import RunConfig
from crackjoint.dataset import synth_textures
from crackjoint.degradation import item_seed, load_sidecar, sample_spec
from crackjoint.experiment import pretrain, run_step3, variant_config
from crackjoint.imaging import distance_transform, gaussian_kernel, level_set, read_png, write_png
from crackjoint.losses import LossConfig, bc_loss, boundary_loss, dice_loss, gdice_loss, wce_loss
from crackjoint.metrics import DEFAULT_THRESHOLDS, hd95, iou_sweep
from crackjoint.networks import NetworkConfig, build_model
from crackjoint.trainer import Trainer, TrainingData
from crackjoint.weighting import apply_weights
from oracles import brute_distance, brute_hd95, brute_iou, finite_diff, rel_err
import test_losses as L

RESULTS: dict[int, str] = {}
DESK_SEEDS = (0, 1, 2)


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


# 1 --------------------------------------------------------------------------

def test_c1_gradients():
    t0 = time.perf_counter()
    W = L.W
    worst = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for seed in range(20):
        z, g, phi = L.random_case(seed)
        gt, ls = torch.from_numpy(g), torch.from_numpy(phi)
        s = np.random.default_rng(seed).random((8, 8))
        _, grad = L.value_and_grad(boundary_loss, s, ls)
        note("L_B", rel_err(grad, finite_diff(lambda x: L.ref_boundary(x, phi), s)))
        note("L_D", L.check_grad(lambda p: dice_loss(p, gt), lambda p: L.ref_dice(p, g), z))
        note("L_GD", L.check_grad(lambda p: gdice_loss(p, gt), lambda p: L.ref_gdice(p, g), z))
        note("L_WCE", L.check_grad(lambda p: wce_loss(p, gt, W), lambda p: L.ref_wce(p, g), z))
        note("L_BC", L.check_grad(lambda p: bc_loss(p, gt, ls, LossConfig(), False, W),
                                  lambda p: L.ref_bc(p, g, phi), z))
        note("L_GBC", L.check_grad(lambda p: bc_loss(p, gt, ls, LossConfig(), True, W),
                                   lambda p: L.ref_bc(p, g, phi, generalized=True), z))
        note("L_SR", L.sr_gradient_error(seed))
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-4 for v in worst.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(1, ok, f"max rel. err over 20 seeds: {detail}; {elapsed:.1f} s (< 60 s)")


# 2 --------------------------------------------------------------------------

def test_c2_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    dist_err = 0.0
    for _ in range(50):
        h, w = rng.integers(2, 17, 2)
        m = rng.random((h, w)) < rng.uniform(0.02, 0.5)
        m.flat[rng.integers(m.size)] = True
        dist_err = max(dist_err, float(np.abs(distance_transform(m) - brute_distance(m)).max()))
    hd_err = 0.0
    for _ in range(50):
        a, b = np.zeros((32, 32), bool), np.zeros((32, 32), bool)
        for m in (a, b):
            n = int(rng.integers(1, 65))
            m[rng.integers(0, 32, n), rng.integers(0, 32, n)] = True
        hd_err = max(hd_err, abs(hd95(a, b) - brute_hd95(a, b)))
    sweep_err = 0.0
    for _ in range(50):
        preds = [rng.random((12, 12)) for _ in range(4)]
        gts = [rng.random((12, 12)) < 0.2 for _ in range(4)]
        ref = [sum(brute_iou(p >= t, g) for p, g in zip(preds, gts)) / 4 for t in DEFAULT_THRESHOLDS]
        sweep_err = max(sweep_err, float(np.abs(iou_sweep(preds, gts).values - ref).max()))
    red_err = 0.0
    for _ in range(50):
        shape = (2, int(rng.integers(2, 17)), int(rng.integers(2, 17)))
        loss, w1, w2 = rng.random(shape), rng.random(shape) + 0.1, rng.random(shape) + 0.1
        naive = sum(loss[i] * w1[i] * w2[i] for i in np.ndindex(shape)) / loss.size
        got = apply_weights(torch.from_numpy(loss), [torch.from_numpy(w1), torch.from_numpy(w2)]).item()
        red_err = max(red_err, abs(got - naive))
    elapsed = time.perf_counter() - t0
    ok = dist_err <= 1e-9 and hd_err <= 1e-9 and sweep_err <= 1e-12 and red_err <= 1e-12 and elapsed < 120
    record(2, ok, f"EDT err {dist_err:.1e}, HD95 err {hd_err:.1e}, IoU sweep err {sweep_err:.1e}, "
                  f"weighted reduction err {red_err:.1e}; {elapsed:.1f} s (< 120 s)")


# 3 --------------------------------------------------------------------------

def test_c3_loss_identities():
    rng = np.random.default_rng(3)
    zero_ok, boundary_ok, recomposition = True, 0, 0.0
    for _ in range(100):
        g = rng.random((10, 10)) < rng.uniform(0.05, 0.5)
        if g.all() or not g.any():
            g[0, 0] = not g[0, 0]
        gt = torch.from_numpy(g.astype(float))
        p = torch.stack([1 - gt, gt])
        zero_ok &= dice_loss(p, gt).item() == 0.0 and wce_loss(p, gt).item() < 1e-6
        ls = torch.from_numpy(level_set(g))
        boundary_ok += boundary_loss(gt, ls).item() < boundary_loss(1 - gt, ls).item()
        q = torch.softmax(torch.from_numpy(rng.normal(size=(2, 10, 10))), 0)
        parts = boundary_loss(q[1], ls), dice_loss(q, gt), wce_loss(q, gt, (0.7, 2.0))
        expect = 0.5 * parts[0] + 0.25 * parts[1] + 0.25 * parts[2]
        got = bc_loss(q, gt, ls, LossConfig(alpha=0.5, gamma=0.5), class_weights=(0.7, 2.0))
        recomposition = max(recomposition, abs(got.item() - expect.item()))
    ok = zero_ok and boundary_ok == 100 and recomposition <= 1e-9
    record(3, ok, f"L_D=L_WCE=0 at perfect prediction: {zero_ok}; L_B(g)<L_B(1-g) on {boundary_ok}/100; "
                  f"BC recomposition err {recomposition:.1e}")


# 4 --------------------------------------------------------------------------

def _small_config(**kw) -> RunConfig:
    cfg = RunConfig.desk(step1_iters=20, step2_iters=20, step3_iters=40, batch_size=2)
    cfg = cfg.replace(**{"network.sr_features": 8, "network.sr_blocks": 1, "network.seg_base": 8,
                         "network.kernel_embed": 8})
    cfg.data.synthetic.update(train=8, test=4, pretrain=8)
    return cfg.replace(**kw)


def test_c4_joint_recomposition():
    worst, schedule_ok, steps = 0.0, True, 0
    data = TrainingData.from_config(_small_config())
    tr = Trainer(_small_config(), data)
    tr.run(1)
    c2 = tr.run(2)
    for e in tr.log:
        schedule_ok &= e["beta"] == 0.0 and e["L_J"] == e["L_S"]
    for schedule in ("fixed:0.3", "fixed:0.5", "increasing"):
        t3 = Trainer(_small_config(**{"train.beta_schedule": schedule}), data)
        t3.run(3, resume=c2)
        for e in t3.log:
            b = e["beta"]
            expect_b = e["step"] / 40 if schedule == "increasing" else float(schedule.split(":")[1])
            schedule_ok &= b == expect_b
            worst = max(worst, abs(e["L_J"] - ((1 - b) * e["L_S"] + b * e["L_C"])))
            steps += 1
    ok = worst <= 1e-9 and schedule_ok
    record(4, ok, f"{steps} step-3 log entries, max |L_J - recomposition| {worst:.1e}; "
                  f"beta follows fixed/increasing schedules: {schedule_ok}")


# 5, 6, 7, 8 share one desk run per seed ---------------------------------------

def desk_config(seed: int) -> RunConfig:
    cfg = RunConfig.desk().replace(**{"loss.beta": 0.5, "loss.loss": "bc"})
    cfg.seed = seed
    cfg.data.synthetic.update(train=64, test=16, size=64, seed=seed)
    return cfg


@pytest.fixture(scope="module")
def desk():
    t0 = time.perf_counter()
    runs = {}
    for seed in DESK_SEEDS:
        cfg = desk_config(seed)
        shared = pretrain(cfg)
        reports = {"init": shared.init_report, "step2": shared.step2_report}
        reports["joint"], _ = run_step3(shared, cfg)
        reports["independent"], _ = run_step3(shared, cfg.replace(**{"train.mode": "independent"}))
        reports["fo"], _ = run_step3(shared, variant_config(cfg, "weights", "fo"))
        runs[seed] = {"shared": shared, "reports": reports}
    runs["elapsed"] = time.perf_counter() - t0
    return runs


def test_c5_joint_vs_independent(desk):
    aiu = {v: [desk[s]["reports"][v].AIU for s in DESK_SEEDS] for v in ("init", "joint", "independent")}
    med = {v: statistics.median(x) for v, x in aiu.items()}
    # the criterion's 30 min covers the three seeds of the joint/baseline comparison;
    # the FO runs of criterion 7 share the fixture and are included in the time shown
    elapsed = desk["elapsed"]
    ok = (med["joint"] >= med["independent"] and med["joint"] >= med["init"] + 0.2
          and med["independent"] >= med["init"] + 0.2 and elapsed < 1800)
    per_seed = "; ".join(f"seed {s}: init {aiu['init'][i]:.3f} joint {aiu['joint'][i]:.3f} "
                         f"indep {aiu['independent'][i]:.3f}" for i, s in enumerate(DESK_SEEDS))
    record(5, ok, f"median AIU joint {med['joint']:.3f} vs independent {med['independent']:.3f}, "
                  f"init {med['init']:.3f} (+0.2 = {med['init'] + 0.2:.3f}); {elapsed / 60:.1f} min; {per_seed}")


def test_c6_blur_skip(desk):
    net = desk_config(DESK_SEEDS[0]).network
    # identity at init: same seed with and without the module gives bit-identical outputs
    plain = build_model(net, 7)
    skip = build_model(NetworkConfig(**{**net.to_dict(), "blur_skip": True}), 7)
    x = torch.rand(2, 3, 16, 16)
    with torch.no_grad():
        sr, k, p0 = plain(x)
        feats = skip.seg.features(sr)
        modulated = skip.seg.blur_skip(feats, k)
        _, _, p1 = skip(x)
    identity = torch.equal(p0, p1) and torch.equal(feats, modulated)
    # after a desk step 3 with the skip on, both branches moved away from their init
    shared = desk[DESK_SEEDS[0]]["shared"]
    cfg = variant_config(shared.config, "blur_skip", "on")
    start = build_model(cfg.network, cfg.seed).seg.blur_skip
    report, tr = run_step3(shared, cfg)
    trained = tr.model.seg.blur_skip
    moves = {name: float(sum((p - q).abs().sum() for p, q in
                             zip(getattr(trained, name).parameters(), getattr(start, name).parameters())))
             for name in ("scale", "shift")}
    ok = identity and all(v > 0 for v in moves.values())
    record(6, ok, f"bit-identical at init: {identity}; L1 parameter movement after step 3: "
                  f"scale {moves['scale']:.3e}, shift {moves['shift']:.3e} (AIU with skip {report.AIU:.3f})")


def test_c7_fo_weight(desk):
    joint = [desk[s]["reports"]["joint"].AIU for s in DESK_SEEDS]
    fo = [desk[s]["reports"]["fo"].AIU for s in DESK_SEEDS]
    drop = statistics.median(joint) - statistics.median(fo)
    ok = drop <= 0.02
    pairs = ", ".join(f"{a:.3f}->{b:.3f}" for a, b in zip(joint, fo))
    record(7, ok, f"median AIU unweighted {statistics.median(joint):.3f}, with w^F (m_F=1) "
                  f"{statistics.median(fo):.3f}, drop {drop:+.3f} (<= 0.02); per seed {pairs}")


def test_c8_report_invariants(desk):
    reports = [r for s in DESK_SEEDS for r in desk[s]["reports"].values()]
    invariant = all(r.IoU_max >= r.AIU and r.HD95_min <= r.AHD95 for r in reports)
    # repeated seeded runs give byte-identical reports
    jsons = []
    for _ in range(2):
        cfg = _small_config()
        shared = pretrain(cfg)
        report, _ = run_step3(shared, cfg)
        jsons.append(report.to_json().encode())
    identical = jsons[0] == jsons[1]
    ok = invariant and identical
    record(8, ok, f"invariants hold on {len(reports)} desk reports: {invariant}; "
                  f"repeated seeded run byte-identical: {identical} ({len(jsons[0])} bytes)")


# 9 --------------------------------------------------------------------------

def test_c9_degrade_roundtrip(tmp_path):
    src = tmp_path / "hr"
    for i, img in enumerate(synth_textures(3, 448, seed=9)):
        write_png(src / f"img{i}.png", img)
    code = cli_main(["--seed", "5", "--out", str(tmp_path / "lr"), "degrade", str(src)])
    shapes_ok, exact, sums = True, True, []
    for i in range(3):
        shapes_ok &= read_png(tmp_path / "lr" / f"img{i}.png").shape == (112, 112, 3)
        spec, kernel = load_sidecar(tmp_path / "lr" / f"img{i}.json")
        exact &= spec == sample_spec(item_seed(5, i))
        exact &= np.array_equal(kernel, gaussian_kernel(spec.sigma_a, spec.sigma_b, spec.theta))
        raw = json.loads((tmp_path / "lr" / f"img{i}.json").read_text())["kernel"]
        exact &= len(raw) == 441 and np.array_equal(np.array(raw).reshape(21, 21), kernel)
        sums.append(abs(kernel.sum() - 1))
    ok = code == 0 and shapes_ok and exact and max(sums) <= 1e-9
    record(9, ok, f"exit {code}; 448x448 -> 112x112: {shapes_ok}; sidecar kernels bit-exact: {exact}; "
                  f"max |sum - 1| {max(sums):.1e}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
