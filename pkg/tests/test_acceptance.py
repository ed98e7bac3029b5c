"""Acceptance criteria 1-9.

Each test prints one ``PASS``/``FAIL`` line with its measured value, the
tolerance and the runtime against its budget, then asserts both. Run with
``pytest tests/test_acceptance.py -v`` (the lines bypass output capture) or
directly with ``python tests/test_acceptance.py``.
"""

import itertools
import math
import os
import sys
import tempfile
import time
from collections import Counter

import numpy as np
import pytest

from pixart_desk.dataops import Bucket, Manifest, ManifestRecord, batch_scheduler, caption_stats, make_buckets
from pixart_desk.diffusion import (
    DPM_SOLVER_2, IDDPM, DiffusionSchedule, GaussianEpsilonOracle, SamplerConfig,
    diffusion_loss, dpm_solver_2_sample, sample,
)
from pixart_desk.model.config import (
    DIT_CLASS_CONDITIONAL, T2I_ADALN_PER_BLOCK, T2I_ADALN_SINGLE, desk_preset, xl_preset,
)
from pixart_desk.model.network import PixArtModel, TextCondition
from pixart_desk.model.params import param_count
from pixart_desk.pipeline import StageConfig, make_two_mode_dataset, run_plan, run_stage
from pixart_desk.reparam.checkpoint import Checkpoint
from pixart_desk.reparam.surgery import modulation_residual, reparameterize
from pixart_desk.tensorcore import make_rng, no_grad
from pixart_desk.tensorcore.gradcheck import finite_difference_check

sys.path.insert(0, os.path.dirname(__file__))
from reference import closed_form_count  # noqa: E402

SCHED = DiffusionSchedule.make()


def report(num, title, ok, detail, elapsed, budget, out=print):
    in_time = elapsed < budget
    status = "PASS" if ok and in_time else "FAIL"
    out(f"[{status}] criterion {num}: {title} | {detail} | {elapsed:.2f}s (budget {budget:g}s)")
    return ok and in_time


@pytest.fixture
def emit(capsys):
    def out(line):
        with capsys.disabled():
            print("\n" + line)
    return out


def desk_dit_checkpoint(seed=7):
    cfg = desk_preset(DIT_CLASS_CONDITIONAL)
    return Checkpoint(cfg, PixArtModel(cfg, seed=seed, init="random").state_dict(), {})


# -- 1 -------------------------------------------------------------------------------------

def criterion_1(out=print):
    t0 = time.perf_counter()
    src = desk_dit_checkpoint()
    target, _ = reparameterize(src, t_star=500, seed=0)
    residual = float(modulation_residual(src, target, 500).max())
    e0_zero = bool(np.all(target.weights["blocks.0.mod_embed"] == 0.0))
    ok = residual < 1e-10 and e0_zero
    return report(1, "re-param modulation equality at t=500", ok,
                  f"max residual {residual:.3e} (< 1e-10), E0 exactly zero: {e0_zero}",
                  time.perf_counter() - t0, 1, out)


# -- 2 -------------------------------------------------------------------------------------

def criterion_2(out=print):
    t0 = time.perf_counter()
    src = desk_dit_checkpoint()
    target, _ = reparameterize(src, t_star=500, seed=0)
    a_model = PixArtModel(src.config, src.weights)
    b_model = PixArtModel(target.config, target.weights)
    rng = make_rng(2, "acceptance")
    x = rng.standard_normal((20, 4, 8, 8))
    cond = TextCondition.stack([
        TextCondition.from_tokens(rng.standard_normal((int(rng.integers(1, 121)), 64)) * 3.0)
        for _ in range(20)])
    with no_grad():
        a = a_model(x, 500.0).data
        b = b_model(x, 500.0, cond).data
    err = float(np.max(np.abs(a - b)))
    return report(2, "zero-init identity of surged model", err < 1e-8,
                  f"max abs diff {err:.3e} over 20 latents (< 1e-8)", time.perf_counter() - t0, 10, out)


# -- 3 -------------------------------------------------------------------------------------

def criterion_3(out=print):
    t0 = time.perf_counter()
    dit = param_count(xl_preset(DIT_CLASS_CONDITIONAL))
    per_block = param_count(xl_preset(T2I_ADALN_PER_BLOCK))
    single = param_count(xl_preset(T2I_ADALN_SINGLE))
    exact = all(c["total"] == closed_form_count(xl_preset(v)) for c, v in
                [(dit, DIT_CLASS_CONDITIONAL), (per_block, T2I_ADALN_PER_BLOCK), (single, T2I_ADALN_SINGLE)])
    share = dit["adaln"] / dit["total"]
    saving = 1 - single["total"] / per_block["total"]
    ok_a = abs(share - 0.27) <= 0.05
    ok_b = 0.24 <= saving <= 0.28
    elapsed = time.perf_counter() - t0
    ra = report("3a", "adaLN share of class-conditional XL", ok_a and exact,
                f"{dit['adaln']:,}/{dit['total']:,} = {share:.2%} (target 27% +- 5pp), "
                f"closed form match: {exact}", elapsed, 1, out)
    rb = report("3b", "adaLN-single saving vs per-block T2I at XL", ok_b and exact,
                f"1 - {single['total']:,}/{per_block['total']:,} = {saving:.2%} (target [24%, 28%]), "
                f"closed form match: {exact}", elapsed, 1, out)
    return ra, rb


# -- 4 -------------------------------------------------------------------------------------

def criterion_4(out=print):
    t0 = time.perf_counter()
    cfg = desk_preset(T2I_ADALN_SINGLE)
    model = PixArtModel(cfg, seed=4, init="random")
    rng = make_rng(4, "gradcheck")
    x0 = rng.standard_normal((2, 4, 8, 8))
    t = np.array([120.0, 730.0])
    noise = rng.standard_normal(x0.shape)
    cond = TextCondition.stack([TextCondition.from_tokens(rng.standard_normal((n, 64))) for n in (3, 6)])
    names = list(model.params)
    picks = rng.choice(len(names), 26, replace=False)
    worst, n_checked = 0.0, 0
    for i in picks:
        name = names[i]
        p = model.params[name]
        idx = list(rng.choice(p.size, min(2, p.size), replace=False))

        def f(v, name=name):
            model.params[name] = v
            return diffusion_loss(model, x0, t, noise, SCHED, cond)

        worst = max(worst, finite_difference_check(f, p, indices=idx))
        model.params[name] = p
        n_checked += len(idx)
    ok = worst < 1e-4 and n_checked >= 50
    return report(4, "finite-difference gradient of full forward + loss", ok,
                  f"{n_checked} parameters over {len(picks)} tensors, max rel err {worst:.2e} (< 1e-4)",
                  time.perf_counter() - t0, 60, out)


# -- 5 -------------------------------------------------------------------------------------

def criterion_5(out=print):
    t0 = time.perf_counter()
    mu, sigma = 2.0, 0.5
    oracle = GaussianEpsilonOracle(mu, sigma, SCHED)
    details, ok = [], True
    for kind in (IDDPM, DPM_SOLVER_2):
        cfg = SamplerConfig(kind=kind, steps=20 if kind == DPM_SOLVER_2 else None, seed=5)
        x = sample(oracle, (2000, 1), None, cfg, SCHED)
        em = abs(x.mean() - mu) / mu
        ev = abs(x.var() - sigma ** 2) / sigma ** 2
        ok &= em < 0.05 and ev < 0.10
        details.append(f"{kind}: mean err {em:.2%}, var err {ev:.2%}")
    x_T = make_rng(0, "endpoint").standard_normal((500, 1)) * oracle.marginal_std(999.0)
    exact = oracle.flow_map(x_T, 999.0, 0.0)
    errs = []
    for n in (10, 20, 40):
        x = dpm_solver_2_sample(oracle, x_T.shape, None, SamplerConfig(steps=n), SCHED, x_T=x_T)
        errs.append(float(np.max(np.abs(x - exact))))
    mono = errs[0] > errs[1] > errs[2]
    ok &= mono
    details.append("endpoint err 10/20/40 steps " + "/".join(f"{e:.1e}" for e in errs))
    return report(5, "sampler recovery of analytic Gaussian", ok, "; ".join(details),
                  time.perf_counter() - t0, 120, out)


# -- 6 -------------------------------------------------------------------------------------

def alternation_holds(sizes, batch_size, seed):
    recs = [ManifestRecord(f"b{b}_{k}", "x", 8, 8, bucket_id=b, latent_path="x.npy")
            for b, n in enumerate(sizes) for k in range(n)]
    plan = batch_scheduler(Manifest(recs), [Bucket(i, 8, 8) for i in range(4)], batch_size, seed)
    left = Counter(b.bucket_id for b in plan)
    seq = [b.bucket_id for b in plan]
    for i, b in enumerate(plan.batches):
        if len({r.bucket_id for r in b.records}) != 1:
            return False
        left[b.bucket_id] -= 1
        others = [k for k, v in left.items() if v > 0 and k != b.bucket_id]
        if i + 1 < len(seq) and others and seq[i + 1] == b.bucket_id:
            return False
    return True


def criterion_6(out=print):
    t0 = time.perf_counter()
    target = 512 * 512
    buckets = make_buckets(target, 40, 0.25, 4.0, quantum=16)
    aspects = [b.aspect for b in buckets]
    areas_ok = all(abs(b.area - target) <= 0.125 * target for b in buckets)
    span_ok = math.isclose(min(aspects), 0.25, rel_tol=0.02) and math.isclose(max(aspects), 4.0, rel_tol=0.02)
    cases = 0
    alt_ok = True
    for sizes in itertools.product(range(0, 7), repeat=4):
        if sum(s // 2 for s in sizes) == 0:
            continue
        for seed in range(2):
            alt_ok &= alternation_holds(sizes, 2, seed)
            cases += 1
    ok = len(buckets) == 40 and areas_ok and span_ok and alt_ok
    return report(6, "bucket generation and single-bucket alternating batches", ok,
                  f"{len(buckets)} buckets, aspects {min(aspects):.3f}..{max(aspects):.3f}, "
                  f"areas within 12.5%: {areas_ok}; alternation over {cases} 4-bucket cases: {alt_ok}",
                  time.perf_counter() - t0, 5, out)


# -- 7 -------------------------------------------------------------------------------------

def criterion_7(out=print):
    t0 = time.perf_counter()
    checks = []

    def expect(caps, vn, dn, total, avg):
        s = caption_stats(caps)
        checks.append((s.valid_nouns, s.distinct_nouns, s.total_nouns, s.avg_per_image) == (vn, dn, total, avg))

    expect([], 0, 0, 0, 0.0)
    expect(["a cat"] * 11, 1, 1, 11, 1.0)
    expect(["a cat"] * 10, 0, 1, 10, 1.0)
    expect(["a cat on the mat"] * 10 + ["the cat"], 1, 2, 21, 21 / 11)
    expect(["The dog chased a ball in the garden"] * 12 + ["a quiet street", ""], 3, 4, 37, 37 / 14)
    ok = all(checks)
    return report(7, "caption noun statistics on hand-built corpora", ok,
                  f"{sum(checks)}/{len(checks)} corpora match hand counts (10 invalid, 11 valid)",
                  time.perf_counter() - t0, 1, out)


# -- 8 -------------------------------------------------------------------------------------

def desk_stages(sq, multi, second_init="reparam"):
    common = dict(lr=1e-3, batch_size=8, resolution=8)
    return [
        StageConfig(name="pixel_dependency", manifest_path=sq, variant=DIT_CLASS_CONDITIONAL,
                    steps=200, **common),
        StageConfig(name="text_image_align", manifest_path=sq, init_from=second_init, steps=200, **common),
        StageConfig(name="high_aesthetics", manifest_path=multi, init_from="previous", steps=100,
                    multi_aspect=True, bucket_count=5, **common),
    ]


def criterion_8(out=print):
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as d:
        sq = make_two_mode_dataset(os.path.join(d, "sq"), n=64, seed=0)
        multi = make_two_mode_dataset(os.path.join(d, "multi"), n=64, seed=1,
                                      sizes=((8, 8), (4, 16), (16, 4)))
        model_cfg = desk_preset(num_classes=2)
        main = run_plan(desk_stages(sq, multi), model_cfg, 0, os.path.join(d, "main"))
        ran = len(main.stages) == 3 and all(os.path.exists(s.checkpoint_path) for s in main.stages)
        l2 = main.stages[1].losses
        q = len(l2) // 4
        head, tail = float(np.mean(l2[:q])), float(np.mean(l2[-q:]))
        slope = float(np.polyfit(np.arange(len(l2)), l2, 1)[0])
        trend = tail < head and slope < 0

        ablation_stage = desk_stages(sq, multi, "scratch")[1]
        ablation = run_stage(ablation_stage, None, 0, model_config=model_cfg, label="w/o re-param")
        step0_reparam, step0_scratch = l2[0], ablation.losses[0]

        overfit = StageConfig(name="text_image_align", manifest_path=sq, steps=2000, batch_size=4,
                              lr=1e-3, weight_decay=0.0, overfit=True)
        of = run_stage(overfit, None, 0, model_config=model_cfg)
    ok = ran and trend and of.losses[-1] < 0.05 and step0_scratch > step0_reparam
    return report(8, "three-stage desk training smoke", ok,
                  f"3 stages ran: {ran}; stage-2 loss first/last quarter {head:.4f}->{tail:.4f} "
                  f"(slope {slope:.1e}); overfit final loss {of.losses[-1]:.4f} (< 0.05); step-0 loss "
                  f"re-param {step0_reparam:.4f} < w/o re-param {step0_scratch:.4f}",
                  time.perf_counter() - t0, 600, out)


# -- 9 -------------------------------------------------------------------------------------

def criterion_9(out=print):
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as d:
        sq = make_two_mode_dataset(os.path.join(d, "sq"), n=32, seed=0)
        stage = StageConfig(name="text_image_align", manifest_path=sq, steps=40, batch_size=8,
                            lr=1e-3, checkpoint_every=20)

        def final(sub, **kw):
            run_stage(stage, None, 3, model_config=desk_preset(), out_dir=os.path.join(d, sub), **kw)
            with open(os.path.join(d, sub, "final.ckpt"), "rb") as fh:
                return fh.read()

        a, b = final("a"), final("b")
        resumed = final("r", resume=os.path.join(d, "a", "step_000020.ckpt"))
    same, resume_same = a == b, a == resumed
    return report(9, "determinism and split-resume", same and resume_same,
                  f"repeat run bitwise equal: {same}; 20+20 resume equals 40 straight: {resume_same}",
                  time.perf_counter() - t0, 300, out)


# -- pytest entry points ---------------------------------------------------------------------

def test_criterion_1_reparam_equality(emit):
    assert criterion_1(emit)


def test_criterion_2_zero_init_identity(emit):
    assert criterion_2(emit)


def test_criterion_3a_adaln_share(emit):
    ok_a, _ = criterion_3(lambda line: emit(line) if "3a" in line else None)
    assert ok_a


def test_criterion_3b_adaln_single_saving(emit):
    _, ok_b = criterion_3(lambda line: emit(line) if "3b" in line else None)
    assert ok_b


def test_criterion_4_gradient(emit):
    assert criterion_4(emit)


def test_criterion_5_sampler_oracle(emit):
    assert criterion_5(emit)


def test_criterion_6_buckets(emit):
    assert criterion_6(emit)


def test_criterion_7_caption_stats(emit):
    assert criterion_7(emit)


@pytest.mark.slow
def test_criterion_8_training_smoke(emit):
    assert criterion_8(emit)


@pytest.mark.slow
def test_criterion_9_determinism_resume(emit):
    assert criterion_9(emit)


if __name__ == "__main__":
    results = [criterion_1(), criterion_2(), *criterion_3(), criterion_4(), criterion_5(),
               criterion_6(), criterion_7(), criterion_8(), criterion_9()]
    print(f"{sum(results)}/{len(results)} criteria passed")
    raise SystemExit(0 if all(results) else 1)
