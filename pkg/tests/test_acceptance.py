"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL ...`` line (shown even
when pytest captures output) before asserting.
"""

import csv
import io
import shutil
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from reference import branch_params, pad, spatial_reference, temporal_reference
from stmsgcn.config import PRESETS, COMPONENT_SPECS, CONSTRAINT_SPECS
from stmsgcn.dct import dct_forward, dct_inverse
from stmsgcn.losses import evaluate_horizons, loss_l1, loss_st, loss_total, model_predictor, pose_error
from stmsgcn.model import ModelConfig, StmsModel, model_forward, pad_batch
from stmsgcn.motion import constant_motion, window_sequence
from stmsgcn.train import (DESK_MODEL, ablation_csv, build_samples, desk_config, gradient_check, run_ablation,
                           stack_samples, train)


def report(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def test_dct_round_trip(capsys):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = {np.float64: 0.0, np.float32: 0.0}
    worst_norm = {np.float64: 0.0, np.float32: 0.0}
    for _ in range(200):
        shape = (int(rng.integers(1, 9)), int(rng.integers(1, 33)))
        base = rng.normal(size=shape)
        for dtype in (np.float64, np.float32):
            x = base.astype(dtype)
            c = dct_forward(x)
            worst[dtype] = max(worst[dtype], float(np.abs(dct_inverse(c) - x).max()))
            worst_norm[dtype] = max(worst_norm[dtype], abs(float(np.linalg.norm(c)) - float(np.linalg.norm(x))))
    elapsed = time.perf_counter() - start
    ok = (worst[np.float64] < 1e-10 and worst_norm[np.float64] < 1e-10
          and worst[np.float32] < 1e-5 and worst_norm[np.float32] < 1e-5 and elapsed < 5)
    report(capsys, 1, "DCT round trip", ok,
           f"double err {worst[np.float64]:.2e} norm {worst_norm[np.float64]:.2e}; "
           f"single err {worst[np.float32]:.2e} norm {worst_norm[np.float32]:.2e}; {elapsed:.2f}s")


def test_gradient_oracle(capsys):
    n_params = len(dict(StmsModel(DESK_MODEL).named_parameters()))
    details, ok = [], True
    for squared in (True, False):
        start = time.perf_counter()
        result = gradient_check(DESK_MODEL, seed=0, epsilon=1e-6, w_st=0.1, w_con=0.1, constraint="A",
                                squared=squared)
        elapsed = time.perf_counter() - start
        ok &= result.max_rel_error < 1e-4 and elapsed < 60 and len(result.checked) == n_params
        details.append(f"{'squared' if squared else 'distance'} loss: max rel err {result.max_rel_error:.2e} "
                       f"at {result.worst_parameter}, {len(result.checked)}/{n_params} tensors, {elapsed:.2f}s")
    report(capsys, 2, "gradient oracle", ok, "; ".join(details))


def test_residual_identity(capsys):
    cfg = replace(DESK_MODEL, decoder_init="random")
    model = StmsModel(cfg, seed=7, dtype=torch.float64)
    model.zero_decoders()
    obs = torch.randn(5, cfg.T_p, cfg.J, cfg.D, dtype=torch.float64)
    res = model_forward(model, obs)
    padded = pad_batch(obs, cfg.T_f)
    identity = all(torch.equal(p, padded) for p in res.temporal_preds + res.spatial_preds)

    big = ModelConfig(T_p=10, T_f=10, J=4, D=3, C=8, L=2, K=2)
    zero_model = StmsModel(big, seed=1, dtype=torch.float64)
    zero_model.zero_decoders()
    samples = window_sequence(constant_motion(4, 3, 40, 25.0, seed=3), 10, 10, 1)
    table = evaluate_horizons(model_predictor(zero_model), samples, [80, 160, 320, 400])
    errors = [r.mpjpe_mm for r in table.rows]
    ok = identity and all(e == 0.0 for e in errors) and table.average == 0.0
    report(capsys, 3, "residual / zero-velocity identity", ok,
           f"bit-exact passthrough {identity}; constant-motion MPJPE {errors}")


def test_loss_identities(capsys):
    gen = torch.Generator().manual_seed(0)
    rng = np.random.default_rng(0)
    collapse = 0
    for i in range(100):
        cfg = ModelConfig(T_p=int(rng.integers(1, 5)), T_f=int(rng.integers(1, 5)), J=int(rng.integers(1, 4)),
                          D=int(rng.choice([2, 3])), C=int(rng.integers(1, 6)), L=int(rng.integers(1, 4)),
                          K=int(rng.integers(1, 4)), decoder_init="random")
        model = StmsModel(cfg, seed=i, dtype=torch.float64)
        obs = torch.randn(2, cfg.T_p, cfg.J, cfg.D, dtype=torch.float64, generator=gen)
        res = model_forward(model, obs)
        target = torch.randn(2, cfg.T, cfg.J, cfg.D, dtype=torch.float64, generator=gen)
        squared = bool(i % 2)
        l1 = loss_l1(res, target, squared)
        con_s, con_t = model.consistency_penalties("A")
        out = loss_total(l1, loss_st(res.temporal_preds, res.spatial_preds, squared), con_s, con_t, 0.0, 0.0)
        collapse += bool(torch.equal(out.total, loss_l1(res, target, squared)))

    k1_zero = 0
    for i in range(20):
        model = StmsModel(ModelConfig(C=4, L=3, K=1, decoder_init="random", adjacency_noise=0.5), seed=i)
        for p in model.parameters():
            p.data.normal_(generator=gen)
        k1_zero += all(v.item() == 0.0 for t in ("A", "W", "both") for v in model.consistency_penalties(t))

    st_zero = 0
    for i in range(20):
        model = StmsModel(ModelConfig(C=4, L=3, K=2), seed=i)
        model.zero_decoders()
        res = model_forward(model, torch.randn(10, 4, 3, generator=gen))
        st_zero += loss_st(res.temporal_preds, res.spatial_preds, bool(i % 2)).item() == 0.0

    ok = collapse == 100 and k1_zero == 20 and st_zero == 20
    report(capsys, 4, "loss identities", ok,
           f"zero-weight collapse {collapse}/100; K=1 consistency zero {k1_zero}/20; "
           f"zero-decoder l_st zero {st_zero}/20")


def test_hand_trace_equivalence(capsys):
    worst = 0.0
    configs = [
        ModelConfig(T_p=1, T_f=1, J=1, D=1, C=1, L=1, K=1),
        ModelConfig(T_p=1, T_f=1, J=1, D=2, C=2, L=1, K=1),
        ModelConfig(T_p=2, T_f=1, J=1, D=2, C=3, L=2, K=2),
        DESK_MODEL,
    ]
    for i, cfg in enumerate(configs):
        for seed in range(3):
            model = StmsModel(replace(cfg, decoder_init="random", adjacency_noise=0.4), seed=10 * i + seed,
                              dtype=torch.float64)
            obs = np.random.default_rng(seed).normal(size=(cfg.T_p, cfg.J, cfg.D))
            res = model_forward(model, torch.tensor(obs))
            padded = pad(obs.tolist(), cfg.T_f)
            refs = (temporal_reference(padded, branch_params(model.temporal))
                    + spatial_reference(padded, branch_params(model.spatial)))
            for got, ref in zip(res.temporal_preds + res.spatial_preds, refs):
                worst = max(worst, float(np.abs(got.detach().numpy() - np.array(ref)).max()))
    report(capsys, 5, "hand-trace equivalence", worst < 1e-12, f"max abs deviation {worst:.2e}")


def test_overfit_and_determinism(capsys):
    cfg = desk_config()
    start = time.perf_counter()
    first = train(cfg)
    second = train(cfg)
    elapsed = time.perf_counter() - start
    ratio = first.log[-1].l1 / first.log[0].l1
    # the same reduction measured as plain mean joint distance, independent of the training loss form
    observed, target = stack_samples(first.samples, torch.float32)
    untrained = train(replace(cfg, epochs=0)).model
    with torch.no_grad():
        before = pose_error(model_forward(untrained, observed).final, target).item()
        after = pose_error(model_forward(first.model, observed).final, target).item()
    identical = first.checkpoint().to_bytes() == second.checkpoint().to_bytes()
    ok = ratio < 0.1 and after / before < 0.1 and identical and len(first.samples) == 2 and cfg.epochs == 500
    report(capsys, 6, "overfit capability", ok,
           f"L1 {first.log[0].l1:.4f} -> {first.log[-1].l1:.4f} (ratio {ratio:.4f}, "
           f"{'squared' if cfg.squared_loss else 'distance'} loss, {cfg.optimizer} lr {cfg.learning_rate:g}); "
           f"mean joint distance {before:.3f} -> {after:.3f} (ratio {after / before:.4f}); "
           f"bit-identical checkpoints {identical}; {elapsed:.1f}s")


def test_ablation_structure(capsys):
    base = desk_config(epochs=5)
    samples = build_samples(base)
    horizons = [40, 80]
    groups = {"components": COMPONENT_SPECS, "constraints": CONSTRAINT_SPECS, "lambda": PRESETS["lambda"]}
    texts, problems = [], []
    for name, specs in groups.items():
        runs = run_ablation(base, specs, horizons, samples=samples)
        setups = {(r.spec.use_spatial_branch, r.spec.use_temporal_branch, r.spec.use_l_con, r.spec.use_l_st,
                   r.spec.effective_constraint, base.with_ablation(r.spec).effective_weights) for r in runs}
        if len(runs) != len(specs) or len(setups) != len(specs):
            problems.append(f"{name}: {len(setups)} distinct setups for {len(specs)} specs")
        if any(not np.isfinite(r.table.average) or not r.log for r in runs):
            problems.append(f"{name}: a run did not train/evaluate")
        texts.append(ablation_csv(runs))
    header = texts[0].splitlines()[0]
    combined = header + "\n" + "".join(t.split("\n", 1)[1] for t in texts)
    rows = list(csv.reader(io.StringIO(combined)))
    labels = {r[0] for r in rows[1:]}
    if len(rows) != 1 + 15 * (len(horizons) + 1) or len(labels) != 15:
        problems.append(f"combined CSV has {len(rows)} rows and {len(labels)} labels")
    report(capsys, 7, "ablation structure", not problems,
           "; ".join(problems) or f"6 + 4 + 5 setups trained and evaluated; combined CSV {len(rows) - 1} rows")


def _cli():
    exe = shutil.which("stmsgcn")
    return [exe] if exe else [sys.executable, "-m", "stmsgcn"]


def test_pipeline_smoke(capsys, tmp_path):
    (tmp_path / "synth.cfg").write_text("J=4\nD=3\nframes=120\nseed=3\n")
    (tmp_path / "train.cfg").write_text(
        "model.T_p=10\nmodel.T_f=10\nmodel.J=4\nmodel.D=3\nmodel.C=16\nmodel.L=2\nmodel.K=2\n"
        "dataset=motion.txt\nbatch_size=16\n"
    )
    cli = _cli()
    steps = [
        ["synth", "synth.cfg", "motion.txt"],
        ["train", "train.cfg", "--epochs", "5", "--out", "run"],
        ["eval", "run/model.ckpt", "motion.txt", "--horizons", "80,160,320,400", "--out", "run"],
    ]
    start = time.perf_counter()
    codes = []
    for args in steps:
        proc = subprocess.run(cli + args, cwd=tmp_path, capture_output=True, text=True)
        codes.append(proc.returncode)
        if proc.returncode:
            break
    elapsed = time.perf_counter() - start
    problems = []
    if codes != [0, 0, 0]:
        problems.append(f"exit codes {codes}: {proc.stderr.strip()}")
    else:
        eval_rows = list(csv.reader(open(tmp_path / "run" / "eval.csv", newline="")))
        if eval_rows[0] != ["horizon_ms", "frame_index", "mpjpe_mm"]:
            problems.append(f"eval header {eval_rows[0]}")
        if [r[:2] for r in eval_rows[1:]] != [["80", "2"], ["160", "4"], ["320", "8"], ["400", "10"], ["average", ""]]:
            problems.append(f"eval rows {eval_rows[1:]}")
        if not all(np.isfinite(float(r[2])) and float(r[2]) >= 0 for r in eval_rows[1:]):
            problems.append("non-finite MPJPE")
        log_rows = list(csv.reader(open(tmp_path / "run" / "train_log.csv", newline="")))
        if log_rows[0] != ["epoch", "l1", "l_st", "l_con_s", "l_con_t", "total", "lr"] or len(log_rows) != 6:
            problems.append(f"train log malformed ({len(log_rows)} rows)")
    if elapsed >= 120:
        problems.append(f"took {elapsed:.1f}s")
    report(capsys, 8, "pipeline smoke", not problems, "; ".join(problems) or f"exit 0 x3 in {elapsed:.1f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
