"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The training criteria share one ablation run on the default synthetic data.
``EVIMUTUAL_ACCEPTANCE_EPOCHS`` sets its length (default 10) and
``EVIMUTUAL_ACCEPTANCE_DIR`` keeps its artifacts (default: a temp dir).
"""
import json
import os
import time

import numpy as np
import pytest
import torch

from evimutual import harness, losses as L
from evimutual.config import RunConfig
from evimutual.evidential import classification_opinion, segmentation_opinion
from evimutual.metrics import accuracy, assd, dice_score, f1_score
from evimutual.oracles import assd_bruteforce, kl_dirichlet_uniform_quadrature

from conftest import f64, record_criterion

EPOCHS = int(os.environ.get("EVIMUTUAL_ACCEPTANCE_EPOCHS", "10"))
DETERMINISM_EPOCHS = 2


def _check(number, title, passed, detail):
    record_criterion(number, title, bool(passed), detail)
    assert passed, detail


@pytest.fixture(scope="session")
def acceptance_dir(tmp_path_factory):
    path = os.environ.get("EVIMUTUAL_ACCEPTANCE_DIR")
    if path:
        os.makedirs(path, exist_ok=True)
        return path
    return str(tmp_path_factory.mktemp("acceptance"))


@pytest.fixture(scope="session")
def ablation(acceptance_dir):
    cfg = RunConfig(epochs=EPOCHS, threads=1, out_dir=os.path.join(acceptance_dir, "ablate"))
    started = time.perf_counter()
    rows = harness.ablate(cfg)
    return cfg, rows, time.perf_counter() - started


def _full_row(rows):
    (row,) = [r for r in rows if r["proposed"]]
    return row


def test_criterion_1_opinion_invariants():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        k = int(rng.choice([2, 3, 5]))
        e = f64(rng.exponential(rng.uniform(0.1, 50), size=k))
        _, op = classification_opinion(e, k)
        worst = max(worst, abs(float(op.beliefs.sum() + op.uncertainty) - 1))
    for _ in range(100):
        q = int(rng.choice([2, 3, 5]))
        emap = f64(rng.exponential(rng.uniform(0.1, 50), size=(q, 16, 16)))
        _, opm = segmentation_opinion(emap, q)
        worst = max(worst, float((opm.beliefs.sum(0) + opm.uncertainty - 1).abs().max()))
    elapsed = time.perf_counter() - start
    _check(1, "subjective-logic invariants", worst < 1e-6 and elapsed < 10,
           f"max |sum b + u - 1| = {worst:.1e}, {elapsed:.2f}s (limit 10s)")


def test_criterion_2_loss_oracles():
    rng = np.random.default_rng(2)
    kl_err = 0.0
    for i in range(50):
        alpha = rng.uniform(1, 8, size=2 if i % 2 else 3)
        kl_err = max(kl_err, abs(float(L.kl_dirichlet_uniform(f64(alpha))) - kl_dirichlet_uniform_quadrature(alpha)))
    ce = [
        (float(L.evidential_ce(f64([2, 1]), f64([1, 0]))), 0.5),
        (float(L.evidential_ce(f64([1, 1]), f64([1, 0]))), 1.0),
        (float(L.evidential_ce(f64([1001, 1]), f64([1, 0]))), 1 / 1001),
    ]
    ce_err = max(abs(a - b) for a, b in ce)

    import test_losses as T

    comp_err = 0.0
    for _ in range(10):
        alpha = rng.uniform(1, 20, size=(2, 4, 4))
        mask = rng.integers(0, 2, size=(4, 4))
        l1, l2 = rng.uniform(0, 2, size=2)
        got = float(L.mutual_loss(f64(alpha), torch.from_numpy(mask), l1, l2))
        comp_err = max(comp_err, abs(got - T.np_mutual(alpha, mask, l1, l2)))
        a = rng.uniform(1, 30, size=(3, 2))
        y = rng.integers(0, 2, size=3)
        lam = float(rng.uniform(0, 2))
        want = []
        for row, c in zip(a, y):
            adj = row.copy()
            adj[c] = 1.0
            want.append(T.np_ce(row, c) + lam * T.np_kl(adj))
        got = float(L.classification_loss(f64(a), torch.from_numpy(y), lam))
        comp_err = max(comp_err, abs(got - np.mean(want)))
    ok = kl_err < 1e-3 and ce_err < 1e-9 and comp_err < 1e-9
    _check(2, "loss oracles", ok,
           f"KL vs quadrature {kl_err:.1e} (<1e-3), CE hand values {ce_err:.1e} (<1e-9), "
           f"compositional {comp_err:.1e} (<1e-9)")


def test_criterion_3_gradient_checks():
    import test_losses as TL
    import test_model as TM

    start = time.perf_counter()
    failures = []
    checks = [
        TL.test_gradient_kl, TL.test_gradient_ce, TL.test_gradient_classification_loss,
        TL.test_gradient_evidential_dice, TL.test_gradient_mutual_loss,
        TL.test_gradient_deep_supervision, TL.test_gradient_total_loss,
    ]
    for check in checks:
        try:
            check(np.random.default_rng(3))
        except AssertionError as exc:
            failures.append(f"{check.__name__}: {exc}")
    try:
        TM.test_full_forward_total_loss_gradient()
    except AssertionError as exc:
        failures.append(f"full forward: {exc}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 120
    _check(3, "gradient checks", ok,
           f"{len(checks) + 1 - len(failures)}/{len(checks) + 1} checks within 1e-3, {elapsed:.1f}s (limit 120s)"
           + (f"; {failures}" if failures else ""))


def test_criterion_4_metric_oracles():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(200):
        h, w = (int(v) for v in rng.integers(1, 33, size=2))
        p = (rng.random((h, w)) < rng.uniform(0.02, 0.7)).astype(np.uint8)
        g = (rng.random((h, w)) < rng.uniform(0.02, 0.7)).astype(np.uint8)
        mismatches += assd(p, g, 1) != assd_bruteforce(p, g, 1)
    p = np.zeros((10, 20), dtype=np.uint8)
    g = np.zeros_like(p)
    p[:, :10] = 1
    g[:, 5:15] = 1
    hand = [
        accuracy([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5,
        f1_score([1, 1, 1, 0, 0], [1, 1, 0, 1, 0]) == 4 / 6,
        f1_score([0, 0], [0, 0]) == 0.0,
        dice_score(p, g, 1) == 0.5,
    ]
    ok = mismatches == 0 and all(hand)
    _check(4, "metric oracles", ok, f"{mismatches}/200 ASSD mismatches, {sum(hand)}/{len(hand)} hand examples exact")


def _training_check(row):
    with open(os.path.join(os.path.dirname(row["checkpoint"]), "run_record.json"), encoding="utf-8") as fh:
        record = json.load(fh)
    test0 = record["metrics"]["test"]["0.0"]
    mean_dice = (test0["dice_per_class"]["disc"] + test0["dice_per_class"]["cup"]) / 2
    return test0["acc"], mean_dice, record["wall_clock"]


def test_criterion_5_end_to_end_training(ablation):
    cfg, rows, _ = ablation
    row = _full_row(rows)
    acc, mean_dice, wall = _training_check(row)
    ok = acc >= 0.90 and mean_dice >= 0.85 and wall <= 30 * 60 and cfg.epochs <= 50 and cfg.threads == 1
    _check(5, "end-to-end training", ok,
           f"{cfg.epochs} epochs, test ACC {acc:.4f} (>=0.90), mean Dice {mean_dice:.4f} (>=0.85), "
           f"wall-clock {wall / 60:.1f} min (<=30)")


def test_criterion_6_noise_monotonicity(ablation, acceptance_dir):
    _, rows, _ = ablation
    ckpt = _full_row(rows)["checkpoint"]
    sweep = harness.noise_sweep(ckpt, (0.0, 0.03, 0.05), "test", os.path.join(acceptance_dir, "noise_sweep.csv"))
    uc = [r["mean_Uc"] for r in sweep]
    us = [r["mean_Us"] for r in sweep]
    dice = [(r["DI_disc"] + r["DI_cup"]) / 2 for r in sweep]
    increasing = all(a < b for a, b in zip(uc, uc[1:])) and all(a < b for a, b in zip(us, us[1:]))
    degraded = sweep[2]["ACC"] <= sweep[0]["ACC"] and dice[2] <= dice[0]
    _check(6, "noise monotonicity", increasing and degraded,
           "Uc " + " < ".join(f"{v:.4f}" for v in uc) + "; Us " + " < ".join(f"{v:.4f}" for v in us)
           + f"; ACC {sweep[0]['ACC']:.3f}->{sweep[2]['ACC']:.3f}, Dice {dice[0]:.3f}->{dice[2]:.3f}")


def test_criterion_7_ablation_structure(ablation):
    cfg, rows, elapsed = ablation
    table = harness.read_table(os.path.join(cfg.out_dir, "ablation.csv"))
    variants = [r["variant"] for r in table]
    full = _full_row(rows)
    acc, mean_dice, _ = _training_check(full)
    ok = (
        variants == ["MD", "MD+UN", "MD+UI", "MD+UN+UI"]
        and len({r["split_hash"] for r in table}) == 1
        and [r["proposed"] for r in table] == [False, False, False, True]
        and acc >= 0.90 and mean_dice >= 0.85
    )
    _check(7, "ablation harness structure", ok,
           f"rows {variants}, shared split hash {table[0]['split_hash']}, full row ACC {acc:.4f} / "
           f"Dice {mean_dice:.4f}, grid took {elapsed / 60:.1f} min")


def test_criterion_8_determinism(acceptance_dir):
    out = os.path.join(acceptance_dir, "determinism")
    cfg = RunConfig(epochs=DETERMINISM_EPOCHS, threads=1, out_dir=out)
    names = ("loss_curves.csv", "metrics.csv")
    harness.train(cfg)
    first = {n: open(os.path.join(out, n), "rb").read() for n in names}
    harness.train(cfg)
    second = {n: open(os.path.join(out, n), "rb").read() for n in names}
    same = [n for n in names if first[n] == second[n]]
    _check(8, "determinism", len(same) == len(names),
           f"{len(same)}/{len(names)} CSVs bitwise identical across two {DETERMINISM_EPOCHS}-epoch runs "
           "on the default data")
