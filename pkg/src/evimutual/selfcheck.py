"""Fast invariant and oracle checks runnable from an installed package (``evimutual selftest``)."""
import math
import time

import numpy as np
import torch

from . import _fallback, losses as L
from ._accel import BACKEND, edt_sq
from .evidential import classification_opinion, segmentation_opinion, softplus_evidence
from .metrics import assd
from .oracles import assd_bruteforce, central_difference, kl_dirichlet_uniform_quadrature, relative_error


def _opinions(rng, n):
    worst = 0.0
    for _ in range(n):
        k = int(rng.choice([2, 3, 5]))
        e = torch.from_numpy(rng.exponential(5.0, size=k))
        _, op = classification_opinion(e, k)
        worst = max(worst, abs(float(op.beliefs.sum() + op.uncertainty) - 1))
    emap = torch.from_numpy(rng.exponential(5.0, size=(3, 16, 16)))
    _, opm = segmentation_opinion(emap, 3)
    worst = max(worst, float((opm.beliefs.sum(0) + opm.uncertainty - 1).abs().max()))
    return worst < 1e-6, f"max |sum(b) + u - 1| = {worst:.2e}"


def _kl(rng, n):
    worst = 0.0
    for _ in range(n):
        alpha = rng.uniform(1, 8, size=int(rng.choice([2, 3])))
        got = float(L.kl_dirichlet_uniform(torch.from_numpy(alpha)))
        worst = max(worst, abs(got - kl_dirichlet_uniform_quadrature(alpha)))
    return worst < 1e-3, f"max |KL - quadrature| = {worst:.2e}"


def _ce(_rng, _n):
    a = float(L.evidential_ce(torch.tensor([2.0, 1.0], dtype=torch.float64), torch.tensor([1.0, 0.0])))
    b = float(L.evidential_ce(torch.tensor([1.0, 1.0], dtype=torch.float64), torch.tensor([1.0, 0.0])))
    ok = abs(a - 0.5) < 1e-9 and abs(b - 1.0) < 1e-9
    return ok, f"CE([2,1])={a:.12f} CE([1,1])={b:.12f}"


def _assd(rng, n):
    bad = 0
    for _ in range(n):
        h, w = rng.integers(4, 20, size=2)
        p = rng.random((h, w)) < rng.uniform(0.05, 0.6)
        g = rng.random((h, w)) < rng.uniform(0.05, 0.6)
        if assd(p, g, 1) != assd_bruteforce(p, g, 1):
            bad += 1
    return bad == 0, f"{bad}/{n} mismatches vs brute force"


def _backend(rng, n):
    bad = 0
    for _ in range(n):
        m = rng.random((int(rng.integers(1, 40)), int(rng.integers(1, 40)))) < 0.1
        bad += int(not np.array_equal(edt_sq(m), _fallback.edt_sq(m)))
    return bad == 0, f"backend={BACKEND}, {bad}/{n} EDT mismatches vs fallback"


def _gradient(rng, n):
    worst = 0.0
    for _ in range(n):
        logits = rng.normal(0, 2, size=3)
        y = torch.tensor([0.0, 1.0, 0.0], dtype=torch.float64)

        def f(z):
            alpha = softplus_evidence(torch.from_numpy(z)) + 1
            return float(L.classification_loss(alpha, y, 0.7))

        z = torch.from_numpy(logits.copy()).requires_grad_(True)
        L.classification_loss(softplus_evidence(z) + 1, y, 0.7).backward()
        worst = max(worst, float(relative_error(z.grad.numpy(), central_difference(f, logits)).max()))
    return worst < 1e-3, f"max relative gradient error = {worst:.2e}"


CHECKS = {
    "opinion sum-to-one": _opinions,
    "KL vs quadrature": _kl,
    "evidential CE hand values": _ce,
    "ASSD vs brute force": _assd,
    "compiled vs fallback EDT": _backend,
    "classification loss gradient": _gradient,
}


def run_all(quick=False, seed=0):
    rng = np.random.default_rng(seed)
    sizes = {"opinion sum-to-one": 2000, "KL vs quadrature": 5, "ASSD vs brute force": 40,
             "compiled vs fallback EDT": 50, "classification loss gradient": 20}
    ok_all = True
    for name, check in CHECKS.items():
        n = sizes.get(name, 1)
        if quick:
            n = max(1, n // 5)
        t = time.perf_counter()
        ok, detail = check(rng, n)
        ok_all &= ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t:.2f}s)")
    return ok_all
