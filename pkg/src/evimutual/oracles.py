"""Slow, independent reference computations used to check the fast paths.

Nothing here shares code with the functions it checks.
"""
import math

import numpy as np
from scipy import integrate
from scipy.special import gammaln


def assd_bruteforce(pred_mask, gt_mask, class_id):
    """O(n^2) pairwise ASSD with explicit neighbour scans; ``None`` if a surface is empty."""
    ids = set(class_id) if isinstance(class_id, (tuple, list, set)) else {class_id}

    def boundary(mask):
        h, w = len(mask), len(mask[0])
        pts = []
        for y in range(h):
            for x in range(w):
                if mask[y][x] not in ids:
                    continue
                edge = False
                for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    ny, nx = y + dy, x + dx
                    if not (0 <= ny < h and 0 <= nx < w) or mask[ny][nx] not in ids:
                        edge = True
                        break
                if edge:
                    pts.append((y, x))
        return pts

    a = boundary(np.asarray(pred_mask).tolist())
    b = boundary(np.asarray(gt_mask).tolist())
    if not a or not b:
        return None

    def mean_nearest(src, dst):
        return math.fsum(
            min(math.sqrt((y - v) ** 2 + (x - u) ** 2) for v, u in dst) for y, x in src
        ) / len(src)

    return (mean_nearest(a, b) + mean_nearest(b, a)) / 2


def _log_dirichlet_density(p, alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    log_norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
    return log_norm + sum((a - 1) * math.log(max(pk, 1e-300)) for a, pk in zip(alpha, p))


def kl_dirichlet_uniform_quadrature(alpha):
    """KL(Dir(alpha) || uniform) by numerical integration over the simplex (K = 2 or 3)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    k = alpha.size
    log_uniform = gammaln(k)

    def integrand(*p):
        logq = _log_dirichlet_density(p, alpha)
        return math.exp(logq) * (logq - log_uniform)

    if k == 2:
        val, _ = integrate.quad(lambda x: integrand(x, 1 - x), 0, 1, limit=200, epsabs=1e-11, epsrel=1e-10)
        return val
    if k == 3:
        val, _ = integrate.dblquad(
            lambda y, x: integrand(x, y, max(1 - x - y, 0.0)),
            0, 1, 0, lambda x: 1 - x, epsabs=1e-9, epsrel=1e-8,
        )
        return val
    raise ValueError("quadrature oracle supports K = 2 or 3")


def kl_dirichlet_uniform_mc(alpha, n=400_000, seed=0):
    """Monte-Carlo estimate of the same KL for any K."""
    alpha = np.asarray(alpha, dtype=np.float64)
    rng = np.random.default_rng(seed)
    p = np.clip(rng.dirichlet(alpha, size=n), 1e-300, None)
    log_norm = gammaln(alpha.sum()) - gammaln(alpha).sum()
    logq = log_norm + ((alpha - 1) * np.log(p)).sum(axis=1)
    return float(logq.mean() - gammaln(alpha.size))


def central_difference(f, x, h=1e-5):
    """Gradient of scalar ``f`` at float64 array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(a, b, floor=1e-8):
    """``|a - b| / max(|a|, |b|, floor)``, elementwise."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
