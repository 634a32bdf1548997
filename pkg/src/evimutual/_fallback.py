"""numpy/scipy versions of the compiled kernels, bit-identical outputs."""
import numpy as np
from scipy import ndimage

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
INF = 1 << 60


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * MIX1
    z = (z ^ (z >> np.uint64(27))) * MIX2
    return z ^ (z >> np.uint64(31))


def splitmix_uint64(key, start, n):
    with np.errstate(over="ignore"):
        counters = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(start)
        return _mix(np.uint64(key) + counters * GOLDEN)


def edt_sq(features):
    features = np.asarray(features, dtype=bool)
    if not features.any():
        return np.full(features.shape, INF, dtype=np.int64)
    _, (iy, ix) = ndimage.distance_transform_edt(~features, return_indices=True)
    yy, xx = np.indices(features.shape)
    dy = (iy - yy).astype(np.int64)
    dx = (ix - xx).astype(np.int64)
    return dy * dy + dx * dx
