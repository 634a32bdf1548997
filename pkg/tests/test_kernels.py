import numpy as np
import pytest

from evimutual import _fallback
from evimutual._accel import BACKEND, INF, edt_sq, splitmix_uint64
from evimutual.rng import SplitMix, _mix, stream_key

# first outputs of the reference splitmix64 generator seeded with 0
SPLITMIX_SEED0 = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def _edt_bruteforce(features):
    ys, xs = np.nonzero(features)
    h, w = features.shape
    out = np.full((h, w), INF, dtype=np.int64)
    if ys.size == 0:
        return out
    for i in range(h):
        for j in range(w):
            out[i, j] = int(((ys - i) ** 2 + (xs - j) ** 2).min())
    return out


def _implementations():
    impls = [("python", _fallback)]
    try:
        from evimutual import _kernels

        impls.append(("cython", _kernels))
    except ImportError:
        pass
    return impls


@pytest.mark.parametrize("name, impl", _implementations())
def test_splitmix_reference_sequence(name, impl):
    assert impl.splitmix_uint64(0, 0, 3).tolist() == SPLITMIX_SEED0


@pytest.mark.parametrize("name, impl", _implementations())
def test_splitmix_counter_offsets(name, impl):
    full = impl.splitmix_uint64(12345, 0, 10)
    assert np.array_equal(impl.splitmix_uint64(12345, 4, 6), full[4:])


def test_python_mix_matches_kernels():
    key = stream_key(7, 9)
    got = splitmix_uint64(key, 0, 4).tolist()
    want = [_mix((key + (i + 1) * 0x9E3779B97F4A7C15) & ((1 << 64) - 1)) for i in range(4)]
    assert got == want


@pytest.mark.parametrize("name, impl", _implementations())
def test_edt_matches_bruteforce(name, impl, rng):
    for _ in range(40):
        m = rng.random((int(rng.integers(1, 20)), int(rng.integers(1, 20)))) < rng.uniform(0.01, 0.4)
        assert np.array_equal(impl.edt_sq(m), _edt_bruteforce(m))


@pytest.mark.parametrize("name, impl", _implementations())
def test_edt_no_features(name, impl):
    assert (impl.edt_sq(np.zeros((3, 4), dtype=bool)) == INF).all()


def test_backends_agree(rng):
    for _ in range(50):
        m = rng.random((int(rng.integers(1, 40)), int(rng.integers(1, 40)))) < 0.1
        assert np.array_equal(edt_sq(m), _fallback.edt_sq(m))
        key = int(rng.integers(0, 2**63))
        assert np.array_equal(splitmix_uint64(key, 3, 17), _fallback.splitmix_uint64(key, 3, 17))


def test_backend_name():
    assert BACKEND in ("cython", "python")


def test_splitmix_stream_reader():
    a, b = SplitMix(1, 2), SplitMix(1, 2)
    assert np.array_equal(a.uint64(5), b.uint64(5))
    assert not np.array_equal(SplitMix(1, 2).uint64(5), SplitMix(2, 1).uint64(5))
    u = SplitMix(3).uniform(10000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01
    v = SplitMix(3).uniform(None, 2.0, 4.0)
    assert isinstance(v, float) and 2.0 <= v < 4.0


def test_splitmix_normal_moments():
    z = SplitMix(11).normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1) < 0.01


def test_forced_fallback_gives_identical_data():
    import subprocess
    import sys

    code = (
        "from evimutual._accel import BACKEND; from evimutual.synthdata import generate_sample;"
        "s = generate_sample(42); print(BACKEND, s.image.tobytes().hex()[:64], int(s.mask.sum()))"
    )
    outs = {}
    for flag in ("", "1"):
        env = dict(__import__("os").environ, EVIMUTUAL_PURE_PYTHON=flag)
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                    text=True, check=True).stdout.split()
    assert outs["1"][0] == "python"
    assert outs[""][1:] == outs["1"][1:]
