import numpy as np
import pytest

from evimutual.errors import ConfigurationError, InvalidInputError
from evimutual.synthdata import (
    CUP,
    DISC,
    DataConfig,
    add_gaussian_noise,
    export_dataset,
    generate_sample,
    import_dataset,
    label_from_mask,
    make_dataset,
    ratio_from_mask,
    split_fingerprint,
    split_seed_base,
)

SMALL = DataConfig(n_train=24, n_val=9, n_test=8)


@pytest.fixture(scope="module")
def default_splits():
    return make_dataset(DataConfig())


def test_generate_deterministic():
    a, b = generate_sample(17), generate_sample(17)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)
    assert a.label == b.label and a.ratio == b.ratio
    assert not np.array_equal(a.image, generate_sample(18).image)


def test_sample_contract():
    for seed in range(30):
        s = generate_sample(seed)
        assert s.image.dtype == np.float32 and s.image.shape == (64, 64)
        assert s.image.min() >= 0 and s.image.max() <= 1
        counts = np.bincount(s.mask.ravel(), minlength=3)
        assert (counts > 0).all() and counts.size == 3


def test_cup_inside_disc():
    for seed in range(20):
        m = generate_sample(seed).mask
        ys, xs = np.nonzero(m == CUP)
        for y, x in zip(ys, xs):
            # every 4-neighbour of a cup pixel is disc or cup
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                assert m[y + dy, x + dx] >= DISC


def test_ratio_threshold_label():
    m = np.zeros((64, 64), dtype=np.uint8)
    m[8:56, 8:56] = DISC
    # |cup| / |disc| = 0.5625 -> diameter ratio 0.75
    m[14:50, 14:50] = CUP
    assert ratio_from_mask(m) == pytest.approx(0.75)
    assert label_from_mask(m, 0.6) == 1
    m[:] = 0
    m[8:56, 8:56] = DISC
    m[20:44, 20:44] = CUP  # ratio 0.5
    assert label_from_mask(m, 0.6) == 0


def test_default_sizes_and_balance(default_splits):
    assert [len(s) for s in default_splits] == [512, 128, 128]
    for split in default_splits:
        frac = np.mean([s.label for s in split])
        assert 0.4 <= frac <= 0.6


def test_label_recomputed_from_mask(default_splits):
    for split in default_splits:
        for s in split:
            assert label_from_mask(s.mask, 0.6) == s.label


def test_splits_disjoint(default_splits):
    seeds = [{s.seed for s in split} for split in default_splits]
    assert not (seeds[0] & seeds[1] or seeds[0] & seeds[2] or seeds[1] & seeds[2])
    hashes = {s.image.tobytes() for split in default_splits for s in split}
    assert len(hashes) == sum(map(len, default_splits))


def test_seed_layout():
    cfg = DataConfig(master_seed=3)
    bases = [split_seed_base(cfg, name) for name in ("train", "val", "test")]
    assert bases == [12_000_000, 13_000_000, 14_000_000]


def test_master_seed_changes_data():
    a = make_dataset(SMALL)
    b = make_dataset(DataConfig(n_train=24, n_val=9, n_test=8, master_seed=1))
    assert split_fingerprint(a[0]) != split_fingerprint(b[0])
    assert split_fingerprint(a[0]) == split_fingerprint(make_dataset(SMALL)[0])


def test_parallel_generation_identical():
    serial = make_dataset(SMALL, workers=1)
    parallel = make_dataset(SMALL, workers=2)
    for a, b in zip(serial, parallel):
        assert [s.seed for s in a] == [s.seed for s in b]
        assert all(np.array_equal(x.image, y.image) for x, y in zip(a, b))


def test_noise_identity_and_errors():
    img = generate_sample(0).image
    out = add_gaussian_noise(img, 0.0, 5)
    assert np.array_equal(out, img) and out is not img
    with pytest.raises(InvalidInputError):
        add_gaussian_noise(img, -0.01, 5)


def test_noise_moments_and_clamp():
    mid = np.full((64, 64), 0.5, dtype=np.float64)
    diff = add_gaussian_noise(mid, 0.05, 9) - mid  # no clamping this far from the bounds
    assert abs(diff.std() - 0.05) < 0.05 * 0.05
    img = generate_sample(0).image
    noisy = add_gaussian_noise(img, 0.5, 9)
    assert noisy.min() >= 0 and noisy.max() <= 1 and noisy.dtype == img.dtype
    assert np.array_equal(noisy, add_gaussian_noise(img, 0.5, 9))
    assert not np.array_equal(noisy, add_gaussian_noise(img, 0.5, 10))


@pytest.mark.parametrize(
    "kwargs",
    [dict(height=60), dict(ratio_threshold=1.2), dict(ratio_min=0.55), dict(disc_radius_min=0), dict(n_val=-1)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        DataConfig(**kwargs)


def test_export_import_round_trip(tmp_path):
    splits = make_dataset(DataConfig(n_train=4, n_val=2, n_test=2))
    export_dataset(splits, tmp_path, DataConfig(n_train=4, n_val=2, n_test=2))
    assert (tmp_path / "data_config.txt").read_text().startswith("data.height = 64")
    header = (tmp_path / "train" / "manifest.csv").read_text().splitlines()[0]
    assert header == "filename,label,seed"
    back = import_dataset(tmp_path)
    for orig, loaded in zip(splits, back):
        assert len(orig) == len(loaded)
        for a, b in zip(orig, loaded):
            assert np.array_equal(a.mask, b.mask)
            assert (a.label, a.seed) == (b.label, b.seed)
            assert np.abs(a.image - b.image).max() <= 0.5 / 255 + 1e-7
