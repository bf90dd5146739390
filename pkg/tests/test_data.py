import numpy as np
import pytest

from softequiv.data import (
    CountMismatchError,
    DataError,
    IdxMagicError,
    IdxTruncatedError,
    LabeledImageSet,
    build_mnist6_180,
    downsample,
    load_cache,
    load_idx_images,
    load_idx_labels,
    load_idx_pair,
    rotate180,
    save_cache,
    split_set,
    synth_glyph_set,
    write_idx_images,
    write_idx_labels,
)


def fake_mnist(n=40, seed=0):
    rng = np.random.default_rng(seed)
    images = (rng.uniform(size=(n, 28, 28)) * 255).astype(np.uint8)
    labels = rng.integers(0, 10, size=n).astype(np.uint8)
    labels[: n // 2] = 6  # make sure there are sixes
    return images, labels


def test_idx_roundtrip_bit_exact(tmp_path):
    images, labels = fake_mnist()
    write_idx_images(tmp_path / "img.idx", images)
    write_idx_labels(tmp_path / "lab.idx", labels)
    assert np.array_equal(load_idx_images(tmp_path / "img.idx"), images)
    assert np.array_equal(load_idx_labels(tmp_path / "lab.idx"), labels)


def test_idx_pair_loads_scaled(tmp_path):
    images, labels = fake_mnist()
    write_idx_images(tmp_path / "img.idx", images)
    write_idx_labels(tmp_path / "lab.idx", labels)
    ds = load_idx_pair(tmp_path / "img.idx", tmp_path / "lab.idx", split="test")
    assert len(ds) == len(images)
    assert ds.split == "test"
    assert ds.images.max() <= 1.0
    assert np.array_equal((ds.images * 255).astype(np.uint8), images)


def test_idx_bad_magic(tmp_path):
    images, labels = fake_mnist()
    write_idx_images(tmp_path / "img.idx", images)
    write_idx_labels(tmp_path / "lab.idx", labels)
    with pytest.raises(IdxMagicError):
        load_idx_images(tmp_path / "lab.idx")
    with pytest.raises(IdxMagicError):
        load_idx_labels(tmp_path / "img.idx")


def test_idx_truncated(tmp_path):
    images, _ = fake_mnist()
    write_idx_images(tmp_path / "img.idx", images)
    raw = (tmp_path / "img.idx").read_bytes()
    (tmp_path / "cut.idx").write_bytes(raw[: len(raw) - 100])
    with pytest.raises(IdxTruncatedError):
        load_idx_images(tmp_path / "cut.idx")
    (tmp_path / "tiny.idx").write_bytes(raw[:6])
    with pytest.raises(IdxTruncatedError):
        load_idx_images(tmp_path / "tiny.idx")


def test_idx_count_mismatch(tmp_path):
    images, labels = fake_mnist()
    write_idx_images(tmp_path / "img.idx", images)
    write_idx_labels(tmp_path / "lab.idx", labels[:-3])
    with pytest.raises(CountMismatchError):
        load_idx_pair(tmp_path / "img.idx", tmp_path / "lab.idx")


def test_rotate180_is_involution_and_exact():
    rng = np.random.default_rng(1)
    imgs = rng.uniform(size=(5, 6, 7))
    assert np.array_equal(rotate180(rotate180(imgs)), imgs)
    assert np.array_equal(rotate180(imgs)[0], imgs[0][::-1, ::-1])


def test_build_mnist6_180():
    images, labels = fake_mnist(n=400, seed=2)
    source = LabeledImageSet(images.astype(float) / 255.0, labels.astype(int))
    ds = build_mnist6_180(source, seed=3)
    n = len(ds)
    assert n == np.sum(labels == 6)
    assert set(np.unique(ds.labels)) <= {0, 1}
    # fair-coin balance within a generous binomial bound
    assert abs(np.sum(ds.labels == 1) - np.sum(ds.labels == 0)) <= 4 * np.sqrt(n / 4)
    # rotated entries are exact reversals of source sixes
    sixes = {img.tobytes() for img in source.images[source.labels == 6]}
    for img, lab in zip(ds.images, ds.labels):
        key = rotate180(img).tobytes() if lab == 1 else img.tobytes()
        assert key in sixes


def test_build_mnist6_180_deterministic():
    images, labels = fake_mnist(n=100, seed=4)
    source = LabeledImageSet(images.astype(float) / 255.0, labels.astype(int))
    a = build_mnist6_180(source, seed=5)
    b = build_mnist6_180(source, seed=5)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)


def test_build_mnist6_180_needs_sixes():
    source = LabeledImageSet(np.zeros((4, 28, 28)), np.array([1, 2, 3, 4]))
    with pytest.raises(DataError):
        build_mnist6_180(source)


def test_synth_glyphs_basic():
    ds = synth_glyph_set(30, seed=6)
    assert len(ds) == 30
    assert ds.images.min() >= 0 and ds.images.max() <= 1
    again = synth_glyph_set(30, seed=6)
    assert np.array_equal(ds.images, again.images)
    assert np.array_equal(ds.labels, again.labels)


def test_synth_glyphs_are_asymmetric():
    ds = synth_glyph_set(50, seed=7)
    originals = np.where(ds.labels[:, None, None] == 1, rotate180(ds.images), ds.images)
    for g in originals:
        assert np.linalg.norm(g - rotate180(g)) > 0.5


def test_synth_glyphs_minimum_count():
    with pytest.raises(DataError):
        synth_glyph_set(1)


def test_split_set_disjoint_and_deterministic():
    ds = synth_glyph_set(50, seed=8)
    splits = split_set(ds, {"train": 30, "val": 10, "test": 10}, seed=9)
    assert [len(splits[k]) for k in ("train", "val", "test")] == [30, 10, 10]
    assert splits["val"].split == "val"
    keys = [img.tobytes() for part in splits.values() for img in part.images]
    assert len(set(keys)) == 50
    again = split_set(ds, {"train": 30, "val": 10, "test": 10}, seed=9)
    assert np.array_equal(splits["train"].images, again["train"].images)
    with pytest.raises(DataError):
        split_set(ds, {"train": 60}, seed=0)


def test_downsample_commutes_with_rotation():
    rng = np.random.default_rng(10)
    imgs = rng.uniform(size=(3, 28, 28))
    a = downsample(rotate180(imgs), 2)
    b = rotate180(downsample(imgs, 2))
    assert np.allclose(a, b, atol=1e-15)
    assert downsample(imgs, 2).shape == (3, 14, 14)
    with pytest.raises(DataError):
        downsample(imgs, 3)


def test_cache_roundtrip(tmp_path):
    ds = synth_glyph_set(10, seed=11, split="val")
    save_cache(ds, tmp_path / "cache")
    back = load_cache(tmp_path / "cache")
    assert back.split == "val"
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)
    assert back.images.dtype == ds.images.dtype


def test_labeled_set_validation():
    with pytest.raises(CountMismatchError):
        LabeledImageSet(np.zeros((3, 4, 4)), np.zeros(2, dtype=int))
    with pytest.raises(DataError):
        LabeledImageSet(np.full((2, 4, 4), 1.5), np.zeros(2, dtype=int))
