import struct

import numpy as np
import pytest

from manifoldreg import (Dataset, SplitSpec, holdout_split, load_idx, save_idx,
                         split_semi, synth_blobs, synth_digits)
from manifoldreg.errors import (ConsistencyError, ContractError, FormatError,
                                LengthError, ParameterError)


def write_idx_pair(tmp_path, pixels, labels):
    n, rows, cols = pixels.shape
    img = tmp_path / "img"
    lab = tmp_path / "lab"
    img.write_bytes(struct.pack(">IIII", 0x803, n, rows, cols) + pixels.tobytes())
    lab.write_bytes(struct.pack(">II", 0x801, n) + labels.tobytes())
    return img, lab


@pytest.fixture
def idx_pair(tmp_path):
    gen = np.random.default_rng(60)
    pixels = gen.integers(0, 256, size=(12, 28, 28), dtype=np.uint8)
    labels = (np.arange(12) % 10).astype(np.uint8)
    return write_idx_pair(tmp_path, pixels, labels), pixels, labels


def test_load_idx_parses_and_normalizes(idx_pair):
    (img, lab), pixels, labels = idx_pair
    ds = load_idx(img, lab)
    assert ds.n == 12 and ds.features.shape == (12, 28, 28)
    np.testing.assert_array_equal(ds.labels, labels)
    np.testing.assert_allclose(ds.features, pixels / 255.0)
    assert ds.features[pixels == 255].size == 0 or np.all(ds.features[pixels == 255] == 1.0)


def test_load_idx_255_maps_to_one(tmp_path):
    pixels = np.full((2, 2, 2), 255, dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, pixels, np.zeros(2, dtype=np.uint8))
    assert np.all(load_idx(img, lab).features == 1.0)


def test_load_idx_bad_magic(tmp_path):
    pixels = np.zeros((1, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, pixels, np.zeros(1, dtype=np.uint8))
    img.write_bytes(struct.pack(">IIII", 0x801, 1, 2, 2) + pixels.tobytes())
    with pytest.raises(FormatError):
        load_idx(img, lab)


def test_load_idx_count_mismatch(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, pixels, np.zeros(2, dtype=np.uint8))
    lab.write_bytes(struct.pack(">II", 0x801, 3) + bytes(3))
    with pytest.raises(ConsistencyError):
        load_idx(img, lab)


def test_load_idx_truncated(tmp_path):
    pixels = np.zeros((2, 2, 2), dtype=np.uint8)
    img, lab = write_idx_pair(tmp_path, pixels, np.zeros(2, dtype=np.uint8))
    img.write_bytes(img.read_bytes()[:-3])
    with pytest.raises(LengthError):
        load_idx(img, lab)


def test_idx_round_trip(idx_pair, tmp_path):
    (img, lab), _, _ = idx_pair
    ds = load_idx(img, lab)
    img2, lab2 = tmp_path / "img2", tmp_path / "lab2"
    save_idx(ds, img2, lab2)
    assert img2.read_bytes() == img.read_bytes()
    assert lab2.read_bytes() == lab.read_bytes()


def test_dataset_rejects_out_of_range_features():
    with pytest.raises(ParameterError):
        Dataset(np.array([[1.5]]), np.array([0]), 2)
    with pytest.raises(ParameterError):
        Dataset(np.array([[-0.1]]), np.array([0]), 2)


def test_split_semi_class_balanced_counts():
    ds = synth_digits(200, seed=1)
    labeled, unlabeled = split_semi(ds, SplitSpec(labeled_count=50, seed=4))
    assert labeled.n == 50 and unlabeled.n == 150
    counts = np.bincount(labeled.labels, minlength=10)
    np.testing.assert_array_equal(counts, np.full(10, 5))
    assert unlabeled.labels is None


def test_split_semi_partition_and_determinism():
    ds = synth_digits(100, seed=2)
    a_lab, a_unlab = split_semi(ds, SplitSpec(40, seed=9))
    b_lab, b_unlab = split_semi(ds, SplitSpec(40, seed=9))
    np.testing.assert_array_equal(a_lab.features, b_lab.features)
    np.testing.assert_array_equal(a_unlab.features, b_unlab.features)
    # partition: every instance appears exactly once across the two sets
    merged = np.concatenate([a_lab.features.reshape(40, -1), a_unlab.features.reshape(60, -1)])
    original = ds.features.reshape(100, -1)
    assert {tuple(row) for row in merged} == {tuple(row) for row in original}


def test_split_semi_boundary_full_labeling():
    ds = synth_digits(30, seed=3)
    labeled, unlabeled = split_semi(ds, SplitSpec(30, seed=0))
    assert labeled.n == 30 and unlabeled.n == 0


def test_split_semi_divisibility_error():
    ds = synth_digits(40, seed=4)
    with pytest.raises(ParameterError):
        split_semi(ds, SplitSpec(labeled_count=15, seed=0))


def test_split_semi_needs_labels():
    ds = Dataset(np.zeros((4, 2)), None, 10)
    with pytest.raises(ContractError):
        split_semi(ds, SplitSpec(2, 0))


def test_holdout_split_sizes_and_disjoint():
    ds = synth_digits(60, seed=5)
    train, valid = holdout_split(ds, 10, seed=1)
    assert train.n == 50 and valid.n == 10
    merged = np.concatenate([train.features, valid.features]).reshape(60, -1)
    assert {tuple(r) for r in merged} == {tuple(r) for r in ds.features.reshape(60, -1)}
    train2, valid2 = holdout_split(ds, 10, seed=1)
    np.testing.assert_array_equal(valid.features, valid2.features)


def test_holdout_split_zero_validation():
    ds = synth_digits(20, seed=6)
    train, valid = holdout_split(ds, 0, seed=0)
    assert train.n == 20 and valid.n == 0


def test_holdout_split_bad_count():
    ds = synth_digits(20, seed=7)
    with pytest.raises(ParameterError):
        holdout_split(ds, 20, seed=0)


def test_synth_blobs_structure():
    ds = synth_blobs(k=2, d=5, per_class=50, separation=4.0, noise=0.5, seed=0)
    assert ds.n == 100
    np.testing.assert_array_equal(np.bincount(ds.labels), [50, 50])
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    again = synth_blobs(k=2, d=5, per_class=50, separation=4.0, noise=0.5, seed=0)
    np.testing.assert_array_equal(ds.features, again.features)


def test_synth_blobs_separated_is_linearly_fittable():
    from manifoldreg import (Dense, LossKind, NetworkSpec, RegConfig, SgdConfig,
                             TrainConfig, evaluate, train)
    ds = synth_blobs(k=2, d=4, per_class=50, separation=10.0, noise=0.1, seed=1)
    spec = NetworkSpec((4,), (Dense(4, 2),))
    config = TrainConfig(epochs=40, batch_size=20, seed=0, loss=LossKind.SQUARED_HINGE,
                         reg=RegConfig(), optimizer=SgdConfig(0.5), eval_every=40)
    result = train(spec, ds, None, ds, config)
    assert evaluate(result.final_params, ds) == 0.0


def test_synth_digits_deterministic_and_balanced():
    a = synth_digits(50, seed=8)
    b = synth_digits(50, seed=8)
    np.testing.assert_array_equal(a.features, b.features)
    assert a.features.min() >= 0.0 and a.features.max() <= 1.0
    np.testing.assert_array_equal(np.bincount(a.labels), np.full(10, 5))
