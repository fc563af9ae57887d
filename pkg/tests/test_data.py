import math

import numpy as np
import pytest
from scipy.stats import norm

from derivmanip import data
from derivmanip.errors import ConfigError, ParseError, StratificationError


def small_dataset(n_per=50, C=3, D=4, seed=0):
    return data.gen_synthetic(data.SyntheticSpec(C, n_per, D, 3.0, 1.0, seed))


# --- synthetic ---------------------------------------------------------------


def test_synthetic_is_deterministic():
    a = small_dataset(seed=5)
    b = small_dataset(seed=5)
    assert a.features.tobytes() == b.features.tobytes()
    np.testing.assert_array_equal(a.clean_labels, b.clean_labels)
    assert not np.array_equal(a.features, small_dataset(seed=6).features)


def test_synthetic_class_balance_and_clean_flags():
    ds = small_dataset(n_per=40, C=4, D=6)
    assert np.bincount(ds.clean_labels).tolist() == [40] * 4
    assert not ds.corrupted_flags.any()
    np.testing.assert_array_equal(ds.observed_labels, ds.clean_labels)


def test_synthetic_bayes_rule_accuracy():
    sep = 3.0
    ds = data.gen_synthetic(data.SyntheticSpec(2, 20000, 10, sep, 1.0, 1))
    # equal priors, equal isotropic covariance: the Bayes rule picks the nearer center
    pred = (ds.features[:, 1] > ds.features[:, 0]).astype(int)
    acc = np.mean(pred == ds.clean_labels)
    bayes = norm.cdf(sep / math.sqrt(2))
    assert abs(acc - bayes) < 3 * math.sqrt(bayes * (1 - bayes) / len(ds))


def test_synthetic_settings_validation():
    with pytest.raises(ConfigError):
        data.gen_synthetic(data.SyntheticSpec(class_count=1))
    with pytest.raises(ConfigError):
        data.gen_synthetic(data.SyntheticSpec(noise_sigma=0.0))


# --- corruption --------------------------------------------------------------


def test_symmetric_zero_rate_is_identity():
    ds = small_dataset()
    out = data.corrupt_symmetric(ds, 0.0, 1)
    np.testing.assert_array_equal(out.observed_labels, ds.observed_labels)
    assert not out.corrupted_flags.any()


def test_symmetric_rate_and_uniform_targets():
    ds = data.make_dataset(np.zeros((20000, 1)), np.zeros(20000, int), class_count=5)
    r = 0.4
    out = data.corrupt_symmetric(ds, r, 9)
    flipped = out.corrupted_flags.mean()
    assert abs(flipped - r) < 3 * math.sqrt(r * (1 - r) / len(ds))
    assert np.all(out.observed_labels[out.corrupted_flags] != 0)
    counts = np.bincount(out.observed_labels[out.corrupted_flags], minlength=5)[1:]
    expected = out.corrupted_flags.sum() / 4
    assert np.all(np.abs(counts - expected) < 4 * math.sqrt(expected))


def test_symmetric_keeps_features_and_clean_labels():
    ds = small_dataset()
    out = data.corrupt_symmetric(ds, 0.5, 3)
    assert out.features is ds.features or np.array_equal(out.features, ds.features)
    np.testing.assert_array_equal(out.clean_labels, ds.clean_labels)
    np.testing.assert_array_equal(out.corrupted_flags, out.observed_labels != out.clean_labels)


def test_corruption_is_seeded():
    ds = small_dataset()
    a = data.corrupt_symmetric(ds, 0.3, 4).observed_labels
    b = data.corrupt_symmetric(ds, 0.3, 4).observed_labels
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("r", [-0.1, 1.5])
def test_corruption_rejects_bad_rate(r):
    with pytest.raises(ConfigError):
        data.corrupt_symmetric(small_dataset(), r, 0)


def test_asymmetric_only_moves_within_pairs():
    C = 6
    labels = np.repeat(np.arange(C), 4000)
    ds = data.make_dataset(np.zeros((len(labels), 1)), labels, class_count=C)
    pairs = [(0, 3), (1, 4)]
    r = 0.3
    out = data.corrupt_asymmetric(ds, pairs, r, 2)
    moved = out.corrupted_flags
    partner = {0: 3, 3: 0, 1: 4, 4: 1}
    for src, dst in zip(out.clean_labels[moved], out.observed_labels[moved]):
        assert partner[int(src)] == int(dst)
    assert not moved[np.isin(labels, [2, 5])].any()
    coverage = 4 / 6
    n = len(ds)
    expected = r * coverage
    assert abs(moved.mean() - expected) < 3 * math.sqrt(r * (1 - r) * coverage / n)


def test_asymmetric_rejects_overlapping_pairs():
    with pytest.raises(ConfigError):
        data.corrupt_asymmetric(small_dataset(), [(0, 1), (1, 2)], 0.2, 0)
    with pytest.raises(ConfigError):
        data.corrupt_asymmetric(small_dataset(), [(0, 7)], 0.2, 0)


def test_sample_pairs():
    pairs = data.sample_pairs(10, 3, 1)
    flat = [c for p in pairs for c in p]
    assert len(set(flat)) == 6 and all(0 <= c < 10 for c in flat)
    assert pairs == data.sample_pairs(10, 3, 1)
    with pytest.raises(ConfigError):
        data.sample_pairs(5, 3, 0)


# --- imbalance -----------------------------------------------------------------


def test_imbalance_counts():
    labels = np.repeat([0, 1], 12500)
    ds = data.make_dataset(np.arange(25000.0)[:, None], labels)
    out = data.subsample_imbalance(ds, [12500, 1250], 3)
    assert np.bincount(out.observed_labels).tolist() == [12500, 1250]
    assert np.all(np.diff(out.features[:, 0]) > 0)  # order preserved


def test_imbalance_dict_and_errors():
    ds = small_dataset(n_per=20, C=3)
    out = data.subsample_imbalance(ds, {1: 5}, 0)
    assert np.bincount(out.observed_labels).tolist() == [20, 5, 20]
    with pytest.raises(ConfigError):
        data.subsample_imbalance(ds, [20, 30, 20], 0)
    with pytest.raises(ConfigError):
        data.subsample_imbalance(ds, [1, 2], 0)


# --- split -----------------------------------------------------------------------


def test_split_sizes_and_stratification():
    ds = small_dataset(n_per=500, C=2)
    train, val = data.split(ds, 0.8, 0)
    assert len(train) == 800 and len(val) == 200
    assert np.bincount(train.clean_labels).tolist() == [400, 400]
    assert np.bincount(val.clean_labels).tolist() == [100, 100]


def test_split_is_a_partition():
    ds = small_dataset(n_per=37, C=3)
    ds = data.make_dataset(np.column_stack([np.arange(len(ds)), ds.features]), ds.clean_labels)
    train, val = data.split(ds, 0.7, 5)
    ids = np.concatenate([train.features[:, 0], val.features[:, 0]])
    assert sorted(ids.tolist()) == list(range(len(ds)))


def test_split_validation_gets_clean_labels():
    ds = data.corrupt_symmetric(small_dataset(n_per=100), 0.5, 1)
    train, val = data.split(ds, 0.8, 2)
    np.testing.assert_array_equal(val.observed_labels, val.clean_labels)
    assert not val.corrupted_flags.any()
    assert train.corrupted_flags.any()


def test_split_errors():
    with pytest.raises(ConfigError):
        data.split(small_dataset(), 1.0, 0)
    lonely = data.make_dataset(np.zeros((5, 1)), np.array([0, 0, 0, 0, 1]))
    with pytest.raises(StratificationError):
        data.split(lonely, 0.5, 0)


# --- file formats ----------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    ds = small_dataset(n_per=10)
    path = tmp_path / "d.csv"
    data.save_dataset(ds, path)
    back = data.load_dataset(path, class_count=3)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.observed_labels, ds.observed_labels)


def test_csv_parse_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,f0,f1\n0,1.0,2.0\n1,abc,3.0\n")
    with pytest.raises(ParseError, match=":3:"):
        data.load_dataset(path)
    path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
    with pytest.raises(ParseError, match=":3:"):
        data.load_dataset(path)
    path.write_text("y,f0\n0,1.0\n")
    with pytest.raises(ParseError, match=":1:"):
        data.load_dataset(path)


def test_csv_label_out_of_range(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("label,f0\n0,1.0\n4,2.0\n")
    with pytest.raises(ConfigError, match=":3:"):
        data.load_dataset(path, class_count=3)


def test_dmbin_round_trip_keeps_corruption(tmp_path):
    ds = data.corrupt_symmetric(small_dataset(n_per=30), 0.4, 7)
    path = tmp_path / "d.dmbin"
    data.save_dataset(ds, path)
    assert path.read_bytes()[:4] == b"DMD1"
    back = data.load_dataset(path)
    np.testing.assert_array_equal(back.features, ds.features.astype(np.float32).astype(np.float64))
    np.testing.assert_array_equal(back.observed_labels, ds.observed_labels)
    np.testing.assert_array_equal(back.clean_labels, ds.clean_labels)
    np.testing.assert_array_equal(back.corrupted_flags, ds.corrupted_flags)


def test_dmbin_truncated(tmp_path):
    path = tmp_path / "d.dmbin"
    data.save_dataset(small_dataset(n_per=5), path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ParseError):
        data.load_dataset(path)
