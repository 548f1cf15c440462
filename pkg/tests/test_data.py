import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from driftshade import (
    CsvFormatError,
    LabeledDataset,
    SplitSpec,
    generate_synthetic,
    load_csv,
    save_csv,
    split_dataset,
)


class TestLabeledDataset:
    def test_shape_accessors(self):
        ds = LabeledDataset(np.zeros((5, 3)), [0, 1, 0, 1, 1])
        assert (ds.n, ds.d) == (5, 3)

    def test_rejects_label_length_mismatch(self):
        with pytest.raises(ValueError, match="label"):
            LabeledDataset(np.zeros((4, 2)), [0, 1])

    def test_rejects_non_binary_labels(self):
        with pytest.raises(ValueError, match="0 or 1"):
            LabeledDataset(np.zeros((2, 2)), [0, 2])

    def test_rejects_1d_features(self):
        with pytest.raises(ValueError, match="2-D"):
            LabeledDataset(np.zeros(4), [0, 0, 1, 1])

    def test_subset_and_malware_rows(self):
        feats = np.arange(12, dtype=float).reshape(6, 2)
        ds = LabeledDataset(feats, [0, 1, 0, 1, 1, 0])
        sub = ds.subset([1, 3])
        assert sub.n == 2 and (sub.labels == 1).all()
        np.testing.assert_array_equal(ds.malware_rows(), feats[[1, 3, 4]])


class TestGenerateSynthetic:
    def test_shapes_and_label_blocks(self):
        ds = generate_synthetic(10, 4, 2.0, seed=0)
        assert ds.features.shape == (20, 4)
        assert (ds.labels[:10] == 0).all() and (ds.labels[10:] == 1).all()

    def test_deterministic_given_seed(self):
        a = generate_synthetic(50, 6, 3.0, seed=9)
        b = generate_synthetic(50, 6, 3.0, seed=9)
        np.testing.assert_array_equal(a.features, b.features)
        assert not np.array_equal(
            a.features, generate_synthetic(50, 6, 3.0, seed=10).features
        )

    def test_zero_separation_means_coincide(self):
        ds = generate_synthetic(3000, 2, 0.0, seed=7)
        gap = ds.malware_rows().mean(axis=0) - ds.features[ds.labels == 0].mean(axis=0)
        assert np.abs(gap).max() < 0.15

    def test_mean_gap_matches_separation(self):
        # centers at +-(sep/2)/sqrt(d) per coordinate, so the between-class
        # mean difference is sep/sqrt(d) on every feature
        sep, d = 4.0, 16
        ds = generate_synthetic(4000, d, sep, seed=1)
        gap = ds.malware_rows().mean(axis=0) - ds.features[ds.labels == 0].mean(axis=0)
        np.testing.assert_allclose(gap, sep / np.sqrt(d), atol=0.12)

    def test_unit_covariance(self):
        ds = generate_synthetic(4000, 8, 4.0, seed=2)
        stds = ds.malware_rows().std(axis=0)
        np.testing.assert_allclose(stds, 1.0, atol=0.08)

    @pytest.mark.parametrize("bad", [(1, 4, 1.0), (5, 1, 1.0), (5, 4, -0.5)])
    def test_invalid_arguments(self, bad):
        n, d, sep = bad
        with pytest.raises(ValueError):
            generate_synthetic(n, d, sep, seed=0)

    def test_separable_by_logistic_oracle(self):
        # a plain linear model on half the rows should classify the other
        # half almost perfectly at this separation
        ds = generate_synthetic(500, 64, 4.0, seed=1)
        rng = np.random.default_rng(0)
        order = rng.permutation(ds.n)
        half = ds.n // 2
        fit_idx, eval_idx = order[:half], order[half:]
        clf = LogisticRegression(max_iter=1000)
        clf.fit(ds.features[fit_idx], ds.labels[fit_idx])
        acc = clf.score(ds.features[eval_idx], ds.labels[eval_idx])
        assert acc > 0.95


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        ds = generate_synthetic(20, 5, 2.0, seed=4)
        path = tmp_path / "ds.csv"
        save_csv(ds, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_header_row_names_features(self, tmp_path):
        ds = LabeledDataset([[1.0, 2.0]], [1])
        path = tmp_path / "ds.csv"
        save_csv(ds, path)
        assert path.read_text().splitlines()[0] == "f0,f1,label"

    def test_no_header_mode(self, tmp_path):
        path = tmp_path / "raw.csv"
        path.write_text("0.5,1.5,1\n0.25,2.5,0\n")
        ds = load_csv(path, has_header=False)
        assert ds.n == 2
        np.testing.assert_array_equal(ds.labels, [1, 0])

    def test_ragged_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n1.0,2.0,1\n1.0,1\n")
        with pytest.raises(CsvFormatError, match="row 3"):
            load_csv(path)

    def test_non_numeric_cell_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n1.0,oops,1\n")
        with pytest.raises(CsvFormatError, match="row 2.*oops"):
            load_csv(path)

    def test_label_outside_01(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n1.0,2.0,3\n")
        with pytest.raises(CsvFormatError, match="label"):
            load_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(CsvFormatError, match="no rows"):
            load_csv(path)


class TestSplitSpec:
    def test_defaults_valid(self):
        spec = SplitSpec()
        assert (spec.train, spec.val, spec.test) == (0.7, 0.15, 0.15)

    def test_rejects_non_positive_fraction(self):
        with pytest.raises(ValueError, match="positive"):
            SplitSpec(train=1.0, val=0.0, test=0.0)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sum"):
            SplitSpec(train=0.5, val=0.3, test=0.3)


class TestSplitDataset:
    def test_rounding_remainder_to_train(self):
        ds = LabeledDataset(np.zeros((10, 2)), [0] * 5 + [1] * 5)
        train, val, test = split_dataset(ds, SplitSpec(0.8, 0.1, 0.1, seed=0))
        assert (train.n, val.n, test.n) == (8, 1, 1)

    def test_partition_exhaustive_and_disjoint(self):
        ds = generate_synthetic(100, 3, 1.0, seed=0)
        # tag rows uniquely through the first feature so we can track them
        ds.features[:, 0] = np.arange(ds.n)
        train, val, test = split_dataset(ds, SplitSpec(seed=2))
        tags = np.concatenate(
            [train.features[:, 0], val.features[:, 0], test.features[:, 0]]
        )
        assert sorted(tags.tolist()) == list(range(ds.n))

    def test_deterministic_given_seed(self):
        ds = generate_synthetic(50, 3, 1.0, seed=0)
        a = split_dataset(ds, SplitSpec(seed=4))
        b = split_dataset(ds, SplitSpec(seed=4))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.features, y.features)

    def test_stratified_within_5pp(self):
        ds = generate_synthetic(200, 3, 1.0, seed=1)
        overall = ds.labels.mean()
        for part in split_dataset(ds, SplitSpec(seed=3)):
            assert abs(part.labels.mean() - overall) <= 0.05

    def test_too_small_errors(self):
        ds = LabeledDataset(np.zeros((2, 2)), [0, 1])
        with pytest.raises(ValueError):
            split_dataset(ds, SplitSpec())
