import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tmirank.ingest import (
    AccuracyVector,
    FeatureMatrix,
    LabelVector,
    ParseError,
    SourcePredictionMatrix,
    SyntheticSpec,
    ValidationError,
    generate_synthetic,
    load_accuracies,
    load_features,
    load_labels,
    save_accuracies,
    save_features,
    save_labels,
    split_by_class,
    standardize,
)


class TestLoadFeatures:
    def test_csv_rows_in_order(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("1.0,2.0\n3.0,4.0\n5.0,6.0\n")
        fm = load_features(p)
        assert (fm.n, fm.d) == (3, 2)
        np.testing.assert_array_equal(fm.data, [[1, 2], [3, 4], [5, 6]])

    def test_nan_reports_coordinates(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("1.0,2.0\n3.0,nan\n")
        with pytest.raises(ValidationError, match="row 1, column 1"):
            load_features(p)

    def test_unparseable_cell(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("1.0,2.0\n3.0,abc\n")
        with pytest.raises(ParseError, match="row 1, column 1"):
            load_features(p)

    def test_ragged_rows(self, tmp_path):
        p = tmp_path / "f.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(ParseError, match="row 1"):
            load_features(p)

    def test_binary_round_trip_bit_exact(self, tmp_path, rng):
        data = rng.standard_normal((100, 8)) * 10.0 ** rng.integers(-200, 200, (100, 8))
        p = tmp_path / "f.bin"
        save_features(p, FeatureMatrix(data), "binary")
        raw = p.read_bytes()
        assert raw[:4] == b"TMIF" and raw[4] == 1
        assert int.from_bytes(raw[5:13], "little") == 100
        assert int.from_bytes(raw[13:21], "little") == 8
        assert len(raw) == 21 + 800 * 8
        back = load_features(p, "binary")
        assert back.data.tobytes() == data.tobytes()

    def test_binary_truncated(self, tmp_path):
        p = tmp_path / "f.bin"
        save_features(p, FeatureMatrix(np.ones((3, 2))), "binary")
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ParseError, match="expected"):
            load_features(p, "binary")

    def test_binary_bad_magic(self, tmp_path):
        p = tmp_path / "f.bin"
        p.write_bytes(b"XXXX" + bytes(17))
        with pytest.raises(ParseError, match="magic"):
            load_features(p, "binary")

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
                      elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_csv_round_trip_bit_exact(self, tmp_path_factory, data):
        p = tmp_path_factory.mktemp("rt") / "f.csv"
        save_features(p, FeatureMatrix(data), "csv")
        assert load_features(p).data.tobytes() == (data + 0.0).tobytes()

    def test_immutable(self):
        fm = FeatureMatrix(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            fm.data[0, 0] = 1.0


class TestLoadLabels:
    def test_infers_num_classes(self, tmp_path):
        p = tmp_path / "l.txt"
        p.write_text("0\n1\n0\n")
        lv = load_labels(p)
        assert lv.labels.tolist() == [0, 1, 0] and lv.num_classes == 2

    def test_label_at_bound_rejected(self, tmp_path):
        p = tmp_path / "l.txt"
        p.write_text("2\n")
        with pytest.raises(ValidationError):
            load_labels(p, 2)

    def test_negative_rejected(self, tmp_path):
        p = tmp_path / "l.txt"
        p.write_text("0\n-1\n")
        with pytest.raises(ValidationError):
            load_labels(p)

    def test_round_trip_large(self, tmp_path, rng):
        labels = rng.integers(0, 10, 1000)
        labels[0] = 9
        p = tmp_path / "l.txt"
        save_labels(p, LabelVector.from_labels(labels))
        lv = load_labels(p)
        assert lv.num_classes == 10
        np.testing.assert_array_equal(lv.labels, labels)

    def test_gaps_allowed(self):
        lv = LabelVector([0, 3], 5)
        assert lv.counts().tolist() == [1, 0, 0, 1, 0]


class TestOtherTypes:
    def test_source_predictions_row_sums(self):
        with pytest.raises(ValidationError, match="row 1"):
            SourcePredictionMatrix([[0.5, 0.5], [0.5, 0.6]])
        SourcePredictionMatrix([[0.5, 0.5], [1.0, 0.0]])

    def test_accuracies_round_trip(self, tmp_path):
        acc = AccuracyVector(("a", "b"), [0.5, 0.75])
        p = tmp_path / "acc.csv"
        save_accuracies(p, acc)
        back = load_accuracies(p)
        assert back.model_ids == ("a", "b")
        np.testing.assert_array_equal(back.accuracies, [0.5, 0.75])

    def test_accuracy_header_tolerated(self, tmp_path):
        p = tmp_path / "acc.csv"
        p.write_text("model_id,accuracy\nm1,0.9\n")
        assert load_accuracies(p).as_dict() == {"m1": 0.9}

    def test_accuracy_bounds_and_duplicates(self):
        with pytest.raises(ValidationError):
            AccuracyVector(("a",), [1.5])
        with pytest.raises(ValidationError, match="duplicate"):
            AccuracyVector(("a", "a"), [0.1, 0.2])


class TestSplitByClass:
    def test_hand_example(self):
        blocks = split_by_class(FeatureMatrix([[1.0], [2.0], [3.0]]), LabelVector([0, 1, 0], 2))
        assert blocks[0].tolist() == [[1.0], [3.0]]
        assert blocks[1].tolist() == [[2.0]]

    def test_single_class(self, rng):
        x = rng.standard_normal((7, 2))
        (block,) = split_by_class(FeatureMatrix(x), LabelVector([0] * 7, 1))
        np.testing.assert_array_equal(block, x)

    def test_empty_class_block(self):
        blocks = split_by_class(FeatureMatrix([[1.0], [2.0]]), LabelVector([0, 2], 3))
        assert blocks[1].shape == (0, 1)

    def test_matches_filter(self, rng):
        x = rng.standard_normal((50, 3))
        y = rng.integers(0, 4, 50)
        blocks = split_by_class(FeatureMatrix(x), LabelVector(y, 4))
        for c in range(4):
            expected = [tuple(x[i]) for i in range(50) if y[i] == c]
            assert [tuple(r) for r in blocks[c]] == expected

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            split_by_class(FeatureMatrix(np.zeros((3, 1))), LabelVector([0, 1], 2))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=40))
    def test_partition(self, labels):
        x = np.arange(len(labels), dtype=float)[:, None]
        blocks = split_by_class(FeatureMatrix(x), LabelVector(labels, 5))
        rebuilt = np.sort(np.concatenate(blocks)[:, 0])
        np.testing.assert_array_equal(rebuilt, x[:, 0])
        assert sum(b.shape[0] for b in blocks) == len(labels)


class TestSynthetic:
    def spec(self, **kw):
        base = dict(num_classes=1, samples_per_class=[5], dim=2, class_means=0.0, class_spreads=[1.0], seed=7)
        base.update(kw)
        return SyntheticSpec(**base)

    def test_deterministic(self):
        a = generate_synthetic(self.spec())
        b = generate_synthetic(self.spec())
        assert a[0].data.tobytes() == b[0].data.tobytes()
        np.testing.assert_array_equal(a[1].labels, b[1].labels)

    def test_seed_changes_output(self):
        a = generate_synthetic(self.spec())[0].data
        b = generate_synthetic(self.spec(seed=8))[0].data
        assert not np.array_equal(a, b)

    def test_degenerate_spread(self):
        x, _ = generate_synthetic(self.spec(class_means=[[3.0, -2.0]], class_spreads=[1e-9]))
        assert np.abs(x.data - [3.0, -2.0]).max() < 1e-6

    def test_law_of_large_numbers(self):
        means = np.array([[0.0, 1.0, 2.0, 3.0], [5.0, 5.0, -5.0, 0.0]])
        spec = SyntheticSpec(2, [500, 500], 4, means, [1.0, 1.0], seed=1)
        x, y = generate_synthetic(spec)
        for c in range(2):
            sample_mean = x.data[y.labels == c].mean(axis=0)
            assert np.abs(sample_mean - means[c]).max() <= 0.15

    def test_standard_normal_moments(self):
        x, _ = generate_synthetic(self.spec(samples_per_class=[200000], dim=1))
        assert abs(x.data.mean()) < 0.01
        assert abs(x.data.std() - 1.0) < 0.01

    @pytest.mark.parametrize(
        "kw",
        [dict(class_spreads=[0.0]), dict(samples_per_class=[0]), dict(seed=-1), dict(class_means=[[0.0]])],
    )
    def test_invalid_spec(self, kw):
        with pytest.raises(ValidationError):
            self.spec(**kw)


def test_standardize_records_warning():
    fm, notes = standardize(FeatureMatrix([[1.0, 5.0], [3.0, 5.0]]))
    np.testing.assert_array_equal(fm.data, [[-1.0, 0.0], [1.0, 0.0]])
    assert any("standardized" in n for n in notes)
    assert any("constant" in n for n in notes)
