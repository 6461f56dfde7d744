import math

import numpy as np
import pytest

import oracles
from tmirank.entropy import knn_entropy
from tmirank.ingest import FeatureMatrix, LabelVector, SyntheticSpec, generate_synthetic
from tmirank.scores import ScoringError, icv_center, icv_contrast, icv_ms, icv_snca, tmi


def fm(x):
    return FeatureMatrix(np.asarray(x, dtype=float))


class TestTmi:
    def test_single_class_is_whole_set_entropy(self, rng):
        x = rng.standard_normal((150, 2))
        res = tmi(fm(x), LabelVector([0] * 150, 1), 3)
        assert res.value == knn_entropy(x, 3).value

    def test_balanced_two_classes(self, rng):
        x = rng.standard_normal((200, 3))
        y = np.repeat([0, 1], 100)
        rng.shuffle(y)
        h0 = oracles.kl_entropy(x[y == 0], 3)
        h1 = oracles.kl_entropy(x[y == 1], 3)
        assert tmi(fm(x), LabelVector(y, 2), 3).value == pytest.approx((h0 + h1) / 2, abs=1e-10)

    def test_weighted_decomposition(self, rng):
        x = rng.standard_normal((230, 2))
        y = rng.integers(0, 4, 230)
        res = tmi(fm(x), LabelVector(y, 4), 3)
        parts = [(np.sum(y == c), knn_entropy(x[y == c], 3).value) for c in range(4)]
        expected = sum(n_c / 230 * h for n_c, h in parts)
        assert abs(res.value - expected) <= 1e-12
        assert sum(p["weight"] for p in res.per_class) == pytest.approx(1.0)

    def test_scaling_by_e_adds_d(self, rng):
        x = rng.standard_normal((300, 4))
        y = rng.integers(0, 3, 300)
        labels = LabelVector(y, 3)
        diff = tmi(fm(math.e * x), labels).value - tmi(fm(x), labels).value
        assert diff == pytest.approx(4.0, abs=1e-9)

    def test_small_classes_skipped_and_clamped(self):
        x = np.array([[0.0], [1.0], [3.0], [10.0], [20.0], [21.5], [30.0]])
        y = [0, 0, 0, 1, 2, 2, 3]
        res = tmi(fm(x), LabelVector(y, 5), 3)
        assert [p["class"] for p in res.per_class] == [0, 2]
        assert any("class 1 skipped" in w for w in res.warnings)
        assert any("class 3 skipped" in w for w in res.warnings)
        assert any("class 0: k clamped from 3 to 2" in w for w in res.warnings)
        h0 = knn_entropy(x[:3], 2).value
        h2 = knn_entropy(x[4:6], 1).value
        assert res.value == pytest.approx(0.6 * h0 + 0.4 * h2, abs=1e-14)

    def test_no_scorable_class(self):
        with pytest.raises(ScoringError, match="no scorable class"):
            tmi(fm([[0.0], [1.0]]), LabelVector([0, 1], 2))

    def test_permutation_invariant(self, rng):
        x = rng.standard_normal((120, 2))
        y = rng.integers(0, 3, 120)
        perm = rng.permutation(120)
        a = tmi(fm(x), LabelVector(y, 3)).value
        b = tmi(fm(x[perm]), LabelVector(y[perm], 3)).value
        assert a == b

    def test_translation_invariant(self, rng):
        x = np.round(rng.standard_normal((120, 2)) * 2**16) / 2**16
        y = rng.integers(0, 3, 120)
        labels = LabelVector(y, 3)
        assert tmi(fm(x), labels).value == tmi(fm(x + [7.0, -2.5]), labels).value

    def test_wall_time_recorded(self, rng):
        res = tmi(fm(rng.standard_normal((50, 2))), LabelVector([0] * 50, 1))
        assert res.wall_time >= 0


class TestContrast:
    def test_identical_pair(self):
        assert icv_contrast(fm([[1.0, 2.0], [1.0, 2.0]]), LabelVector([0, 0], 1)).value == 0.0

    def test_single_pair(self):
        assert icv_contrast(fm([[0.0], [2.0]]), LabelVector([0, 0], 1)).value == 4.0

    def test_matches_double_loop(self, rng):
        x = rng.standard_normal((30, 2))
        y = rng.integers(0, 3, 30).tolist()
        assert icv_contrast(fm(x), LabelVector(y, 3)).value == pytest.approx(oracles.contrast(x, y), rel=1e-12)

    def test_no_pair(self):
        with pytest.raises(ScoringError):
            icv_contrast(fm([[0.0], [1.0]]), LabelVector([0, 1], 2))

    def test_translation_and_scale(self, rng):
        x = rng.standard_normal((40, 3))
        y = LabelVector(rng.integers(0, 3, 40), 3)
        base = icv_contrast(fm(x), y).value
        assert icv_contrast(fm(x + 5.0), y).value == pytest.approx(base, rel=1e-12)
        assert icv_contrast(fm(3.0 * x), y).value == pytest.approx(9.0 * base, rel=1e-12)


class TestCenter:
    def test_singletons(self):
        assert icv_center(fm([[1.0], [5.0]]), LabelVector([0, 1], 2)).value == 0.0

    def test_hand(self):
        assert icv_center(fm([[0.0], [2.0]]), LabelVector([0, 0], 1)).value == 1.0

    def test_matches_two_pass(self, rng):
        x = rng.standard_normal((40, 3))
        y = rng.integers(0, 4, 40).tolist()
        assert icv_center(fm(x), LabelVector(y, 4)).value == pytest.approx(oracles.center(x, y), rel=1e-12)

    def test_translation_and_scale(self, rng):
        x = rng.standard_normal((40, 3))
        y = LabelVector(rng.integers(0, 3, 40), 3)
        base = icv_center(fm(x), y).value
        assert icv_center(fm(x - 2.0), y).value == pytest.approx(base, rel=1e-12)
        assert icv_center(fm(0.5 * x), y).value == pytest.approx(0.25 * base, rel=1e-12)


class TestSnca:
    def test_separated_classes(self):
        x = [[0.0], [0.0], [1e6], [1e6]]
        assert icv_snca(fm(x), LabelVector([0, 0, 1, 1], 2)).value == pytest.approx(0.0, abs=1e-300)

    def test_single_class_exact_zero(self, rng):
        x = rng.standard_normal((15, 2))
        assert icv_snca(fm(x), LabelVector([0] * 15, 1)).value == 0.0

    def test_matches_double_loop(self, rng):
        x = rng.standard_normal((20, 2))
        y = rng.integers(0, 2, 20).tolist()
        got = icv_snca(fm(x), LabelVector(y, 2), 1.0).value
        assert got == pytest.approx(oracles.snca(x, y, 1.0), rel=1e-12)

    def test_overflow_safe(self, rng):
        x = rng.standard_normal((20, 2)) * 100
        y = rng.integers(0, 2, 20)
        assert math.isfinite(icv_snca(fm(x), LabelVector(y, 2), 1e-3).value)

    def test_lonely_sample_excluded(self, rng):
        x = rng.standard_normal((5, 2))
        res = icv_snca(fm(x), LabelVector([0, 0, 0, 0, 1], 2))
        assert any("excluded" in w for w in res.warnings)
        assert res.value == pytest.approx(oracles.snca(x, [0, 0, 0, 0, 1], 1.0), rel=1e-12)

    def test_all_lonely(self):
        with pytest.raises(ScoringError):
            icv_snca(fm([[0.0], [1.0]]), LabelVector([0, 1], 2))


class TestMs:
    def test_similarity_at_margin(self):
        # unit vectors at 60 degrees have cosine 0.5 = lambda
        x = [[1.0, 0.0], [0.5, math.sqrt(3) / 2], [-1.0, 0.0], [-0.5, -math.sqrt(3) / 2]]
        res = icv_ms(fm(x), LabelVector([0, 0, 1, 1], 2), alpha=2.0, lam=0.5)
        assert res.value == pytest.approx(math.log(2) / 2, abs=1e-12)

    def test_lonely_sample_contributes_zero(self):
        x = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        res = icv_ms(fm(x), LabelVector([0, 0, 1], 2))
        assert any("contribute 0" in w for w in res.warnings)
        assert res.value == pytest.approx(oracles.ms(x, [0, 0, 1], 2.0, 0.5), rel=1e-12)

    def test_matches_direct(self, rng):
        x = rng.standard_normal((20, 4))
        y = rng.integers(0, 3, 20).tolist()
        got = icv_ms(fm(x), LabelVector(y, 3), 2.0, 0.5).value
        assert got == pytest.approx(oracles.ms(x, y, 2.0, 0.5), rel=1e-12)

    def test_zero_row(self):
        with pytest.raises(ScoringError, match="row 1"):
            icv_ms(fm([[1.0, 0.0], [0.0, 0.0]]), LabelVector([0, 0], 1))


def test_all_scores_deterministic(rng):
    x = fm(rng.standard_normal((60, 3)))
    y = LabelVector(rng.integers(0, 3, 60), 3)
    for fn in (tmi, icv_contrast, icv_center, icv_snca, icv_ms):
        assert fn(x, y).value == fn(x, y).value


@pytest.mark.slow
@pytest.mark.parametrize("d", [2, 4])
def test_spread_response(d):
    values = []
    for seed, s in ((11, 1.0), (12, 2.0)):
        spec = SyntheticSpec(2, [10000, 10000], d, np.outer([0.0, 10.0], np.ones(d)), [s, s], seed=seed)
        values.append(tmi(*generate_synthetic(spec), 3).value)
    assert abs(values[1] - values[0] - d * math.log(2)) <= 0.05
