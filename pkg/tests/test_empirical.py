"""Ranks, Spearman's rho, pseudo-observations, kernel marginals and CSV I/O."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smstree.empirical import (
    CDF_CLAMP,
    Dataset,
    average_ranks,
    fit_marginal,
    marginal_cdf,
    marginal_log_pdf,
    pairwise_rho_matrix,
    pseudo_observations,
    read_csv,
    spearman_rho,
    write_csv,
)
from smstree.errors import DataError, FormatError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestRanks:
    def test_examples(self):
        np.testing.assert_array_equal(average_ranks([10, 20, 30]), [1, 2, 3])
        np.testing.assert_array_equal(average_ranks([5, 5]), [1.5, 1.5])
        np.testing.assert_array_equal(average_ranks([1, 2, 2, 4]), [1, 2.5, 2.5, 4])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            average_ranks([1.0, math.nan])

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=40))
    def test_rank_sum(self, xs):
        m = len(xs)
        assert average_ranks(xs).sum() == pytest.approx(m * (m + 1) / 2)


class TestSpearman:
    def test_comonotone_and_countermonotone(self):
        assert spearman_rho([1, 2, 3], [4, 5, 6]) == 1.0
        assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0

    def test_ties_hand_value(self):
        assert spearman_rho([1, 2, 2, 4], [1, 3, 2, 4]) == pytest.approx(
            4.5 / math.sqrt(4.5 * 5), abs=1e-15)

    def test_constant_column(self):
        with pytest.raises(DataError, match="constant"):
            spearman_rho([1, 1, 1], [1, 2, 3])

    def test_invariant_under_increasing_transforms(self, rng):
        x, y = rng.normal(size=300), rng.normal(size=300) + 0.3 * rng.normal(size=300)
        x = x + 0.5 * y
        base = spearman_rho(x, y)
        assert spearman_rho(np.exp(x), y) == base
        assert spearman_rho(x, y ** 3) == base
        assert spearman_rho(np.exp(x), y ** 3) == base

    @given(st.lists(st.tuples(finite, finite), min_size=3, max_size=30))
    @settings(max_examples=80)
    def test_symmetric_and_bounded(self, pairs):
        x, y = map(np.array, zip(*pairs))
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            return
        r = spearman_rho(x, y)
        assert r == spearman_rho(y, x)
        assert -1.0 <= r <= 1.0


class TestPairwiseMatrix:
    def test_identical_columns(self):
        d = Dataset(["a", "b"], np.column_stack([np.arange(5.0), np.arange(5.0)]))
        np.testing.assert_array_equal(pairwise_rho_matrix(d), [[1, 1], [1, 1]])

    def test_symmetric_and_matches_pairwise(self, rng):
        d = Dataset(list("abcd"), rng.normal(size=(200, 4)) @ rng.normal(size=(4, 4)))
        r = pairwise_rho_matrix(d)
        np.testing.assert_array_equal(r, r.T)
        for i in range(4):
            for j in range(4):
                if i != j:
                    assert r[i, j] == pytest.approx(spearman_rho(d.column(i), d.column(j)), abs=1e-14)

    def test_independent_columns_near_zero(self):
        d = Dataset(list("abc"), np.random.default_rng(5).normal(size=(5000, 3)))
        r = pairwise_rho_matrix(d)
        assert np.all(np.abs(r[np.triu_indices(3, 1)]) <= 0.04)

    def test_row_permutation_invariance(self, rng):
        values = rng.normal(size=(100, 3))
        d = Dataset(list("abc"), values)
        p = Dataset(list("abc"), values[rng.permutation(100)])
        np.testing.assert_allclose(pairwise_rho_matrix(d), pairwise_rho_matrix(p), atol=1e-15)

    def test_constant_variable_named(self):
        d = Dataset(["a", "flat"], np.column_stack([np.arange(4.0), np.ones(4)]))
        with pytest.raises(DataError, match="flat"):
            pairwise_rho_matrix(d)


class TestPseudoObservations:
    def test_example(self):
        d = Dataset(["a", "b"], np.array([[10.0, 1.0], [20.0, 3.0], [30.0, 2.0]]))
        np.testing.assert_allclose(pseudo_observations(d)[:, 0], [0.25, 0.5, 0.75])

    def test_strictly_inside_and_rho_preserved(self, rng):
        d = Dataset(["a", "b"], rng.normal(size=(50, 2)).round(1))
        p = pseudo_observations(d)
        assert np.all((p > 0) & (p < 1))
        assert spearman_rho(p[:, 0], p[:, 1]) == pytest.approx(
            spearman_rho(d.column(0), d.column(1)), abs=1e-15)


class TestMarginal:
    def test_bandwidth_positive_and_silverman(self):
        x = np.random.default_rng(0).normal(size=10_000)
        m = fit_marginal(x)
        assert m.bandwidth > 0
        assert m.bandwidth == pytest.approx(1.06 * 10_000 ** -0.2, rel=0.15)

    def test_scale_equivariance(self, rng):
        x = rng.gamma(2.0, size=200)
        assert fit_marginal(10 * x).bandwidth == pytest.approx(10 * fit_marginal(x).bandwidth, rel=1e-12)

    def test_constant_rejected(self):
        with pytest.raises(DataError):
            fit_marginal([2.0, 2.0, 2.0])

    def test_median_of_symmetric_centres(self):
        m = fit_marginal([-3.0, -1.0, 0.5, 2.0, 3.5, 5.0, 7.0])
        assert marginal_cdf(m, 2.0) == pytest.approx(0.5, abs=1e-9)

    def test_clamp_limits(self):
        m = fit_marginal([0.0, 1.0, 2.0])
        assert marginal_cdf(m, -1e6) == CDF_CLAMP
        assert marginal_cdf(m, 1e6) == 1 - CDF_CLAMP

    def test_cdf_derivative_matches_pdf(self, rng):
        m = fit_marginal(rng.normal(size=300))
        h = 1e-5
        for x in rng.uniform(-2, 2, size=20):
            fd = (m.raw_cdf(x + h) - m.raw_cdf(x - h)) / (2 * h)
            assert fd == pytest.approx(math.exp(marginal_log_pdf(m, x)), rel=1e-4)

    def test_cdf_monotone(self, rng):
        m = fit_marginal(rng.standard_t(3, size=200))
        q = np.sort(rng.uniform(-20, 20, size=500))
        assert np.all(np.diff(m.cdf(q)) >= 0)

    def test_pdf_positive_far_away(self):
        m = fit_marginal([0.0, 1.0, 2.0])
        assert np.isfinite(marginal_log_pdf(m, 1e3))


class TestDatasetAndCsv:
    def test_invariants(self):
        with pytest.raises(DataError):
            Dataset(["a"], np.zeros((5, 1)))
        with pytest.raises(DataError):
            Dataset(["a", "b"], np.zeros((2, 2)))
        with pytest.raises(DataError):
            Dataset(["a", "a"], np.zeros((3, 2)))
        with pytest.raises(DataError, match="non-finite"):
            Dataset(["a", "b"], np.array([[1, 2], [3, np.inf], [4, 5]]))

    def test_round_trip(self, tmp_path, rng):
        d = Dataset(["x", "y", "z"], rng.normal(size=(10, 3)))
        path = tmp_path / "d.csv"
        write_csv(d, path, comments=["seed=1"])
        assert read_csv(path) == d

    def test_bad_cell_reports_coordinates(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,oops\n4,5\n")
        with pytest.raises(FormatError, match=r"line 3: column 2"):
            read_csv(path)

    def test_missing_cell(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("a,b,c\n1,2,3\n4,5\n")
        with pytest.raises(FormatError, match="line 3"):
            read_csv(path)

    def test_empty_cell(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("a,b\n1,\n2,3\n3,4\n")
        with pytest.raises(FormatError, match="line 2: column 2"):
            read_csv(path)
