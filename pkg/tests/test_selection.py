"""Rank correlation, the correlation filter, and the redundancy filter."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from buildtriage.errors import LengthMismatch
from buildtriage.selection import (
    DEFAULT_PRIORITY,
    SelectionReport,
    correlation_filter,
    redundancy_filter,
    render_dendrogram,
    rho_matrix,
    run_selection,
    single_linkage_merges,
    spearman_rho,
)

finite_floats = st.floats(
    allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6
)


def synth_matrix(seed=0, n=2000, p=10):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p))


class TestSpearman:
    def test_textbook_value(self):
        # d^2 sums to 4: rho = 1 - 6*4/(5*24) = 0.8, exact in floats
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([2.0, 1.0, 3.0, 5.0, 4.0])
        assert spearman_rho(x, y) == 0.8

    def test_identity_is_exactly_one(self):
        x = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
        assert spearman_rho(x, x) == 1.0

    def test_reversal_is_minus_one(self):
        x = np.arange(10.0)
        assert spearman_rho(x, -x) == pytest.approx(-1.0)

    def test_constant_input_is_zero(self):
        assert spearman_rho(np.ones(5), np.arange(5.0)) == 0.0

    def test_ties_use_average_ranks(self):
        x = np.array([1.0, 1.0, 2.0])
        y = np.array([1.0, 2.0, 3.0])
        # ranks of x are (1.5, 1.5, 3); cov/sd gives sqrt(3)/2
        assert spearman_rho(x, y) == pytest.approx(np.sqrt(3) / 2)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            spearman_rho(np.arange(3.0), np.arange(4.0))

    def test_too_short(self):
        with pytest.raises(LengthMismatch):
            spearman_rho(np.array([1.0]), np.array([2.0]))

    @given(
        st.lists(finite_floats, min_size=2, max_size=30),
        st.data(),
    )
    def test_symmetry_and_bounds(self, xs, data):
        ys = data.draw(
            st.lists(finite_floats, min_size=len(xs), max_size=len(xs))
        )
        x = np.array(xs)
        y = np.array(ys)
        r = spearman_rho(x, y)
        assert -1.0 <= r <= 1.0
        assert spearman_rho(y, x) == r

    @given(st.lists(finite_floats, min_size=2, max_size=30, unique=True))
    def test_monotone_transform_invariance(self, xs):
        x = np.array(xs)
        assert spearman_rho(x, 4.0 * x) == 1.0

    def test_rho_matrix_shape_and_diagonal(self):
        X = synth_matrix(p=4)
        R = rho_matrix(X)
        assert R.shape == (4, 4)
        np.testing.assert_array_equal(np.diag(R), np.ones(4))
        np.testing.assert_allclose(R, R.T)


class TestCorrelationFilter:
    def test_independent_features_all_survive(self):
        X = synth_matrix()
        names = [f"f{i}" for i in range(10)]
        report = correlation_filter(X, names)
        assert list(report.retained) == names
        assert report.removed == ()

    def test_near_copy_removed_with_reason(self):
        X = synth_matrix()
        X[:, 7] = X[:, 2] + 0.1 * np.random.default_rng(1).standard_normal(len(X))
        names = [f"f{i}" for i in range(10)]
        report = correlation_filter(X, names)
        assert "f7" not in report.retained
        assert ("f7", "correlated_with(f2)") in report.removed

    def test_cluster_survivor_prefers_priority_list(self):
        X = synth_matrix(p=3)
        X[:, 1] = X[:, 0] + 0.01 * np.random.default_rng(2).standard_normal(len(X))
        names = ["aaa", "zzz", "mid"]
        report = correlation_filter(X, names, priority=("zzz",))
        assert "zzz" in report.retained
        assert ("aaa", "correlated_with(zzz)") in report.removed

    def test_name_tie_break_without_priority(self):
        X = synth_matrix(p=3)
        X[:, 1] = X[:, 0] * 2.0  # same kind, lexicographically later name loses
        names = ["beta", "alpha", "gamma"]
        report = correlation_filter(X, names, priority=())
        assert "alpha" in report.retained
        assert ("beta", "correlated_with(alpha)") in report.removed

    def test_indicator_kind_preferred_over_measure(self):
        X = synth_matrix(p=2)
        X[:, 1] = np.sign(X[:, 0])  # monotone, so |rho| is high
        names = ["zz_hours", "is_zz"]
        report = correlation_filter(X, names, priority=())
        assert report.retained == ("is_zz",)
        assert report.removed == (("zz_hours", "correlated_with(is_zz)"),)

    def test_constant_column_always_removed(self):
        X = synth_matrix(p=3)
        X[:, 2] = 5.0
        names = ["a", "b", "c"]
        report = correlation_filter(X, names)
        assert report.retained == ("a", "b")
        assert ("c", "correlated_with(constant)") in report.removed

    def test_single_linkage_chains_clusters(self):
        # a~b and b~c but a!~c still collapse into one cluster
        rng = np.random.default_rng(3)
        n = 5000
        a = rng.standard_normal(n)
        b = a + 0.8 * rng.standard_normal(n)
        c = b + 0.9 * rng.standard_normal(n)
        X = np.column_stack([a, b, c])
        R = rho_matrix(X)
        assert abs(R[0, 1]) >= 0.7 and abs(R[1, 2]) >= 0.7 and abs(R[0, 2]) < 0.7
        report = correlation_filter(X, ["a", "b", "c"], priority=())
        assert report.retained == ("a",)
        assert len(report.removed) == 2


class TestRedundancyFilter:
    def test_exact_linear_dependence_removed(self):
        X = synth_matrix()
        X[:, 9] = X[:, 1] + X[:, 4] - X[:, 6]
        names = [f"f{i}" for i in range(10)]
        report = redundancy_filter(X, names)
        assert "f9" not in report.retained
        assert report.removed == (("f9", "redundant(R2=1.000000)"),)

    def test_independent_features_survive(self):
        X = synth_matrix()
        report = redundancy_filter(X, [f"f{i}" for i in range(10)])
        assert report.removed == ()
        assert len(report.retained) == 10

    def test_tie_drops_lexicographically_greatest(self):
        # u and v are exact copies: both reach R2=1, the later name goes first,
        # after which the survivor is no longer redundant
        X = synth_matrix(p=4)
        X[:, 3] = X[:, 0]
        report = redundancy_filter(X, ["alpha", "b", "c", "zulu"])
        assert [name for name, _ in report.removed] == ["zulu"]
        assert "alpha" in report.retained

    def test_pairwise_fallback_on_singular_design(self):
        # more columns than rows forces the pairwise path
        rng = np.random.default_rng(4)
        X = rng.standard_normal((6, 8))
        X[:, 7] = X[:, 2]
        report = redundancy_filter(X, [f"f{i}" for i in range(8)])
        assert "f7" not in report.retained
        reasons = dict(report.removed)
        assert reasons["f7"].startswith("redundant(R2=")


class TestRunSelection:
    def test_both_passes_compose(self):
        X = synth_matrix()
        rng = np.random.default_rng(5)
        X[:, 7] = X[:, 2] + 0.1 * rng.standard_normal(len(X))
        X[:, 9] = X[:, 1] + X[:, 4] - X[:, 6]
        names = [f"f{i}" for i in range(10)]
        report = run_selection(X, names)
        assert set(report.retained) == {"f0", "f1", "f2", "f3", "f4", "f5", "f6", "f8"}
        assert dict(report.removed) == {
            "f7": "correlated_with(f2)",
            "f9": "redundant(R2=1.000000)",
        }

    def test_fixpoint_on_rerun(self):
        X = synth_matrix()
        rng = np.random.default_rng(6)
        X[:, 7] = X[:, 2] + 0.1 * rng.standard_normal(len(X))
        X[:, 9] = X[:, 1] + X[:, 4] - X[:, 6]
        names = [f"f{i}" for i in range(10)]
        report = run_selection(X, names)
        idx = [names.index(n) for n in report.retained]
        again = run_selection(X[:, idx], list(report.retained))
        assert list(again.retained) == list(report.retained)
        assert again.removed == ()

    def test_report_consistency_enforced(self):
        with pytest.raises(ValueError):
            SelectionReport(
                retained=("a",),
                removed=(("a", "correlated_with(b)"),),
                rho_matrix=np.ones((2, 2)),
                feature_names=("a", "b"),
            )

    def test_to_dict_round_trip_shape(self):
        X = synth_matrix(p=3)
        report = run_selection(X, ["a", "b", "c"])
        d = report.to_dict()
        assert d["retained"] == ["a", "b", "c"]
        assert d["removed"] == []
        assert d["rho_matrix"]["features"] == ["a", "b", "c"]
        assert len(d["rho_matrix"]["values"]) == 3

    def test_default_priority_holds_key_predictors(self):
        assert DEFAULT_PRIORITY[0] == "num_similar_failures"
        assert "is_shared_same_emsg" in DEFAULT_PRIORITY


class TestDendrogram:
    def test_merge_heights_are_sorted_distances(self):
        X = synth_matrix(p=4)
        X[:, 1] = X[:, 0] * 3.0
        merges = single_linkage_merges(rho_matrix(X))
        heights = [m[0] for m in merges]
        assert heights == sorted(heights)
        assert len(merges) == 3  # p-1 merges to a single cluster

    def test_render_lines(self):
        X = synth_matrix(p=3)
        lines = render_dendrogram(rho_matrix(X), ["a", "b", "c"]).splitlines()
        assert len(lines) == 2
        for line in lines:
            float(line.split()[0])  # leading field is the merge distance
            assert " | " in line
