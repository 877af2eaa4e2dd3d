"""Positive-unlabeled learning: the c estimate, both fit modes, weights."""

import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from buildtriage.errors import (
    DegenerateG,
    EmptyHoldout,
    InsufficientPositives,
    TooFewSamples,
)
from buildtriage.forest import ForestParams, TreeEnsemble
from buildtriage.pu import (
    C_HAT_FLOOR,
    Classification,
    PUMode,
    PUModel,
    classify,
    compute_weight,
    estimate_c,
    fit_classic,
    fit_weighted,
    predict,
    predict_classic,
    weighted_expansion,
)
from tests.conftest import pu_sample

SMALL = ForestParams(n_trees=15, max_depth=6, rng_seed=5)

probs = st.floats(min_value=1e-6, max_value=1.0, exclude_max=False)


def leaf_model(value, n_features=2):
    """A one-leaf ensemble that scores every row at a fixed value."""
    return TreeEnsemble.from_dict(
        {
            "format": "buildtriage-forest",
            "version": 1,
            "params": {
                "n_trees": 1,
                "max_depth": 1,
                "min_leaf_weight": 1.0,
                "feature_subsample": None,
                "rng_seed": 0,
            },
            "n_features": n_features,
            "trees": [
                {
                    "feature": [-1],
                    "threshold": [0.0],
                    "left": [-1],
                    "right": [-1],
                    "value": [value],
                }
            ],
        }
    )


def pu_pools(seed=0, n=400):
    X, y, s = pu_sample(seed, n=n)
    return X[s], X[~s], y, s


class TestComputeWeight:
    @given(st.floats(min_value=1e-9, max_value=0.999))
    def test_identity_at_c(self, c):
        assert compute_weight(c, c) == 1.0

    @given(st.floats(min_value=1e-9, max_value=1.0))
    def test_zero_score_gives_zero(self, c):
        assert compute_weight(0.0, c) == 0.0

    @given(st.floats(min_value=0.0, max_value=0.999), probs)
    def test_bounds(self, g, c):
        assert 0.0 <= compute_weight(g, c) <= 1.0

    def test_monotone_in_score(self):
        ws = [compute_weight(g, 0.4) for g in (0.1, 0.2, 0.3, 0.39)]
        assert ws == sorted(ws)
        assert all(w < 1.0 for w in ws)

    def test_degenerate_score_rejected(self):
        with pytest.raises(DegenerateG):
            compute_weight(1.0, 0.5)
        with pytest.raises(DegenerateG):
            compute_weight(1.0 - 1e-10, 0.5)

    @pytest.mark.parametrize("c", [0.0, -0.1, 1.5])
    def test_bad_c_rejected(self, c):
        with pytest.raises(ValueError):
            compute_weight(0.3, c)

    def test_negative_score_rejected(self):
        with pytest.raises(ValueError):
            compute_weight(-0.1, 0.5)


class TestEstimateC:
    def test_constant_scorer(self):
        assert estimate_c(leaf_model(0.25), np.zeros((5, 2))) == 0.25

    def test_floor_applied(self):
        assert estimate_c(leaf_model(0.0), np.zeros((5, 2))) == C_HAT_FLOOR

    def test_empty_holdout_rejected(self):
        with pytest.raises(EmptyHoldout):
            estimate_c(leaf_model(0.4), np.zeros((0, 2)))

    def test_dilution_inverse(self):
        g, f = 0.25, 0.8
        expected = g / (f + (1.0 - f) * g)
        assert estimate_c(leaf_model(g), np.zeros((4, 2)), f) == expected

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            estimate_c(leaf_model(0.4), np.zeros((4, 2)), 0.0)


class TestPUModel:
    def test_c_hat_bounds(self):
        with pytest.raises(ValueError):
            PUModel(base=leaf_model(0.4), c_hat=0.0, mode=PUMode.CLASSIC)
        with pytest.raises(ValueError):
            PUModel(base=leaf_model(0.4), c_hat=1.5, mode=PUMode.CLASSIC)

    def test_threshold_open_interval(self):
        with pytest.raises(ValueError):
            PUModel(base=leaf_model(0.4), c_hat=0.5, mode=PUMode.CLASSIC,
                    threshold=1.0)

    def test_weighted_requires_stage2(self):
        with pytest.raises(ValueError):
            PUModel(base=leaf_model(0.4), c_hat=0.5, mode=PUMode.WEIGHTED)

    def test_labeled_probability_identity_fraction(self):
        model = PUModel(base=leaf_model(0.3), c_hat=0.5, mode=PUMode.CLASSIC)
        assert model.labeled_probability(np.zeros(2)) == 0.3

    def test_labeled_probability_dilution(self):
        model = PUModel(base=leaf_model(0.3), c_hat=0.5, mode=PUMode.CLASSIC,
                        positive_fraction=0.8)
        expected = 0.3 / (0.8 + (1.0 - 0.8) * 0.3)
        assert model.labeled_probability(np.zeros(2)) == expected
        out = model.labeled_probability(np.zeros((3, 2)))
        np.testing.assert_array_equal(out, np.full(3, expected))


class TestPredictClassic:
    def test_division_and_cap(self):
        model = PUModel(base=leaf_model(0.42), c_hat=0.6, mode=PUMode.CLASSIC)
        assert predict_classic(model, np.zeros(2)) == 0.7
        capped = dataclasses.replace(model, c_hat=0.3)
        assert predict_classic(capped, np.zeros(2)) == 1.0

    def test_scalar_in_scalar_out(self):
        model = PUModel(base=leaf_model(0.42), c_hat=0.6, mode=PUMode.CLASSIC)
        out = predict_classic(model, np.zeros(2))
        assert isinstance(out, float)
        vec = predict_classic(model, np.zeros((4, 2)))
        assert vec.shape == (4,)

    def test_requires_classic_mode(self):
        model = PUModel(base=leaf_model(0.4), c_hat=0.5, mode=PUMode.WEIGHTED,
                        stage2=leaf_model(0.4))
        with pytest.raises(ValueError):
            predict_classic(model, np.zeros(2))


class TestWeightedExpansion:
    def test_shapes_and_weights(self):
        P = np.zeros((3, 2))
        U = np.ones((4, 2))
        g_u = np.array([0.0, 0.25, 0.25, 1.0])
        X2, y2, w2 = weighted_expansion(P, U, g_u, c_hat=0.25)
        assert X2.shape == (11, 2)
        np.testing.assert_array_equal(y2, [1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0])
        np.testing.assert_array_equal(w2[:3], np.ones(3))
        assert w2[3] == 0.0 and w2[7] == 1.0  # g=0 copy pair
        assert w2[4] == 1.0 and w2[8] == 0.0  # g=c gives w=1
        assert w2[6] == 1.0 and w2[10] == 0.0  # ceiling score collapses


class TestFitting:
    def test_insufficient_positives(self):
        P, U, _, _ = pu_pools()
        with pytest.raises(InsufficientPositives):
            fit_classic(P[:9], U, params=SMALL)

    def test_too_few_unlabeled(self):
        P, U, _, _ = pu_pools()
        with pytest.raises(TooFewSamples):
            fit_classic(P, U[:9], params=SMALL)

    def test_classic_fit_properties(self):
        P, U, y, s = pu_pools()
        model = fit_classic(P, U, params=SMALL)
        assert model.mode is PUMode.CLASSIC
        assert 0.0 < model.c_hat <= 1.0
        assert 0.0 < model.positive_fraction < 1.0

    def test_classic_scores_positives_higher(self):
        X, y, s = pu_sample(3, n=600)
        model = fit_classic(X[s], X[~s], params=SMALL)
        scores = predict(model, X)
        assert scores[y].mean() > scores[~y].mean() + 0.2

    def test_fit_deterministic(self):
        P, U, _, _ = pu_pools()
        grid = np.random.default_rng(7).standard_normal((30, 2))
        a = fit_classic(P, U, params=SMALL)
        b = fit_classic(P, U, params=SMALL)
        np.testing.assert_array_equal(predict(a, grid), predict(b, grid))

    def test_fit_invariant_to_positive_order(self):
        P, U, _, _ = pu_pools()
        perm = np.random.default_rng(8).permutation(P.shape[0])
        grid = np.random.default_rng(7).standard_normal((30, 2))
        a = fit_classic(P, U, params=SMALL)
        b = fit_classic(P[perm], U, params=SMALL)
        np.testing.assert_array_equal(predict(a, grid), predict(b, grid))
        assert a.c_hat == b.c_hat

    def test_weighted_fit_dispatch(self):
        P, U, _, _ = pu_pools()
        model = fit_weighted(P, U, params=SMALL)
        assert model.mode is PUMode.WEIGHTED
        assert model.stage2 is not None
        grid = np.random.default_rng(7).standard_normal((30, 2))
        np.testing.assert_array_equal(
            predict(model, grid), model.stage2.predict_proba(grid)
        )


class TestClassify:
    def test_threshold_inclusive(self):
        model = PUModel(base=leaf_model(0.42), c_hat=0.42, mode=PUMode.CLASSIC)
        # score is exactly min(1, 0.42/0.42) = 1.0 >= 0.5
        assert classify(model, np.zeros(2)) is Classification.UNRELATED

    def test_below_threshold(self):
        model = PUModel(base=leaf_model(0.1), c_hat=0.5, mode=PUMode.CLASSIC)
        assert classify(model, np.zeros(2)) is Classification.NOT_FLAGGED

    def test_vector_gives_list(self):
        model = PUModel(base=leaf_model(0.1), c_hat=0.5, mode=PUMode.CLASSIC)
        out = classify(model, np.zeros((3, 2)))
        assert out == [Classification.NOT_FLAGGED] * 3

    def test_enum_values(self):
        assert Classification.UNRELATED.value == "Unrelated"
        assert Classification.NOT_FLAGGED.value == "NotFlagged"
        assert PUMode.CLASSIC.value == "classic"
        assert PUMode.WEIGHTED.value == "weighted"


class TestSerialization:
    def test_classic_round_trip(self):
        P, U, _, _ = pu_pools()
        model = fit_classic(P, U, params=SMALL)
        clone = PUModel.from_dict(model.to_dict())
        grid = np.random.default_rng(7).standard_normal((30, 2))
        np.testing.assert_array_equal(predict(clone, grid), predict(model, grid))
        assert clone.c_hat == model.c_hat
        assert clone.positive_fraction == model.positive_fraction

    def test_weighted_round_trip(self):
        P, U, _, _ = pu_pools()
        model = fit_weighted(P, U, params=SMALL)
        clone = PUModel.from_dict(model.to_dict())
        grid = np.random.default_rng(7).standard_normal((30, 2))
        np.testing.assert_array_equal(predict(clone, grid), predict(model, grid))

    def test_format_tag_checked(self):
        model = PUModel(base=leaf_model(0.4), c_hat=0.5, mode=PUMode.CLASSIC)
        d = model.to_dict()
        assert d["format"] == "buildtriage-pu"
        d["format"] = "nope"
        with pytest.raises(ValueError):
            PUModel.from_dict(d)
