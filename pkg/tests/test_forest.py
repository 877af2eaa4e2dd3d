"""The hand-rolled random forest: determinism, weights, and serialization."""

import numpy as np
import pytest

from buildtriage.errors import DegenerateLabels, FeatureMismatch
from buildtriage.forest import ForestParams, TreeEnsemble, backend_name, fit
from buildtriage.forest import _grow_py

try:
    from buildtriage.forest import _grow_cy
except ImportError:  # pure-python install
    _grow_cy = None


def toy_data(seed=0, n=200, p=5, flip=0.05):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(float)
    noise = rng.random(n) < flip
    y[noise] = 1.0 - y[noise]
    return X, y


SMALL = ForestParams(n_trees=20, max_depth=6, rng_seed=3)


class TestForestParams:
    def test_defaults(self):
        params = ForestParams()
        assert params.n_trees == 100
        assert params.max_depth == 12
        assert params.min_leaf_weight == 2.0
        assert params.feature_subsample is None
        assert params.rng_seed == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"max_depth": -1},
            {"min_leaf_weight": 0.0},
            {"feature_subsample": 0.0},
            {"feature_subsample": 1.5},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ForestParams(**kwargs)

    def test_k_features_default_is_sqrt(self):
        params = ForestParams()
        assert params.k_features(34) == 6
        assert params.k_features(1) == 1
        assert params.k_features(100) == 10

    def test_k_features_fraction(self):
        assert ForestParams(feature_subsample=0.5).k_features(10) == 5
        assert ForestParams(feature_subsample=1.0).k_features(7) == 7
        assert ForestParams(feature_subsample=0.01).k_features(10) == 1


class TestFit:
    def test_deterministic(self):
        X, y = toy_data()
        a = fit(X, y, params=SMALL)
        b = fit(X, y, params=SMALL)
        grid = np.random.default_rng(1).standard_normal((50, 5))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_row_order_invariance(self):
        X, y = toy_data()
        perm = np.random.default_rng(2).permutation(len(y))
        a = fit(X, y, params=SMALL)
        b = fit(X[perm], y[perm], params=SMALL)
        grid = np.random.default_rng(1).standard_normal((50, 5))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_zero_weight_equals_deletion(self):
        X, y = toy_data(n=120)
        w = np.ones(120)
        w[:20] = 0.0
        a = fit(X, y, weights=w, params=SMALL)
        b = fit(X[20:], y[20:], weights=w[20:], params=SMALL)
        grid = np.random.default_rng(1).standard_normal((50, 5))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_duplicate_row_halved_weight_invariance(self):
        X, y = toy_data(n=80)
        w = np.ones(80)
        X2 = np.vstack([X, X[:10]])
        y2 = np.concatenate([y, y[:10]])
        w2 = np.ones(90)
        w2[:10] = 0.5
        w2[80:] = 0.5
        a = fit(X, y, weights=w, params=SMALL)
        b = fit(X2, y2, weights=w2, params=SMALL)
        grid = np.random.default_rng(1).standard_normal((40, 5))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))

    def test_learns_separable_signal(self):
        X, y = toy_data(seed=5, n=400, flip=0.0)
        model = fit(X, y, params=ForestParams(n_trees=40, max_depth=8, rng_seed=1))
        Xt, yt = toy_data(seed=6, n=200, flip=0.0)
        pred = model.predict_proba(Xt) > 0.5
        assert (pred == yt.astype(bool)).mean() > 0.9

    def test_single_class_rejected(self):
        X, y = toy_data()
        with pytest.raises(DegenerateLabels):
            fit(X, np.zeros_like(y), params=SMALL)

    def test_zero_weight_class_rejected(self):
        X, y = toy_data()
        w = np.where(y == 1.0, 0.0, 1.0)
        with pytest.raises(DegenerateLabels):
            fit(X, y, weights=w, params=SMALL)

    def test_non_binary_labels_rejected(self):
        X, y = toy_data()
        y[0] = 0.5
        with pytest.raises(ValueError):
            fit(X, y, params=SMALL)

    def test_negative_weights_rejected(self):
        X, y = toy_data()
        w = np.ones(len(y))
        w[0] = -1.0
        with pytest.raises(ValueError):
            fit(X, y, weights=w, params=SMALL)

    def test_non_finite_rejected(self):
        X, y = toy_data()
        X[0, 0] = np.nan
        with pytest.raises(ValueError):
            fit(X, y, params=SMALL)


class TestPredict:
    def test_scalar_for_single_row(self):
        X, y = toy_data()
        model = fit(X, y, params=SMALL)
        out = model.predict_proba(X[0])
        assert np.isscalar(out) or out.ndim == 0

    def test_width_mismatch(self):
        X, y = toy_data()
        model = fit(X, y, params=SMALL)
        with pytest.raises(FeatureMismatch):
            model.predict_proba(X[:, :3])

    def test_probabilities_in_unit_interval(self):
        X, y = toy_data()
        model = fit(X, y, params=SMALL)
        proba = model.predict_proba(X)
        assert np.all(proba >= 0.0) and np.all(proba <= 1.0)


class TestSerialization:
    def test_round_trip(self):
        X, y = toy_data()
        model = fit(X, y, params=SMALL)
        clone = TreeEnsemble.from_dict(model.to_dict())
        np.testing.assert_array_equal(clone.predict_proba(X), model.predict_proba(X))

    def test_format_tag(self):
        X, y = toy_data()
        d = fit(X, y, params=SMALL).to_dict()
        assert d["format"] == "buildtriage-forest"
        assert d["version"] == 1

    def test_bad_format_rejected(self):
        X, y = toy_data()
        d = fit(X, y, params=SMALL).to_dict()
        d["format"] = "something-else"
        with pytest.raises(ValueError):
            TreeEnsemble.from_dict(d)

    def test_single_leaf_stub(self):
        # a one-node tree built by hand scores every row at its leaf value
        d = {
            "format": "buildtriage-forest",
            "version": 1,
            "params": {
                "n_trees": 1,
                "max_depth": 1,
                "min_leaf_weight": 1.0,
                "feature_subsample": None,
                "rng_seed": 0,
            },
            "n_features": 2,
            "trees": [
                {
                    "feature": [-1],
                    "threshold": [0.0],
                    "left": [-1],
                    "right": [-1],
                    "value": [0.42],
                }
            ],
        }
        model = TreeEnsemble.from_dict(d)
        assert model.predict_proba(np.zeros((3, 2))).tolist() == [0.42] * 3


class TestBackends:
    def test_backend_is_known(self):
        assert backend_name() in ("python", "cython")

    @pytest.mark.skipif(_grow_cy is None, reason="compiled kernel unavailable")
    def test_kernels_agree(self):
        X, y = toy_data(seed=9, n=300)
        params = ForestParams(n_trees=10, max_depth=7, rng_seed=11)
        a = fit(X, y, params=params, grow=_grow_py.grow_tree)
        b = fit(X, y, params=params, grow=_grow_cy.grow_tree)
        grid = np.random.default_rng(3).standard_normal((100, 5))
        np.testing.assert_array_equal(a.predict_proba(grid), b.predict_proba(grid))
