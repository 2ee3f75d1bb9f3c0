import numpy as np
import pytest

from mrsquant.errors import ValidationError
from mrsquant.forest import (
    ForestConfig,
    RandomForestModel,
    fit_forest,
    fit_tree,
    oob_curve,
    predict,
    slice_forest,
)


def brute_force_best_cost(X, y):
    """Enumerate every (feature, midpoint-threshold) split; return the minimal
    summed child squared deviation.  Independent of the tree implementation."""
    best = np.inf
    for j in range(X.shape[1]):
        xs = np.unique(X[:, j])
        for a, b in zip(xs[:-1], xs[1:]):
            thr = (a + b) / 2.0
            left = y[X[:, j] <= thr]
            right = y[X[:, j] > thr]
            cost = np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2)
            best = min(best, cost)
    return best


def partition_cost(X, y, feature, threshold):
    left = y[X[:, feature] <= threshold]
    right = y[X[:, feature] > threshold]
    if left.size == 0 or right.size == 0:
        return np.inf
    return np.sum((left - left.mean()) ** 2) + np.sum((right - right.mean()) ** 2)


def single_tree_config(**kwargs):
    defaults = dict(n_trees=1, max_features=1, min_leaf_size=1, max_depth=None,
                    rng_seed=0, bootstrap="identity")
    defaults.update(kwargs)
    return ForestConfig(**defaults)


class TestFitTree:
    def test_constant_targets_single_leaf(self):
        X = np.arange(8, dtype=float)[:, None]
        y = np.full(8, 3.5)
        tree = fit_tree(X, y, np.arange(8), single_tree_config(), np.random.default_rng(0))
        assert tree.n_nodes == 1
        assert tree.value[0] == 3.5

    def test_four_point_split(self):
        # brute force over the 3 candidate midpoints shows 2.5 minimizes child variance
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        tree = fit_tree(X, y, np.arange(4), single_tree_config(), np.random.default_rng(0))
        assert 2.0 < tree.threshold[0] < 3.0
        leaves = sorted(tree.value[tree.feature == -1])
        assert leaves == [0.0, 10.0]
        assert predict_single(tree, [1.5]) == 0.0

    def test_min_leaf_at_or_above_n_gives_single_leaf(self):
        X = np.arange(6, dtype=float)[:, None]
        y = np.arange(6, dtype=float)
        config = single_tree_config(min_leaf_size=6)
        tree = fit_tree(X, y, np.arange(6), config, np.random.default_rng(0))
        assert tree.n_nodes == 1
        assert tree.value[0] == pytest.approx(y.mean())

    def test_max_depth_limits_growth(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(64, 3))
        y = rng.normal(size=64)
        config = single_tree_config(max_features=3, max_depth=2)
        tree = fit_tree(X, y, np.arange(64), config, np.random.default_rng(2))
        assert tree.n_nodes <= 7  # depth-2 tree: at most 1 + 2 + 4 nodes

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValidationError):
            fit_tree(np.zeros((0, 2)), np.zeros(0), np.arange(0), single_tree_config(),
                     np.random.default_rng(0))
        with pytest.raises(ValidationError):
            fit_tree(np.zeros((4, 2)), np.zeros(4), np.array([]), single_tree_config(),
                     np.random.default_rng(0))

    @pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
    def test_root_split_matches_brute_force_1d(self, n):
        # acceptance: exhaustive enumeration on every <=6-sample 1-D set
        for seed in range(40):
            rng = np.random.default_rng(1000 * n + seed)
            X = np.round(rng.uniform(0, 10, size=(n, 1)), 1)
            y = np.round(rng.uniform(0, 10, size=n), 1)
            tree = fit_tree(X, y, np.arange(n), single_tree_config(), np.random.default_rng(seed))
            best = brute_force_best_cost(X, y)
            if tree.feature[0] == -1:
                assert not np.isfinite(best) or np.ptp(y) == 0 or np.ptp(X) == 0
            else:
                got = partition_cost(X, y, tree.feature[0], tree.threshold[0])
                assert got <= best + 1e-9

    def test_root_split_matches_brute_force_2d(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            X = rng.uniform(0, 5, size=(6, 2))
            y = rng.uniform(0, 5, size=6)
            config = single_tree_config(max_features=2)
            tree = fit_tree(X, y, np.arange(6), config, np.random.default_rng(seed))
            best = brute_force_best_cost(X, y)
            got = partition_cost(X, y, tree.feature[0], tree.threshold[0])
            assert got <= best + 1e-9


def predict_single(tree, x):
    return float(tree.predict_batch(np.asarray(x, dtype=float)[None, :])[0])


class TestFitForest:
    def _data(self, n=60, d=5, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d))
        y = X[:, 0] * 2.0 + np.sin(X[:, 1]) + 0.1 * rng.normal(size=n)
        return X, y

    def test_memorization_with_identity_bootstrap(self):
        X, y = self._data()
        config = ForestConfig(n_trees=1, max_features=5, min_leaf_size=1,
                              rng_seed=0, bootstrap="identity")
        model = fit_forest(X, y, config)
        pred = model.predict_matrix(X)[:, 0]
        assert np.array_equal(pred, y)

    def test_deterministic_rerun(self):
        X, y = self._data()
        config = ForestConfig(n_trees=5, max_features=3, min_leaf_size=2, rng_seed=42)
        a = fit_forest(X, y, config)
        b = fit_forest(X, y, config)
        for ta, tb in zip(a.forests[0], b.forests[0]):
            assert ta.equals(tb)

    def test_threaded_equals_serial(self):
        X, y = self._data(n=80)
        config = ForestConfig(n_trees=8, max_features=3, min_leaf_size=2, rng_seed=7)
        serial = fit_forest(X, y, config, threads=1)
        threaded = fit_forest(X, y, config, threads=4)
        for ta, tb in zip(serial.forests[0], threaded.forests[0]):
            assert ta.equals(tb)
        assert np.array_equal(serial.oob_curves[0], threaded.oob_curves[0])

    def test_constant_target(self):
        X, _ = self._data()
        y = np.full(X.shape[0], 2.25)
        config = ForestConfig(n_trees=4, max_features=2, min_leaf_size=2, rng_seed=1)
        model = fit_forest(X, y, config)
        assert np.all(model.predict_matrix(X)[:, 0] == 2.25)
        assert model.oob_error("target_0") == 0.0

    def test_predictions_within_training_range(self):
        X, y = self._data(n=100)
        config = ForestConfig(n_trees=10, max_features=3, min_leaf_size=5, rng_seed=3)
        model = fit_forest(X, y, config)
        probe = np.random.default_rng(9).normal(scale=5.0, size=(50, X.shape[1]))
        pred = model.predict_matrix(probe)[:, 0]
        assert np.all(pred >= y.min()) and np.all(pred <= y.max())

    def test_permutation_invariance(self):
        X, y = self._data(n=40)
        config = ForestConfig(n_trees=6, max_features=3, min_leaf_size=2, rng_seed=11)
        model_a = fit_forest(X, y, config)
        perm = np.random.default_rng(5).permutation(40)
        model_b = fit_forest(X[perm], y[perm], config)
        probe = np.random.default_rng(6).normal(size=(30, X.shape[1]))
        assert np.array_equal(model_a.predict_matrix(probe), model_b.predict_matrix(probe))

    def test_monotone_feature_transform_invariance(self):
        # thresholds are midpoints of node sample values, so routing is purely
        # ordinal for points whose values appear in the node; identity
        # bootstrap guarantees that for every training row
        X, y = self._data(n=50)
        config = ForestConfig(n_trees=5, max_features=3, min_leaf_size=3,
                              rng_seed=13, bootstrap="identity")
        base = fit_forest(X, y, config).predict_matrix(X)
        Xt = X.copy()
        Xt[:, 2] = np.exp(Xt[:, 2])  # strictly monotone on one feature, train and test alike
        transformed = fit_forest(Xt, y, config).predict_matrix(Xt)
        assert np.allclose(base, transformed, atol=1e-12)

    def test_tree_structure_invariant_under_monotone_transform(self):
        # with bootstrap sampling the grown trees still have identical shape
        # and leaf values; only threshold coordinates move
        X, y = self._data(n=50)
        config = ForestConfig(n_trees=5, max_features=3, min_leaf_size=2, rng_seed=13)
        a = fit_forest(X, y, config)
        Xt = X.copy()
        Xt[:, 2] = np.exp(Xt[:, 2])
        b = fit_forest(Xt, y, config)
        for ta, tb in zip(a.forests[0], b.forests[0]):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.left, tb.left)
            assert np.array_equal(ta.value, tb.value)

    def test_ensemble_variance_shrinks_with_more_trees(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(150, 6))
        y = X @ rng.normal(size=6) + 0.3 * rng.normal(size=150)
        probe = rng.normal(size=(10, 6))
        preds_1, preds_64 = [], []
        for seed in range(20):
            config = ForestConfig(n_trees=64, max_features=3, min_leaf_size=5, rng_seed=seed)
            model = fit_forest(X, y, config)
            preds_64.append(model.predict_matrix(probe)[:, 0])
            preds_1.append(slice_forest(model, 1).predict_matrix(probe)[:, 0])
        var_1 = np.var(np.asarray(preds_1), axis=0).mean()
        var_64 = np.var(np.asarray(preds_64), axis=0).mean()
        assert var_64 < var_1

    def test_target_independence(self):
        X, y0 = self._data(n=70, seed=2)
        y1 = np.cos(X[:, 3]) + X[:, 4]
        config = ForestConfig(n_trees=4, max_features=3, min_leaf_size=3, rng_seed=21)
        both = fit_forest(X, np.column_stack([y0, y1]), config, target_names=["a", "b"])
        only_b = RandomForestModel(
            config, ["b"], [both.forests[1]], [both.inbag_counts[1]], [both.oob_curves[1]]
        )
        probe = np.random.default_rng(8).normal(size=(20, X.shape[1]))
        assert np.array_equal(both.predict_matrix(probe)[:, 1], only_b.predict_matrix(probe)[:, 0])

    def test_slice_matches_direct_training(self):
        X, y = self._data(n=60)
        big = fit_forest(X, y, ForestConfig(n_trees=8, max_features=3, min_leaf_size=2, rng_seed=4))
        small = fit_forest(X, y, ForestConfig(n_trees=3, max_features=3, min_leaf_size=2, rng_seed=4))
        sliced = slice_forest(big, 3)
        for ta, tb in zip(sliced.forests[0], small.forests[0]):
            assert ta.equals(tb)
        assert np.array_equal(sliced.oob_curves[0], small.oob_curves[0])

    def test_predict_map(self):
        X, y = self._data(n=30)
        config = ForestConfig(n_trees=2, max_features=2, min_leaf_size=3, rng_seed=5)
        model = fit_forest(X, y, config, target_names=["NAA/Cr"])
        out = predict(model, X[0])
        assert set(out) == {"NAA/Cr"}
        assert out["NAA/Cr"] == pytest.approx(model.predict_matrix(X[:1])[0, 0])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            fit_forest(np.zeros((4, 2)), np.zeros(5),
                       ForestConfig(n_trees=1, max_features=1, rng_seed=0))

    def test_predict_feature_length_mismatch_rejected(self):
        X, y = self._data(n=30)
        config = ForestConfig(n_trees=2, max_features=3, min_leaf_size=3, rng_seed=5)
        model = fit_forest(X, y, config)
        with pytest.raises(ValidationError):
            predict(model, X[0][:2])

    def test_max_features_above_dimension_rejected(self):
        with pytest.raises(ValidationError):
            fit_forest(np.zeros((4, 2)), np.zeros(4),
                       ForestConfig(n_trees=1, max_features=3, rng_seed=0))


class TestOob:
    def test_identity_bootstrap_has_no_oob(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, 3))
        y = rng.normal(size=20)
        config = ForestConfig(n_trees=3, max_features=2, min_leaf_size=2,
                              rng_seed=0, bootstrap="identity")
        model = fit_forest(X, y, config)
        assert np.all(np.isnan(model.oob_curves[0]))

    def test_oob_curve_counts_only_excluded_trees(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 3))
        y = X[:, 0]
        config = ForestConfig(n_trees=10, max_features=2, min_leaf_size=2, rng_seed=9)
        model = fit_forest(X, y, config)
        curve = model.oob_curves[0]
        assert curve.size == 10
        assert np.all(curve[~np.isnan(curve)] >= 0)

    def test_exact_predictions_count_as_zero_error_at_zero_truth(self):
        class StubTree:
            def predict_batch(self, X):
                return np.zeros(X.shape[0])

        X = np.zeros((4, 1))
        y = np.zeros(4)
        inbag = np.zeros((1, 4), dtype=int)
        curve = oob_curve([StubTree()], inbag, X, y)
        assert curve[0] == 0.0
