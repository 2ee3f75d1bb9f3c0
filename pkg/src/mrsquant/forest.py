"""Random forest regression built from scratch: bootstrap-aggregated CART trees
with per-node feature subsampling and out-of-bag error tracking.

One independent forest is grown per target.  Every tree draws its bootstrap
sample and split features from an RNG stream seeded by (rng_seed, target
index, tree index), and samples are re-indexed against a canonical sort
order before any draw, so a trained model is a pure function of the
(unordered) training set and the configuration regardless of row order or
thread scheduling.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int
    max_features: int
    min_leaf_size: int = 5
    max_depth: int | None = None
    rng_seed: int = 0
    bootstrap: str = "sample"  # "identity" trains every tree on all samples once (test hook)

    def __post_init__(self):
        for name in ("n_trees", "max_features", "min_leaf_size"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.max_depth is not None and (int(self.max_depth) != self.max_depth or self.max_depth < 1):
            raise ValidationError(f"max_depth must be a positive integer or None, got {self.max_depth}")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise ValidationError(f"rng_seed must be a non-negative integer, got {self.rng_seed}")
        if self.bootstrap not in ("sample", "identity"):
            raise ValidationError(f"bootstrap must be 'sample' or 'identity', got {self.bootstrap!r}")


class RegressionTree:
    """CART tree as flat arrays; feature[i] == -1 marks node i as a leaf."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=np.float64)

    @property
    def n_nodes(self):
        return self.feature.size

    def predict_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        cur = np.zeros(X.shape[0], dtype=np.intp)
        while True:
            f = self.feature[cur]
            internal = f >= 0
            if not internal.any():
                return self.value[cur]
            rows = np.nonzero(internal)[0]
            go_left = X[rows, f[rows]] <= self.threshold[cur[rows]]
            cur[rows] = np.where(go_left, self.left[cur[rows]], self.right[cur[rows]])

    def equals(self, other):
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.value, other.value)
        )


def _best_split(XnT, yn):
    """Exhaustive greedy split over the node's feature subset.

    XnT is (n_features_tried, n_node_samples), row-contiguous so the
    per-feature sorts stay cache-friendly.  Candidate thresholds are
    midpoints between consecutive distinct sorted values; the winner
    minimizes the summed child squared deviation, evaluated through the
    equivalent maximization of S_L^2/n_L + S_R^2/n_R (one prefix sum).
    Returns (row, threshold) or None when no feature admits a split.
    """
    m = yn.size
    if m < 2:
        return None
    order = XnT.argsort(axis=1)
    rows = np.arange(XnT.shape[0])[:, None]
    sv = XnT[rows, order]
    cs = yn[order].cumsum(axis=1)
    csl = cs[:, :-1]
    total = cs[:, -1:]
    counts = np.arange(1, m, dtype=np.float64)
    score = csl * csl
    score *= 1.0 / counts
    rem = total - csl
    rem *= rem
    rem *= 1.0 / counts[::-1]
    score += rem
    score[sv[:, 1:] <= sv[:, :-1]] = -np.inf
    flat = int(score.argmax())
    row, pos = divmod(flat, m - 1)
    if score[row, pos] == -np.inf:
        return None
    a = sv[row, pos]
    b = sv[row, pos + 1]
    thr = a + (b - a) / 2.0
    if thr >= b:  # float midpoint may round up; keep a <= thr < b so routing matches the fit
        thr = a
    return row, thr


def fit_tree(X, y, sample_indices, config, rng):
    """Grow one CART tree on the given bootstrap multiset of row indices."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size or y.size == 0:
        raise ValidationError("X must be (n, d) and y (n,) with n >= 1")
    idx0 = np.asarray(sample_indices, dtype=np.intp)
    if idx0.size == 0:
        raise ValidationError("sample_indices must be nonempty")
    if config.max_features > X.shape[1]:
        raise ValidationError(
            f"max_features={config.max_features} exceeds feature dimension {X.shape[1]}"
        )
    return _grow_tree(np.ascontiguousarray(X.T), y, idx0, config, rng)


def _grow_tree(XT, y, idx0, config, rng):
    # XT is the transposed feature matrix (d, n), row-contiguous
    d = XT.shape[0]
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    value = [0.0]
    stack = [(0, idx0, 0)]
    while stack:
        node_id, idx, depth = stack.pop()
        yn = y[idx]
        y_lo = yn.min()
        y_hi = yn.max()
        can_split = (
            idx.size >= 2 * config.min_leaf_size
            and (config.max_depth is None or depth < config.max_depth)
            and y_hi > y_lo
        )
        split = None
        if can_split:
            feats = rng.choice(d, size=config.max_features, replace=False)
            XnT = XT[feats[:, None], idx[None, :]]
            split = _best_split(XnT, yn)
        if split is None:
            # a constant node keeps the exact constant, dodging mean() rounding
            value[node_id] = float(y_lo) if y_hi == y_lo else float(yn.mean())
            continue
        row, thr = split
        mask = XnT[row] <= thr
        left_id = len(feature)
        right_id = left_id + 1
        for arrs in (feature, left, right):
            arrs.extend((-1, -1))
        threshold.extend((0.0, 0.0))
        value.extend((0.0, 0.0))
        feature[node_id] = int(feats[row])
        threshold[node_id] = float(thr)
        left[node_id] = left_id
        right[node_id] = right_id
        stack.append((right_id, idx[~mask], depth + 1))
        stack.append((left_id, idx[mask], depth + 1))
    return RegressionTree(feature, threshold, left, right, value)


def _canonical_order(X, Y):
    # Primary key is feature column 0, then the remaining columns, then targets;
    # lexsort treats its last key as primary, hence the reversal.
    keys = tuple(Y[:, t] for t in range(Y.shape[1] - 1, -1, -1))
    keys = keys + tuple(X[:, j] for j in range(X.shape[1] - 1, -1, -1))
    return np.lexsort(keys)


@dataclass
class RandomForestModel:
    """Per-target tree ensembles plus everything needed to reuse them."""

    config: ForestConfig
    target_names: list
    forests: list  # list (per target) of lists of RegressionTree
    inbag_counts: list  # per target: (n_trees, n_train) bootstrap multiplicities
    oob_curves: list  # per target: ndarray, mean relative OOB error after m trees
    feature_meta: object = None
    dataset_fingerprint: str | None = None

    def __post_init__(self):
        if not self.target_names:
            raise ValidationError("target_names must be nonempty")
        for trees in self.forests:
            if len(trees) != self.config.n_trees:
                raise ValidationError("each ensemble must have exactly config.n_trees trees")

    @property
    def n_features(self):
        """Highest feature index any tree splits on, plus one; None for all-leaf forests."""
        highest = -1
        for trees in self.forests:
            for tree in trees:
                if tree.feature.size:
                    highest = max(highest, int(tree.feature.max()))
        return None if highest < 0 else highest + 1

    def oob_error(self, target):
        curve = self.oob_curves[self.target_names.index(target)]
        return float(curve[-1]) if curve is not None and len(curve) else float("nan")

    def predict_matrix(self, X):
        """(n_samples, n_targets) ensemble means.

        When every tree agrees on a sample the common value is returned
        exactly, so constant forests reproduce constants bit-for-bit.
        """
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], len(self.target_names)))
        for t, trees in enumerate(self.forests):
            acc = np.zeros(X.shape[0])
            lo = np.full(X.shape[0], np.inf)
            hi = np.full(X.shape[0], -np.inf)
            for tree in trees:
                p = tree.predict_batch(X)
                acc += p
                np.minimum(lo, p, out=lo)
                np.maximum(hi, p, out=hi)
            out[:, t] = np.where(lo == hi, lo, acc / len(trees))
        return out


def predict(model, x):
    """Map of target name to ensemble prediction for a single feature vector."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("predict expects a single 1-D feature vector")
    meta = model.feature_meta
    if meta is not None and x.size != meta.grid.size:
        raise ValidationError(
            f"feature vector has {x.size} entries, model expects {meta.grid.size}"
        )
    needed = model.n_features
    if needed is not None and x.size < needed:
        raise ValidationError(f"feature vector has {x.size} entries, trees use up to {needed}")
    row = model.predict_matrix(x[None, :])[0]
    return {name: float(v) for name, v in zip(model.target_names, row)}


def oob_curve(trees, inbag_counts, X, y):
    """Mean |pred - y| / |y| over OOB samples, after each prefix of the ensemble.

    Samples never left out of bag are skipped; exact predictions count as
    zero error even at y == 0.
    """
    n = y.size
    sum_pred = np.zeros(n)
    cnt = np.zeros(n, dtype=np.int64)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    curve = np.empty(len(trees))
    for m, (tree, inbag) in enumerate(zip(trees, inbag_counts)):
        oob = inbag == 0
        if oob.any():
            p = tree.predict_batch(X[oob])
            sum_pred[oob] += p
            cnt[oob] += 1
            lo[oob] = np.minimum(lo[oob], p)
            hi[oob] = np.maximum(hi[oob], p)
        covered = cnt > 0
        if not covered.any():
            curve[m] = np.nan
            continue
        pred = np.where(
            lo[covered] == hi[covered], lo[covered], sum_pred[covered] / cnt[covered]
        )
        truth = y[covered]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.abs(pred - truth) / np.abs(truth)
        rel = np.where(pred == truth, 0.0, rel)
        curve[m] = float(np.mean(rel))
    return curve


def _fit_one_tree(XcT, yc, config, target_index, tree_index, n):
    rng = np.random.default_rng([config.rng_seed, target_index, tree_index])
    if config.bootstrap == "identity":
        boot = np.arange(n)
    else:
        boot = rng.integers(0, n, size=n)
    tree = _grow_tree(XcT, yc, boot, config, rng)
    return tree, np.bincount(boot, minlength=n)


def fit_forest(X, Y, config, target_names=None, threads=1):
    """Train one forest per target column of Y; deterministic for a fixed config."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValidationError(f"X rows ({X.shape}) must match Y rows ({Y.shape})")
    n, d = X.shape
    if n < 2:
        raise ValidationError("need at least 2 training samples")
    if config.max_features > d:
        raise ValidationError(f"max_features={config.max_features} exceeds feature dimension {d}")
    if target_names is None:
        target_names = [f"target_{t}" for t in range(Y.shape[1])]
    if len(target_names) != Y.shape[1]:
        raise ValidationError("target_names length must match Y columns")

    canon = _canonical_order(X, Y)
    Xc = np.ascontiguousarray(X[canon])
    XcT = np.ascontiguousarray(Xc.T)
    Yc = Y[canon]

    forests = []
    inbag_all = []
    curves = []
    jobs = [(t, i) for t in range(Y.shape[1]) for i in range(config.n_trees)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda ti: _fit_one_tree(XcT, Yc[:, ti[0]], config, ti[0], ti[1], n), jobs)
            )
    else:
        results = [_fit_one_tree(XcT, Yc[:, t], config, t, i, n) for t, i in jobs]
    for t in range(Y.shape[1]):
        chunk = results[t * config.n_trees : (t + 1) * config.n_trees]
        trees = [tree for tree, _ in chunk]
        inbag = np.stack([ib for _, ib in chunk])
        forests.append(trees)
        inbag_all.append(inbag)
        curves.append(oob_curve(trees, inbag, Xc, Yc[:, t]))
    return RandomForestModel(config, list(target_names), forests, inbag_all, curves)


def slice_forest(model, n_trees):
    """The model that training with the first n_trees would have produced.

    Valid because tree i of target t depends only on (seed, t, i); verified
    by the test suite against a direct smaller training run.
    """
    if not 1 <= n_trees <= model.config.n_trees:
        raise ValidationError(f"n_trees must be in [1, {model.config.n_trees}], got {n_trees}")
    return RandomForestModel(
        replace(model.config, n_trees=n_trees),
        list(model.target_names),
        [trees[:n_trees] for trees in model.forests],
        None if model.inbag_counts is None else [ib[:n_trees] for ib in model.inbag_counts],
        [None if c is None else c[:n_trees] for c in model.oob_curves],
        feature_meta=model.feature_meta,
        dataset_fingerprint=model.dataset_fingerprint,
    )
