"""Classifiers, metrics, and six-fold cross-participant validation.

All four learners are self-contained and deterministic given (data, seed):
k-nearest neighbors, bagged CART random forest, a linear SVM trained by
subgradient descent on the regularized hinge loss, and histogram gradient
boosting with leaf-wise tree growth. Metrics are support-weighted over the
two classes, so weighted recall always equals accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .features import (
    FeatureMatrix,
    FeatureMode,
    anova_f_scores,
    build_features,
    default_select_k,
    select_k_best,
    standardize,
)
from .model import EpochSet

__all__ = [
    "ClassifierSpec",
    "Metrics",
    "Fold",
    "FoldPlan",
    "fit",
    "predict",
    "predict_score",
    "evaluate",
    "make_fold_plan",
    "cross_validate",
    "CrossValidation",
    "FoldResult",
]

KINDS = ("knn", "random_forest", "linear_svm", "boosted_trees")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "knn"
    seed: int = 0
    knn_k: int = 5
    rf_trees: int = 100
    rf_min_leaf: int = 1
    rf_bootstrap: bool = True
    svm_c: float = 1.0
    svm_epochs: int = 200
    gbdt_rounds: int = 100
    gbdt_learning_rate: float = 0.1
    gbdt_max_leaves: int = 31
    gbdt_bins: int = 64

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"classifier kind must be one of {KINDS}, got {self.kind!r}")
        positive = {
            "knn_k": self.knn_k,
            "rf_trees": self.rf_trees,
            "rf_min_leaf": self.rf_min_leaf,
            "svm_c": self.svm_c,
            "svm_epochs": self.svm_epochs,
            "gbdt_rounds": self.gbdt_rounds,
            "gbdt_learning_rate": self.gbdt_learning_rate,
            "gbdt_max_leaves": self.gbdt_max_leaves,
            "gbdt_bins": self.gbdt_bins,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def __post_init__(self):
        for name in ("accuracy", "precision", "recall", "f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {v}")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _validate_training(x: np.ndarray, y: np.ndarray):
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training matrix must be nonempty and 2-D")
    if not np.all(np.isfinite(x)):
        raise ValueError("training matrix contains NaN or Inf")
    if np.unique(y).size < 2:
        raise ValueError("training labels contain a single class")


# ---------------------------------------------------------------------------
# k-nearest neighbors


@dataclass(frozen=True, eq=False)
class KnnModel:
    x: np.ndarray
    y: np.ndarray
    k: int

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        x = _check_columns(x, self.n_features)
        # Squared distances via the expansion trick; ties resolved by the
        # stable sort, i.e. by smaller training-row index.
        d2 = (
            (x**2).sum(axis=1)[:, None]
            + (self.x**2).sum(axis=1)[None, :]
            - 2.0 * x @ self.x.T
        )
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y[order].mean(axis=1)


# ---------------------------------------------------------------------------
# CART forest


@dataclass(eq=False)
class _Tree:
    feature: np.ndarray  # -1 for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            f = self.feature[node[active]]
            thr = self.threshold[node[active]]
            go_left = x[active, f] <= thr
            nxt = np.where(go_left, self.left[node[active]], self.right[node[active]])
            node[active] = nxt
            active = self.feature[node] >= 0
        return self.value[node]


def _best_gini_split(x: np.ndarray, y: np.ndarray, features: np.ndarray, min_leaf: int):
    """(feature, threshold, weighted child impurity) or None."""
    n = y.size
    best = None
    for f in features:
        v = x[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = y[order]
        ones = np.cumsum(ys)
        total_ones = ones[-1]
        i = np.arange(1, n)  # left side size
        valid = vs[1:] > vs[:-1]
        if min_leaf > 1:
            valid &= (i >= min_leaf) & (n - i >= min_leaf)
        if not valid.any():
            continue
        left_ones = ones[:-1]
        right_ones = total_ones - left_ones
        left_n = i.astype(float)
        right_n = (n - i).astype(float)
        gini_l = 1.0 - (left_ones / left_n) ** 2 - (1 - left_ones / left_n) ** 2
        gini_r = 1.0 - (right_ones / right_n) ** 2 - (1 - right_ones / right_n) ** 2
        cost = left_n * gini_l + right_n * gini_r
        cost[~valid] = np.inf
        j = int(np.argmin(cost))
        if best is None or cost[j] < best[2]:
            best = (int(f), 0.5 * (vs[j] + vs[j + 1]), float(cost[j]))
    return best


def _grow_cart(x, y, rng, max_features: int, min_leaf: int) -> _Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def build(rows: np.ndarray) -> int:
        idx = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[rows].mean()))
        ys = y[rows]
        if ys.size < 2 * min_leaf or np.all(ys == ys[0]):
            return idx
        cand = rng.choice(x.shape[1], size=max_features, replace=False)
        split = _best_gini_split(x[rows], ys, np.sort(cand), min_leaf)
        if split is None:
            return idx
        f, thr, _ = split
        go_left = x[rows, f] <= thr
        if not go_left.any() or go_left.all():
            return idx
        feature[idx] = f
        threshold[idx] = thr
        left[idx] = build(rows[go_left])
        right[idx] = build(rows[~go_left])
        return idx

    build(np.arange(x.shape[0]))
    return _Tree(
        feature=np.asarray(feature),
        threshold=np.asarray(threshold),
        left=np.asarray(left),
        right=np.asarray(right),
        value=np.asarray(value),
    )


@dataclass(eq=False)
class ForestModel:
    trees: list[_Tree]
    n_features: int

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        x = _check_columns(x, self.n_features)
        votes = np.zeros(x.shape[0])
        for t in self.trees:
            votes += t.predict(x)
        return votes / len(self.trees)


def _fit_forest(spec: ClassifierSpec, x: np.ndarray, y: np.ndarray) -> ForestModel:
    n, n_features = x.shape
    max_features = max(1, int(math.sqrt(n_features)))
    root = np.random.default_rng(spec.seed)
    trees = []
    for _ in range(spec.rf_trees):
        rng = np.random.default_rng(root.integers(0, 2**63 - 1))
        rows = rng.integers(0, n, size=n) if spec.rf_bootstrap else np.arange(n)
        trees.append(_grow_cart(x[rows], y[rows], rng, max_features, spec.rf_min_leaf))
    return ForestModel(trees=trees, n_features=n_features)


# ---------------------------------------------------------------------------
# Linear SVM (subgradient descent on L2-regularized hinge loss)


@dataclass(frozen=True, eq=False)
class SvmModel:
    w: np.ndarray
    b: float

    @property
    def n_features(self) -> int:
        return self.w.size

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        x = _check_columns(x, self.n_features)
        return _sigmoid(x @ self.w + self.b)


def _fit_svm(spec: ClassifierSpec, x: np.ndarray, y: np.ndarray) -> SvmModel:
    n, n_features = x.shape
    s = np.where(y == 1, 1.0, -1.0)
    # Bias handled as a weight on an appended constant feature; the 1/(lam*t)
    # schedule then applies uniformly (Pegasos-style, lam = 1/(C*n)).
    xa = np.hstack([x, np.ones((n, 1))])
    lam = 1.0 / (spec.svm_c * n)
    rng = np.random.default_rng(spec.seed)
    w = np.zeros(n_features + 1)
    t = 0
    for _ in range(spec.svm_epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * s[i] * xa[i]
    return SvmModel(w=w[:-1], b=float(w[-1]))


# ---------------------------------------------------------------------------
# Histogram gradient boosting with leaf-wise growth


@dataclass(eq=False)
class _BoostTree:
    feature: np.ndarray
    split_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_binned(self, binned: np.ndarray) -> np.ndarray:
        node = np.zeros(binned.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            f = self.feature[node[active]]
            sb = self.split_bin[node[active]]
            go_left = binned[active, f] <= sb
            node[active] = np.where(go_left, self.left[node[active]], self.right[node[active]])
            active = self.feature[node] >= 0
        return self.value[node]


_GBDT_REG = 0.0  # no L2 on leaf weights; per-row hessians are floored instead,
# which keeps leaf values finite and makes training exactly invariant to
# duplicating every row


def _leaf_best_split(binned, g, h, rows, n_bins):
    """Best (gain, feature, bin, left_rows, right_rows) for one leaf."""
    gt, ht = g[rows].sum(), h[rows].sum()
    parent = gt * gt / (ht + _GBDT_REG)
    sub = binned[rows]
    n_features = sub.shape[1]
    flat = (sub + np.arange(n_features)[None, :] * n_bins).ravel()
    hist_g = np.bincount(
        flat, weights=np.repeat(g[rows], n_features), minlength=n_features * n_bins
    ).reshape(n_features, n_bins)
    hist_h = np.bincount(
        flat, weights=np.repeat(h[rows], n_features), minlength=n_features * n_bins
    ).reshape(n_features, n_bins)
    gl = np.cumsum(hist_g, axis=1)[:, :-1]
    hl = np.cumsum(hist_h, axis=1)[:, :-1]
    gr = gt - gl
    hr = ht - hl
    valid = (hl > 0) & (hr > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(
            valid,
            gl**2 / (hl + _GBDT_REG) + gr**2 / (hr + _GBDT_REG) - parent,
            -np.inf,
        )
    j = int(np.argmax(gain))
    f, b = divmod(j, n_bins - 1)
    if not np.isfinite(gain.flat[j]) or gain.flat[j] <= 1e-12:
        return None
    go_left = sub[:, f] <= b
    return float(gain.flat[j]), int(f), int(b), rows[go_left], rows[~go_left]


def _grow_boost_tree(binned, g, h, n_bins, max_leaves) -> _BoostTree:
    feature, split_bin, left, right, value = [], [], [], [], []

    def new_node(rows) -> int:
        idx = len(feature)
        feature.append(-1)
        split_bin.append(0)
        left.append(-1)
        right.append(-1)
        value.append(-g[rows].sum() / (h[rows].sum() + _GBDT_REG))
        return idx

    root_rows = np.arange(binned.shape[0])
    root = new_node(root_rows)
    # Leaf-wise growth: always split the open leaf with the largest gain.
    open_leaves = {root: root_rows}
    n_leaves = 1
    while n_leaves < max_leaves and open_leaves:
        best = None
        for node_idx, rows in open_leaves.items():
            if rows.size < 2:
                continue
            split = _leaf_best_split(binned, g, h, rows, n_bins)
            if split is not None and (best is None or split[0] > best[1][0]):
                best = (node_idx, split)
        if best is None:
            break
        node_idx, (gain, f, b, rows_l, rows_r) = best
        del open_leaves[node_idx]
        feature[node_idx] = f
        split_bin[node_idx] = b
        li = new_node(rows_l)
        ri = new_node(rows_r)
        left[node_idx] = li
        right[node_idx] = ri
        open_leaves[li] = rows_l
        open_leaves[ri] = rows_r
        n_leaves += 1
    return _BoostTree(
        feature=np.asarray(feature),
        split_bin=np.asarray(split_bin),
        left=np.asarray(left),
        right=np.asarray(right),
        value=np.asarray(value),
    )


@dataclass(eq=False)
class BoostModel:
    bin_edges: list[np.ndarray]
    trees: list[_BoostTree]
    base_score: float
    learning_rate: float

    @property
    def n_features(self) -> int:
        return len(self.bin_edges)

    def _bin(self, x: np.ndarray) -> np.ndarray:
        binned = np.empty(x.shape, dtype=np.int64)
        for f, edges in enumerate(self.bin_edges):
            binned[:, f] = np.searchsorted(edges, x[:, f], side="right")
        return binned

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        x = _check_columns(x, self.n_features)
        binned = self._bin(x)
        score = np.full(x.shape[0], self.base_score)
        for t in self.trees:
            score += self.learning_rate * t.predict_binned(binned)
        return score

    def predict_score(self, x: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_function(x))


def _fit_boost(spec: ClassifierSpec, x: np.ndarray, y: np.ndarray) -> BoostModel:
    n, n_features = x.shape
    n_bins = spec.gbdt_bins
    edges = []
    for f in range(n_features):
        # inverted_cdf quantiles are pure order statistics, so the binning is
        # invariant to duplicating every training row
        qs = np.quantile(
            x[:, f], np.linspace(0, 1, n_bins + 1)[1:-1], method="inverted_cdf"
        )
        edges.append(np.unique(qs))
    model = BoostModel(
        bin_edges=edges,
        trees=[],
        base_score=float(np.log((y.mean() + 1e-12) / (1 - y.mean() + 1e-12))),
        learning_rate=spec.gbdt_learning_rate,
    )
    binned = model._bin(x)
    score = np.full(n, model.base_score)
    for _ in range(spec.gbdt_rounds):
        p = _sigmoid(score)
        g = p - y
        h = np.maximum(p * (1 - p), 1e-12)
        tree = _grow_boost_tree(binned, g, h, n_bins, spec.gbdt_max_leaves)
        model.trees.append(tree)
        score += spec.gbdt_learning_rate * tree.predict_binned(binned)
    return model


# ---------------------------------------------------------------------------
# Shared API


def _check_columns(x: np.ndarray, expected: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != expected:
        raise ValueError(f"expected {expected} feature columns, got {x.shape[1]}")
    return x


def fit(spec: ClassifierSpec, x, y):
    """Train a classifier; deterministic given (spec, x, y, spec.seed)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    _validate_training(x, y)
    if spec.kind == "knn":
        if spec.knn_k > x.shape[0]:
            raise ValueError(f"knn_k={spec.knn_k} exceeds {x.shape[0]} training rows")
        return KnnModel(x=x.copy(), y=y.copy(), k=spec.knn_k)
    if spec.kind == "random_forest":
        return _fit_forest(spec, x, y)
    if spec.kind == "linear_svm":
        return _fit_svm(spec, x, y)
    return _fit_boost(spec, x, y)


def predict_score(model, x) -> np.ndarray:
    """Class-1 scores in [0, 1]."""
    return model.predict_score(np.asarray(x, dtype=float))


def predict(model, x) -> np.ndarray:
    """Hard labels from thresholding the score at 0.5."""
    return (predict_score(model, x) >= 0.5).astype(int)


def evaluate(y_true, y_pred) -> Metrics:
    """Support-weighted precision/recall/F1 plus accuracy.

    Per-class values with a zero denominator are defined as 0.
    """
    yt = np.asarray(y_true, dtype=int)
    yp = np.asarray(y_pred, dtype=int)
    if yt.size == 0 or yt.shape != yp.shape:
        raise ValueError("labels must be nonempty and equal length")
    if not (np.isin(yt, (0, 1)).all() and np.isin(yp, (0, 1)).all()):
        raise ValueError("labels must be binary (0 = control, 1 = patient)")
    n = yt.size
    accuracy = float((yt == yp).mean())
    precision = recall = f1 = 0.0
    for cls in (0, 1):
        support = int((yt == cls).sum())
        if support == 0:
            continue
        tp = int(((yt == cls) & (yp == cls)).sum())
        fp = int(((yt != cls) & (yp == cls)).sum())
        fn = support - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        w = support / n
        precision += w * p
        recall += w * r
        f1 += w * f
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


# ---------------------------------------------------------------------------
# Cross-participant validation


@dataclass(frozen=True)
class Fold:
    test_ids: tuple[str, ...]
    train_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[Fold, ...]

    def __post_init__(self):
        tested: set[str] = set()
        for fold in self.folds:
            overlap = set(fold.test_ids) & set(fold.train_ids)
            if overlap:
                raise ValueError(f"participants in both train and test: {sorted(overlap)}")
            dup = tested & set(fold.test_ids)
            if dup:
                raise ValueError(f"participants tested more than once: {sorted(dup)}")
            tested |= set(fold.test_ids)


def make_fold_plan(participants, n_folds: int = 6, seed: int = 0) -> FoldPlan:
    """Stratified participant-level folds.

    Participants are shuffled deterministically by seed within each group
    and dealt round-robin into the test sets, so per-class fold sizes differ
    by at most one. Each fold trains on everyone else.
    """
    by_group: dict[str, list[str]] = {"patient": [], "control": []}
    for pid, group in participants:
        if group not in by_group:
            raise ValueError(f"unknown group {group!r} for participant {pid}")
        by_group[group].append(pid)
    rng = np.random.default_rng(seed)
    test_sets: list[list[str]] = [[] for _ in range(n_folds)]
    for group in ("patient", "control"):
        ids = sorted(by_group[group])
        if len(ids) < n_folds:
            raise ValueError(
                f"{group} group has {len(ids)} participants, fewer than {n_folds} folds"
            )
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        for i, pid in enumerate(shuffled):
            test_sets[i % n_folds].append(pid)
    all_ids = [pid for pid, _ in participants]
    folds = tuple(
        Fold(
            test_ids=tuple(test),
            train_ids=tuple(pid for pid in all_ids if pid not in set(test)),
        )
        for test in test_sets
    )
    return FoldPlan(folds=folds)


@dataclass(eq=False)
class FoldResult:
    fold_index: int
    test_ids: tuple[str, ...]
    selected: np.ndarray  # column indices into the full feature matrix
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    model: object
    train_x: np.ndarray  # standardized, selected columns
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    test_pred: np.ndarray
    test_trial_ids: tuple[str, ...]
    metrics: Metrics


@dataclass(eq=False)
class CrossValidation:
    task: str
    mode: FeatureMode
    select_k: int
    spec: ClassifierSpec
    features: FeatureMatrix
    folds: list[FoldResult]
    pooled: Metrics


def cross_validate(
    epochs: EpochSet,
    task: str,
    spec: ClassifierSpec,
    plan: FoldPlan,
    mode: FeatureMode = FeatureMode.RAW,
    select_k: int | None = None,
) -> CrossValidation:
    """Per-fold train/evaluate with strict train-side selection and scaling.

    Feature scores, selected columns, and scaler statistics are computed
    from training rows only. Pooled metrics cover the concatenation of all
    folds' test predictions at trial level. Each fold derives its own model
    seed as spec.seed XOR fold index.
    """
    feats = build_features(epochs, task, mode)
    if select_k is None:
        select_k = default_select_k(mode)
    pids = np.array(feats.participant_ids)
    results: list[FoldResult] = []
    pooled_true: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    for i, fold in enumerate(plan.folds):
        train_mask = np.isin(pids, fold.train_ids)
        test_mask = np.isin(pids, fold.test_ids)
        if (train_mask & test_mask).any():
            raise AssertionError("fold leaks participants between train and test")
        if not test_mask.any():
            raise ValueError(f"fold {i}: no test trials for {fold.test_ids}")
        train_y = feats.y[train_mask]
        if np.unique(train_y).size < 2:
            raise ValueError(f"fold {i}: training data has a single class")
        scores = anova_f_scores(feats.x[train_mask], train_y)
        selected = select_k_best(scores, select_k)
        train_x, test_x, mean, std = standardize(
            feats.x[np.ix_(train_mask, selected)],
            feats.x[np.ix_(test_mask, selected)],
        )
        model = fit(replace(spec, seed=spec.seed ^ i), train_x, train_y)
        test_pred = predict(model, test_x)
        test_y = feats.y[test_mask]
        results.append(
            FoldResult(
                fold_index=i,
                test_ids=fold.test_ids,
                selected=selected,
                scaler_mean=mean,
                scaler_std=std,
                model=model,
                train_x=train_x,
                train_y=train_y,
                test_x=test_x,
                test_y=test_y,
                test_pred=test_pred,
                test_trial_ids=tuple(pids[test_mask]),
                metrics=evaluate(test_y, test_pred),
            )
        )
        pooled_true.append(test_y)
        pooled_pred.append(test_pred)
    pooled = evaluate(np.concatenate(pooled_true), np.concatenate(pooled_pred))
    return CrossValidation(
        task=task,
        mode=mode,
        select_k=select_k,
        spec=spec,
        features=feats,
        folds=results,
        pooled=pooled,
    )
