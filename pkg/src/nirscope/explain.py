"""Shapley-value attribution and per-channel importance ranking.

Provides an exact enumerating attributor for small group counts and a
kernel-weighted least-squares approximation for larger ones. The value of a
coalition is the mean model score over background rows with the coalition's
feature groups replaced by the explained instance. Ranking aggregates mean
absolute attributions per (channel, chromophore).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .features import FeatureKey

__all__ = [
    "Attribution",
    "ChannelImportance",
    "exact_shapley",
    "kernel_shap",
    "channel_importance",
    "build_background",
    "group_columns",
    "attribute_cross_validation",
]

EXACT_MAX_GROUPS = 20
_SCORE_CHUNK = 200_000  # rows per batched score call


@dataclass(frozen=True, eq=False)
class Attribution:
    """Per-group attribution values for one explained instance."""

    phi: np.ndarray  # (n_groups,)
    base_value: float
    instance: np.ndarray

    @property
    def total(self) -> float:
        return float(self.phi.sum() + self.base_value)


@dataclass(frozen=True)
class ChannelImportance:
    """Ranked (channel, chromophore, mean absolute attribution) triples."""

    entries: tuple[tuple[str, str, float], ...]

    def __post_init__(self):
        values = [v for _, _, v in self.entries]
        if any(v < 0 for v in values):
            raise ValueError("importances must be nonnegative")
        if any(a < b for a, b in zip(values, values[1:])):
            raise ValueError("importances must be sorted descending")

    def top(self, n: int) -> tuple[tuple[str, str, float], ...]:
        return self.entries[:n]


ScoreFn = Callable[[np.ndarray], np.ndarray]


def _coalition_values(
    score_fn: ScoreFn,
    background: np.ndarray,
    instance: np.ndarray,
    groups: Sequence[Sequence[int]],
    masks: np.ndarray,
) -> np.ndarray:
    """v(S) for each mask row: mean score over background with S from instance."""
    n_bg, n_cols = background.shape
    n_masks = masks.shape[0]
    # Map every column to its group (-1 = not in the game, stays background).
    col_group = np.full(n_cols, -1, dtype=int)
    for gi, cols in enumerate(groups):
        col_group[list(cols)] = gi
    padded = np.concatenate([masks, np.zeros((n_masks, 1), dtype=bool)], axis=1)
    values = np.empty(n_masks)
    rows_per_batch = max(1, _SCORE_CHUNK // n_bg)
    for start in range(0, n_masks, rows_per_batch):
        batch = padded[start : start + rows_per_batch]
        member = batch[:, col_group]  # (batch, n_cols): column taken from instance?
        composed = np.where(
            member[:, None, :], instance[None, None, :], background[None, :, :]
        )
        flat = composed.reshape(-1, n_cols)
        scores = np.asarray(score_fn(flat), dtype=float).reshape(batch.shape[0], n_bg)
        values[start : start + batch.shape[0]] = scores.mean(axis=1)
    return values


def _validate_groups(groups: Sequence[Sequence[int]], n_columns: int):
    seen: set[int] = set()
    for g in groups:
        cols = set(int(c) for c in g)
        if not cols:
            raise ValueError("empty feature group")
        if cols & seen:
            raise ValueError("feature groups must not overlap")
        if any(c < 0 or c >= n_columns for c in cols):
            raise ValueError("feature group column out of range")
        seen |= cols


def exact_shapley(
    score_fn: ScoreFn,
    background: np.ndarray,
    instance: np.ndarray,
    groups: Sequence[Sequence[int]] | None = None,
) -> Attribution:
    """Exact Shapley values by full coalition enumeration.

    phi_g sums over all coalitions S not containing g the weighted marginal
    contribution |S|!(n-|S|-1)!/n! * (v(S+g) - v(S)). Capped at 20 groups.
    """
    background = np.atleast_2d(np.asarray(background, dtype=float))
    instance = np.asarray(instance, dtype=float).ravel()
    if background.shape[0] == 0:
        raise ValueError("background set is empty")
    if groups is None:
        groups = [[j] for j in range(instance.size)]
    _validate_groups(groups, instance.size)
    n = len(groups)
    if n > EXACT_MAX_GROUPS:
        raise ValueError(f"{n} groups exceeds the exact enumeration cap ({EXACT_MAX_GROUPS})")
    masks = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(bool)
    values = _coalition_values(score_fn, background, instance, groups, masks)
    sizes = masks.sum(axis=1)
    fact = [math.factorial(i) for i in range(n + 1)]
    weight_by_size = np.array(
        [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)] + [0.0]
    )
    phi = np.zeros(n)
    for g in range(n):
        without = ~masks[:, g]
        idx_without = np.nonzero(without)[0]
        idx_with = idx_without | (1 << g)
        w = weight_by_size[sizes[idx_without]]
        phi[g] = float(np.sum(w * (values[idx_with] - values[idx_without])))
    return Attribution(phi=phi, base_value=float(values[0]), instance=instance.copy())


def _kernel_weight(n: int, size: int) -> float:
    return (n - 1) / (math.comb(n, size) * size * (n - size))


def _sample_coalitions(n: int, budget: int, rng: np.random.Generator):
    """Masks and weights for the kernel regression (empty/full excluded).

    Complete coalition size pairs (s, n-s) are enumerated outright while the
    budget allows (smallest and largest sizes first, where the kernel mass
    sits). The remaining budget is split across the leftover size pairs in
    proportion to their kernel mass; within a pair, distinct coalitions are
    drawn and immediately paired with their complements (antithetic
    sampling), each carrying an even share of its size's kernel mass.
    """
    masks: list[np.ndarray] = []
    weights: list[float] = []
    half = (n - 1) // 2 + 1
    paired: list[tuple[int, ...]] = []
    for s in range(1, half + 1):
        if s > n - s:
            break
        paired.append((s,) if s == n - s else (s, n - s))
    remaining = budget
    for pair in paired:
        count = sum(math.comb(n, s) for s in pair)
        if count <= remaining:
            for s in pair:
                w = _kernel_weight(n, s)
                for combo in combinations(range(n), s):
                    mask = np.zeros(n, dtype=bool)
                    mask[list(combo)] = True
                    masks.append(mask)
                    weights.append(w)
            remaining -= count
            continue
        if remaining <= 0:
            break
        if remaining < count / 4:
            # Sparse coverage would concentrate this size's kernel mass on a
            # few heavily weighted rows; skipping the size entirely is lower
            # variance (the completed sizes already identify the values).
            break
        # Partial pair: draw distinct coalitions of the smaller size and pair
        # each with its complement (antithetic); the drawn coalitions split
        # their size's total kernel mass evenly.
        s = pair[0]
        n_first = (remaining + 1) // 2 if len(pair) == 2 else remaining
        n_second = remaining - n_first if len(pair) == 2 else 0
        cap = math.comb(n, s)
        chosen: set[tuple[int, ...]] = set()
        while len(chosen) < min(n_first, cap):
            combo = tuple(sorted(rng.choice(n, size=s, replace=False).tolist()))
            chosen.add(combo)
        first = sorted(chosen)
        w_first = _kernel_weight(n, s) * cap / max(len(first), 1)
        for combo in first:
            mask = np.zeros(n, dtype=bool)
            mask[list(combo)] = True
            masks.append(mask)
            weights.append(w_first)
        if n_second > 0:
            comp = first[:n_second]
            w_second = _kernel_weight(n, n - s) * math.comb(n, n - s) / len(comp)
            for combo in comp:
                mask = np.ones(n, dtype=bool)
                mask[list(combo)] = False
                masks.append(mask)
                weights.append(w_second)
        break
    return np.array(masks, dtype=bool), np.array(weights)


def kernel_shap(
    score_fn: ScoreFn,
    background: np.ndarray,
    instance: np.ndarray,
    groups: Sequence[Sequence[int]] | None = None,
    n_samples: int = 256,
    seed: int = 0,
) -> Attribution:
    """Shapley estimation by kernel-weighted least squares.

    Coalitions are weighted by (n-1)/(C(n,|S|)*|S|*(n-|S|)); the empty and
    full coalitions are always included through an exactly enforced
    efficiency constraint. Deterministic given the seed. When the budget
    covers every coalition the result equals exact enumeration.
    """
    background = np.atleast_2d(np.asarray(background, dtype=float))
    instance = np.asarray(instance, dtype=float).ravel()
    if background.shape[0] == 0:
        raise ValueError("background set is empty")
    if groups is None:
        groups = [[j] for j in range(instance.size)]
    _validate_groups(groups, instance.size)
    n = len(groups)
    if n == 1:
        full = float(np.mean(np.asarray(score_fn(instance[None, :]))))
        base = float(np.mean(np.asarray(score_fn(background))))
        return Attribution(phi=np.array([full - base]), base_value=base, instance=instance.copy())
    if n_samples < 2 * n + 2:
        raise ValueError(f"n_samples must be at least 2*n_groups+2 = {2 * n + 2}, got {n_samples}")
    rng = np.random.default_rng(seed)
    masks, weights = _sample_coalitions(n, n_samples - 2, rng)
    v = _coalition_values(score_fn, background, instance, groups, masks)
    base = float(np.mean(np.asarray(score_fn(background), dtype=float)))
    full = float(np.mean(np.asarray(score_fn(instance[None, :]), dtype=float)))
    delta = full - base
    z = masks.astype(float)
    y = v - base
    # Eliminate the last coefficient with the efficiency constraint
    # sum(phi) = delta, then solve the weighted normal equations.
    zc = z[:, :-1] - z[:, -1:]
    yc = y - z[:, -1] * delta
    zw = zc * weights[:, None]
    a = zc.T @ zw
    b = zw.T @ yc
    try:
        cond = np.linalg.cond(a)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError("insufficient coalition diversity for the kernel regression")
    phi_head = np.linalg.solve(a, b)
    phi = np.append(phi_head, delta - phi_head.sum())
    return Attribution(phi=phi, base_value=base, instance=instance.copy())


def channel_importance(
    attributions: Sequence[Attribution],
    group_keys: Sequence[tuple[str, str]],
    extra_zero_keys: Sequence[tuple[str, str]] = (),
) -> ChannelImportance:
    """Rank (channel, chromophore) pairs by mean absolute attribution.

    ``group_keys[i]`` names the pair that attribution group i belongs to;
    groups sharing a pair are summed within each trial before averaging.
    ``extra_zero_keys`` appends pairs that never entered the model with
    importance 0. Ties sort by channel then chromophore label.
    """
    if not attributions:
        raise ValueError("no attributions to rank")
    totals: dict[tuple[str, str], float] = {}
    for att in attributions:
        if att.phi.size != len(group_keys):
            raise ValueError("attribution size does not match group keys")
        for key, value in zip(group_keys, np.abs(att.phi)):
            totals[key] = totals.get(key, 0.0) + float(value)
    n = len(attributions)
    means = {key: total / n for key, total in totals.items()}
    for key in extra_zero_keys:
        means.setdefault(key, 0.0)
    ranked = sorted(means.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1]))
    return ChannelImportance(
        entries=tuple((ch, chrom, val) for (ch, chrom), val in ranked)
    )


def build_background(train_x: np.ndarray, max_medoids: int = 15) -> np.ndarray:
    """Mean training row plus up to ``max_medoids`` norm-strided rows."""
    x = np.asarray(train_x, dtype=float)
    if x.shape[0] == 0:
        raise ValueError("training matrix is empty")
    mean_row = x.mean(axis=0, keepdims=True)
    order = np.argsort(np.linalg.norm(x, axis=1), kind="stable")
    count = min(max_medoids, x.shape[0])
    strided = order[np.unique(np.linspace(0, x.shape[0] - 1, count).round().astype(int))]
    return np.vstack([mean_row, x[strided]])


def group_columns(
    feature_index: Sequence[FeatureKey], columns: Sequence[int]
) -> tuple[list[list[int]], list[tuple[str, str]]]:
    """Group column positions by (channel, chromophore).

    ``columns`` are indices into the full feature index; returned groups
    hold positions within ``columns`` (i.e. into the selected submatrix).
    """
    groups: dict[tuple[str, str], list[int]] = {}
    for pos, col in enumerate(columns):
        key = (feature_index[col].channel_id, feature_index[col].chromophore)
        groups.setdefault(key, []).append(pos)
    keys = sorted(groups)
    return [groups[k] for k in keys], keys


def attribute_cross_validation(
    cv,
    n_samples: int = 256,
    seed: int = 0,
    exact_max_groups: int = 12,
) -> tuple[ChannelImportance, list[Attribution], list[tuple[str, str]]]:
    """Attribute every test trial against its fold's model, then rank channels.

    Uses exact enumeration when the fold's group count allows it, kernel
    estimation otherwise. Channels never selected in any fold are reported
    with zero importance.
    """
    all_attrs: list[Attribution] = []
    per_trial_keys: list[list[tuple[str, str]]] = []
    for fold in cv.folds:
        groups, keys = group_columns(cv.features.feature_index, fold.selected)
        background = build_background(fold.train_x)
        score_fn = fold.model.predict_score
        use_exact = len(groups) <= exact_max_groups
        for row in fold.test_x:
            if use_exact:
                att = exact_shapley(score_fn, background, row, groups)
            else:
                att = kernel_shap(
                    score_fn, background, row, groups, n_samples=n_samples, seed=seed
                )
            all_attrs.append(att)
            per_trial_keys.append(keys)
    # Folds may select different channels; expand every attribution onto the
    # union of keys so trials are averaged on a common axis.
    union = sorted({k for keys in per_trial_keys for k in keys})
    key_pos = {k: i for i, k in enumerate(union)}
    expanded: list[Attribution] = []
    for att, keys in zip(all_attrs, per_trial_keys):
        phi = np.zeros(len(union))
        for k, v in zip(keys, att.phi):
            phi[key_pos[k]] += v
        expanded.append(Attribution(phi=phi, base_value=att.base_value, instance=att.instance))
    montage_keys = sorted(
        {(fk.channel_id, fk.chromophore) for fk in cv.features.feature_index}
    )
    ranking = channel_importance(expanded, union, extra_zero_keys=montage_keys)
    return ranking, expanded, union
