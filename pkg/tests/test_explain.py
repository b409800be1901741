import numpy as np
import pytest

from nirscope.explain import (
    Attribution,
    ChannelImportance,
    build_background,
    channel_importance,
    exact_shapley,
    group_columns,
    kernel_shap,
)
from nirscope.features import FeatureKey


def _linear(w):
    w = np.asarray(w, dtype=float)
    return lambda x: np.asarray(x) @ w


def _random_model(rng, d):
    w = rng.normal(size=d)
    v = rng.normal(size=d)
    b = float(rng.normal())

    def score(x):
        x = np.atleast_2d(x)
        return np.tanh(x @ w) + (x @ v) ** 2 * 0.1 + b

    return score


def test_additive_model_closed_form_exact():
    rng = np.random.default_rng(0)
    w = rng.normal(size=6)
    bg = rng.normal(size=(10, 6))
    inst = rng.normal(size=6)
    att = exact_shapley(_linear(w), bg, inst)
    expected = w * (inst - bg.mean(axis=0))
    assert np.allclose(att.phi, expected, atol=1e-12)


def test_symmetric_features_get_equal_phi():
    def score(x):
        x = np.atleast_2d(x)
        return x[:, 0] + x[:, 1] + 0.5 * x[:, 0] * x[:, 1]

    bg = np.zeros((4, 2))
    inst = np.array([1.3, 1.3])
    att = exact_shapley(score, bg, inst)
    assert att.phi[0] == pytest.approx(att.phi[1], rel=1e-12)


def test_efficiency_axiom_random_models():
    rng = np.random.default_rng(1)
    for _ in range(10):
        score = _random_model(rng, 5)
        bg = rng.normal(size=(8, 5))
        inst = rng.normal(size=5)
        att = exact_shapley(score, bg, inst)
        total = float(score(inst[None, :])[0])
        assert att.phi.sum() + att.base_value == pytest.approx(total, abs=1e-9)


def test_null_player_gets_zero():
    rng = np.random.default_rng(2)
    w = rng.normal(size=5)
    w[2] = 0.0

    def score(x):
        x = np.atleast_2d(x)
        return np.tanh(x[:, [0, 1, 3, 4]] @ w[[0, 1, 3, 4]])

    bg = rng.normal(size=(6, 5))
    inst = rng.normal(size=5)
    att = exact_shapley(score, bg, inst)
    assert abs(att.phi[2]) < 1e-9


def test_exact_matches_permutation_definition():
    # independent oracle: average marginal contribution over all orderings
    from itertools import permutations

    rng = np.random.default_rng(15)
    n = 5
    score = _random_model(rng, n)
    bg = rng.normal(size=(3, n))
    inst = rng.normal(size=n)

    def v(members):
        comp = bg.copy()
        for g in members:
            comp[:, g] = inst[g]
        return float(np.mean(score(comp)))

    phi = np.zeros(n)
    perms = list(permutations(range(n)))
    for perm in perms:
        before: list[int] = []
        v_before = v(before)
        for g in perm:
            v_with = v(before + [g])
            phi[g] += v_with - v_before
            before.append(g)
            v_before = v_with
    phi /= len(perms)
    ours = exact_shapley(score, bg, inst).phi
    assert np.allclose(ours, phi, atol=1e-12)


def test_grouped_features_attribute_jointly():
    rng = np.random.default_rng(3)
    w = rng.normal(size=4)
    bg = rng.normal(size=(5, 4))
    inst = rng.normal(size=4)
    att = exact_shapley(_linear(w), bg, inst, groups=[[0, 1], [2, 3]])
    expected = w * (inst - bg.mean(axis=0))
    assert att.phi[0] == pytest.approx(expected[0] + expected[1], rel=1e-9)
    assert att.phi[1] == pytest.approx(expected[2] + expected[3], rel=1e-9)


def test_exact_shapley_validation():
    score = _linear([1.0, 1.0])
    with pytest.raises(ValueError, match="empty"):
        exact_shapley(score, np.empty((0, 2)), np.zeros(2))
    with pytest.raises(ValueError, match="cap"):
        exact_shapley(
            _linear(np.ones(21)), np.zeros((1, 21)), np.zeros(21)
        )
    with pytest.raises(ValueError, match="overlap"):
        exact_shapley(score, np.zeros((1, 2)), np.zeros(2), groups=[[0], [0, 1]])


def test_kernel_full_enumeration_matches_exact():
    rng = np.random.default_rng(4)
    for n in (3, 6, 8):
        score = _random_model(rng, n)
        bg = rng.normal(size=(6, n))
        inst = rng.normal(size=n)
        exact = exact_shapley(score, bg, inst)
        kernel = kernel_shap(score, bg, inst, n_samples=2**n, seed=0)
        assert np.allclose(kernel.phi, exact.phi, atol=1e-6)


def test_kernel_full_enumeration_matches_exact_with_groups():
    rng = np.random.default_rng(14)
    score = _random_model(rng, 9)
    bg = rng.normal(size=(5, 9))
    inst = rng.normal(size=9)
    groups = [[0, 1], [2], [3, 4, 5], [6], [7, 8]]
    exact = exact_shapley(score, bg, inst, groups=groups)
    kernel = kernel_shap(score, bg, inst, groups=groups, n_samples=2 ** len(groups), seed=3)
    assert np.allclose(kernel.phi, exact.phi, atol=1e-6)


def test_kernel_additive_matches_closed_form():
    rng = np.random.default_rng(5)
    w = rng.normal(size=7)
    bg = rng.normal(size=(9, 7))
    inst = rng.normal(size=7)
    att = kernel_shap(_linear(w), bg, inst, n_samples=80, seed=1)
    expected = w * (inst - bg.mean(axis=0))
    assert np.allclose(att.phi, expected, atol=1e-6)


def test_kernel_minimum_sample_budget():
    with pytest.raises(ValueError, match="n_samples"):
        kernel_shap(_linear(np.ones(6)), np.zeros((2, 6)), np.ones(6), n_samples=10)


def test_kernel_deterministic_given_seed():
    rng = np.random.default_rng(6)
    score = _random_model(rng, 9)
    bg = rng.normal(size=(5, 9))
    inst = rng.normal(size=9)
    a = kernel_shap(score, bg, inst, n_samples=40, seed=7)
    b = kernel_shap(score, bg, inst, n_samples=40, seed=7)
    assert np.array_equal(a.phi, b.phi)


def test_kernel_error_shrinks_as_samples_double():
    # mean |phi_kernel - phi_exact| decreases in expectation with the budget
    rng = np.random.default_rng(8)
    n = 8
    budgets = (24, 48, 96, 192)
    errors = {b: [] for b in budgets}
    for trial in range(6):
        score = _random_model(rng, n)
        bg = rng.normal(size=(4, n))
        inst = rng.normal(size=n)
        exact = exact_shapley(score, bg, inst)
        for b in budgets:
            for seed in range(3):
                k = kernel_shap(score, bg, inst, n_samples=b, seed=seed)
                errors[b].append(np.mean(np.abs(k.phi - exact.phi)))
    means = [float(np.mean(errors[b])) for b in budgets]
    assert all(a >= b * 0.9 for a, b in zip(means, means[1:]))  # monotone within slack
    assert means[-1] < means[0]


def test_kernel_efficiency_is_exact():
    rng = np.random.default_rng(9)
    score = _random_model(rng, 10)
    bg = rng.normal(size=(6, 10))
    inst = rng.normal(size=10)
    att = kernel_shap(score, bg, inst, n_samples=30, seed=2)
    full = float(np.mean(score(inst[None, :])))
    assert att.phi.sum() + att.base_value == pytest.approx(full, abs=1e-9)


# --- channel importance ---


def test_single_attribution_singleton_groups():
    att = Attribution(phi=np.array([0.5, -1.5]), base_value=0.0, instance=np.zeros(2))
    imp = channel_importance([att], [("A", "hbo"), ("B", "hbr")])
    assert imp.entries[0] == ("B", "hbr", 1.5)
    assert imp.entries[1] == ("A", "hbo", 0.5)


def test_zero_attributions_rank_by_label():
    atts = [Attribution(phi=np.zeros(3), base_value=0.0, instance=np.zeros(3))]
    keys = [("C", "hbo"), ("A", "hbr"), ("B", "hbo")]
    imp = channel_importance(atts, keys)
    assert [e[:2] for e in imp.entries] == [("A", "hbr"), ("B", "hbo"), ("C", "hbo")]
    assert all(e[2] == 0.0 for e in imp.entries)


def test_importance_sums_within_channel_and_averages_over_trials():
    keys = [("A", "hbo"), ("A", "hbo"), ("B", "hbr")]
    atts = [
        Attribution(phi=np.array([1.0, -2.0, 0.5]), base_value=0.0, instance=np.zeros(3)),
        Attribution(phi=np.array([0.0, 0.0, 1.5]), base_value=0.0, instance=np.zeros(3)),
    ]
    imp = channel_importance(atts, keys)
    # A hbo: (|1| + |-2| + 0) / 2 = 1.5 ; B hbr: (0.5 + 1.5) / 2 = 1.0
    assert imp.entries[0] == ("A", "hbo", 1.5)
    assert imp.entries[1] == ("B", "hbr", 1.0)


def test_extra_zero_keys_appended():
    att = Attribution(phi=np.array([2.0]), base_value=0.0, instance=np.zeros(1))
    imp = channel_importance([att], [("A", "hbo")], extra_zero_keys=[("Z", "hbr")])
    assert imp.entries[-1] == ("Z", "hbr", 0.0)


def test_ranking_invariant_under_positive_score_scaling():
    rng = np.random.default_rng(10)
    score = _random_model(rng, 6)
    bg = rng.normal(size=(5, 6))
    keys = [(f"C{i}", "hbo") for i in range(6)]
    insts = rng.normal(size=(4, 6))
    atts = [exact_shapley(score, bg, x) for x in insts]
    scaled = [exact_shapley(lambda z: 7.0 * score(z), bg, x) for x in insts]
    base_rank = [e[:2] for e in channel_importance(atts, keys).entries]
    scaled_rank = [e[:2] for e in channel_importance(scaled, keys).entries]
    assert base_rank == scaled_rank


def test_importance_requires_attributions():
    with pytest.raises(ValueError, match="no attributions"):
        channel_importance([], [])


def test_importance_validates_ordering():
    with pytest.raises(ValueError, match="descending"):
        ChannelImportance(entries=(("A", "hbo", 0.1), ("B", "hbr", 0.5)))
    with pytest.raises(ValueError, match="nonnegative"):
        ChannelImportance(entries=(("A", "hbo", -0.1),))


# --- background and grouping helpers ---


def test_background_contains_mean_and_strided_rows():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(40, 3))
    bg = build_background(x, max_medoids=5)
    assert bg.shape[1] == 3
    assert np.allclose(bg[0], x.mean(axis=0))
    assert bg.shape[0] <= 6
    assert all(any(np.allclose(row, xr) for xr in x) for row in bg[1:])


def test_background_deterministic():
    rng = np.random.default_rng(12)
    x = rng.normal(size=(25, 4))
    assert np.array_equal(build_background(x), build_background(x))


def test_group_columns_by_channel_chromophore():
    index = (
        FeatureKey("S1-D1", "hbo", 0),
        FeatureKey("S1-D1", "hbr", 0),
        FeatureKey("S2-D2", "hbo", 0),
        FeatureKey("S1-D1", "hbo", 1),
    )
    groups, keys = group_columns(index, [0, 1, 2, 3])
    assert keys == [("S1-D1", "hbo"), ("S1-D1", "hbr"), ("S2-D2", "hbo")]
    assert groups[keys.index(("S1-D1", "hbo"))] == [0, 3]
