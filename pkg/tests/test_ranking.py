import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import borda, order_of, positions
from xaifs import ranking as R
from xaifs.errors import DataError


def ctx(importance, accs=None, class_importance=None, n_attacks=2):
    imp = np.asarray(importance, dtype=float)
    accs = np.ones(len(imp)) if accs is None else accs
    if class_importance is None:
        class_importance = np.repeat(imp[:, None, :], n_attacks, axis=1)
    return R.RankContext([f"m{i}" for i in range(len(imp))], accs, imp, class_importance,
                         [f"a{i}" for i in range(np.shape(class_importance)[1])])


def ranked(order, n=None):
    n = n or len(order)
    return R.FeatureRanking("t", [(f, float(n - i)) for i, f in enumerate(order)])


# ---- basics ----

def test_rank_from_importance_examples():
    assert R.rank_from_importance({0: 0.5, 1: 0.9}).order == [1, 0]
    assert R.rank_from_importance([0.3, 0.3, 0.3]).order == [0, 1, 2]
    assert R.rank_from_importance(np.log([0.2, 0.9, 0.5])).order == R.rank_from_importance([0.2, 0.9, 0.5]).order


def test_not_a_permutation():
    with pytest.raises(ValueError):
        R.FeatureRanking("bad", [(0, 1.0), (0, 0.5)])


def test_select_top_k():
    r = R.rank_from_importance(np.arange(12.0))
    assert R.select_top_k(r, 12) == r.order
    assert R.select_top_k(r, 1) == [11]
    assert R.select_top_k(r, 10)[:5] == R.select_top_k(r, 5)
    with pytest.raises(ValueError):
        R.select_top_k(r, 0)


# ---- overall rank ----

def test_overall_rank_hand_case():
    # A ranks (f1,f2,f3) = (1,2,3), B = (2,1,3)
    r = R.overall_rank(ctx([[3.0, 2.0, 1.0], [2.0, 3.0, 1.0]]))
    assert r.order == [0, 1, 2]
    assert r.scores == [1.5, 1.5, 3.0]


def test_overall_rank_identical_models():
    imp = [0.1, 0.7, 0.4, 0.2]
    assert R.overall_rank(ctx([imp, imp, imp])).order == [1, 2, 3, 0]


def test_overall_rank_mean_positions_third_case():
    r = R.overall_rank(ctx([[1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.0, 1.0], [1.0, 4.0, 3.0, 2.0]]))
    # positions: m0 (4,3,2,1), m1 (1,2,3,4), m2 (4,1,2,3) -> means (3, 2, 7/3, 8/3)
    assert r.order == [1, 2, 3, 0]
    assert r.scores == pytest.approx([2.0, 7 / 3, 8 / 3, 3.0])


# ---- weighted / normalized ----

def test_weighted_rank_hand_case():
    r = R.weighted_rank(ctx([[0.5, 0.1], [0.2, 0.3]], accs=[0.9, 0.5]))
    score = dict(r.entries)
    assert score[0] == pytest.approx((0.9 * 0.5 + 0.5 * 0.2) / 2)  # 0.275
    assert score[1] == pytest.approx((0.9 * 0.1 + 0.5 * 0.3) / 2)
    assert r.order == [0, 1]


def test_weighted_rank_zero_accuracy_model_ignored():
    a = R.weighted_rank(ctx([[0.1, 0.9, 0.5], [9.0, 0.0, 1.0]], accs=[0.8, 0.0]))
    assert a.order == [1, 2, 0]


def test_weighted_unit_accuracy_equals_mean_importance():
    imp = np.array([[0.2, 0.4, 0.1], [0.6, 0.1, 0.2]])
    assert R.weighted_rank(ctx(imp)).order == R.rank_from_importance(imp.mean(axis=0)).order


def test_normalized_weighted_hand_cases():
    r = R.normalized_weighted_rank(ctx([[4.0, 1.0]]))
    assert dict(r.entries) == pytest.approx({0: 0.8, 1: 0.2})
    # same profile at two scales: both contribute equally after normalizing
    r2 = R.normalized_weighted_rank(ctx([[3.0, 1.0, 2.0], [30.0, 10.0, 20.0]], accs=[0.5, 0.5]))
    assert r2.order == [0, 2, 1]
    assert dict(r2.entries)[0] == pytest.approx(0.5 * 0.5)


def test_normalized_all_zero_errors():
    with pytest.raises(DataError):
        R.normalized_weighted_rank(ctx([[0.0, 0.0], [1.0, 2.0]]))


# ---- models + attacks ----

def test_models_attacks_formula_examples():
    assert R.models_attacks_from_ranks([[1], [3]], [[2], [2]])[0] == 2.0
    assert R.models_attacks_from_ranks([[1], [1], [1]], [[1], [1]])[0] == 1.0
    assert R.models_attacks_from_ranks([[2, 1], [4, 3]], [[1, 2]])[0] == pytest.approx(0.5 * (3 + 1))


def test_models_attacks_score_top_feature():
    # feature 2 is top for every model and every attack -> r = 1
    cls = np.array([[[0.1, 0.2, 0.9], [0.2, 0.1, 0.8]], [[0.3, 0.1, 0.5], [0.1, 0.4, 0.6]]])
    c = R.RankContext(["a", "b"], [1.0, 1.0], cls.mean(axis=1), cls, ["x", "y"])
    r = R.models_attacks_score(c)
    assert r.order[0] == 2 and r.scores[0] == 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_models_attacks_strictly_monotone(seed):
    rng = np.random.default_rng(seed)
    rm = rng.integers(1, 10, size=(3, 5)).astype(float)
    ra = rng.integers(1, 10, size=(2, 5)).astype(float)
    base = R.models_attacks_from_ranks(rm, ra)
    i, j = rng.integers(3), rng.integers(5)
    worse = rm.copy()
    worse[i, j] += 1
    assert R.models_attacks_from_ranks(worse, ra)[j] > base[j]


# ---- combined selection ----

def test_combined_selection_hand_case():
    lists = [ranked([0, 1, 2]), ranked([0, 2, 1]), ranked([1, 0, 2])]
    r = R.combined_selection(lists, 2)
    assert r.order == [0, 1, 2]
    assert r.scores == [3.0, 2.0, 1.0]


def test_combined_ties_by_mean_position():
    # k=1: f2 and f1 appear once each; mean positions f2 (1+2)/2 beat f1 (3+1)/2
    r = R.combined_selection([ranked([2, 0, 1]), ranked([1, 2, 0])], 1)
    assert r.order == [2, 1, 0]
    assert r.scores == [1.0, 1.0, 0.0]


def test_combined_single_input_preserves_order():
    r = R.combined_selection([ranked([3, 1, 0, 2])], 2)
    assert r.order[:2] == [3, 1]


def test_combined_absent_feature_last():
    r = R.combined_selection([ranked([0, 1, 2, 3]), ranked([1, 0, 2, 3])], 2)
    assert r.order[-1] == 3 and r.scores[-1] == 0.0


def test_combined_clamps_k():
    with pytest.warns(R.ClampedKWarning):
        r = R.combined_selection([ranked([1, 0])], 5)
    assert r.flags


def test_combined_length_mismatch():
    with pytest.raises(DataError):
        R.combined_selection([ranked([0, 1]), ranked([0, 1, 2])], 1)


# ---- voting ----

def test_voting_hand_case():
    r = R.voting([ranked([0, 1, 2]), ranked([1, 0, 2])])
    assert dict(r.entries) == {0: 5.0, 1: 5.0, 2: 2.0}
    assert r.order == [0, 1, 2]


def test_voting_single_input():
    assert R.voting([ranked([2, 0, 3, 1])]).order == [2, 0, 3, 1]


def test_voting_three_inputs():
    r = R.voting([ranked([0, 1, 2, 3]), ranked([3, 2, 1, 0]), ranked([2, 3, 0, 1])])
    # points: f0 4+1+2=7, f1 3+2+1=6, f2 2+3+4=9, f3 1+4+3=8
    assert dict(r.entries) == {0: 7.0, 1: 6.0, 2: 9.0, 3: 8.0}
    assert r.order == [2, 3, 0, 1]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 8), st.integers(1, 5))
def test_voting_matches_borda_oracle_and_reverses(seed, n, k):
    rng = np.random.default_rng(seed)
    orders = [list(rng.permutation(n)) for _ in range(k)]
    r = R.voting([ranked(o) for o in orders])
    pts = borda(orders, n)
    assert r.order == order_of(pts)
    rev = R.voting([ranked(o[::-1]) for o in orders])
    # reversed points are (k*(n+1) - pts): the ordering flips up to ties
    assert dict(rev.entries) == {f: float(k * (n + 1) - p) for f, p in enumerate(pts)}


# ---- invariance properties ----

@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_permutation_and_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    n_models, n_feat = 4, 6
    cls = rng.random((n_models, 3, n_feat))
    imp = cls.mean(axis=1)
    accs = rng.uniform(0.5, 1.0, n_models)
    base = R.RankContext(list("abcd"), accs, imp, cls, ["x", "y", "z"])
    perm = rng.permutation(n_models)
    shuffled = R.RankContext([list("abcd")[i] for i in perm], accs[perm], imp[perm], cls[perm], ["x", "y", "z"])
    for fn in (R.overall_rank, R.models_attacks_score, R.weighted_rank, R.normalized_weighted_rank):
        assert fn(base).order == fn(shuffled).order
    # strictly increasing transform of importances
    t = R.RankContext(list("abcd"), accs, np.exp(5 * imp), np.exp(5 * cls), ["x", "y", "z"])
    assert R.overall_rank(base).order == R.overall_rank(t).order
    assert R.models_attacks_score(base).order == R.models_attacks_score(t).order
    # per-model positive rescaling
    scale = rng.uniform(0.1, 10, n_models)[:, None]
    s = R.RankContext(list("abcd"), accs, imp * scale, cls * scale[:, :, None], ["x", "y", "z"])
    assert R.normalized_weighted_rank(base).order == R.normalized_weighted_rank(s).order
    rankings = [R.rank_from_importance(v) for v in imp]
    assert R.combined_selection(rankings, 3).order == R.combined_selection(rankings[::-1], 3).order
    assert R.voting(rankings).order == R.voting(rankings[::-1]).order


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_overall_rank_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    imp = rng.integers(0, 4, size=(3, 7)).astype(float)  # many ties
    pos = np.array([positions(list(v)) for v in imp])
    assert R.overall_rank(ctx(imp)).order == order_of(list(pos.mean(axis=0)), descending=False)


def test_attack_pooling_modes():
    cls = np.array([[[0.9, 0.1, 0.5]], [[0.2, 0.3, 0.1]]])
    c = R.RankContext(["a", "b"], [1, 1], cls.mean(axis=1), cls, ["x"])
    # rank pooling: positions (1,3,2) and (2,1,3) -> means (1.5, 2, 2.5)
    assert R.attack_ranks(c, "rank").tolist() == [[1, 2, 3]]
    # importance pooling: means (0.55, 0.2, 0.3)
    assert R.attack_ranks(c, "importance").tolist() == [[1, 3, 2]]
    with pytest.raises(ValueError):
        R.attack_ranks(c, "median")


def test_proposed_rankings_complete():
    rng = np.random.default_rng(0)
    cls = rng.random((3, 2, 5))
    c = R.RankContext(["a", "b", "c"], [0.9, 0.8, 0.7], cls.mean(axis=1), cls, ["x", "y"])
    out = R.proposed_rankings(c, 2)
    assert set(out) == set(R.PROPOSED_METHODS)
    assert set(out["model_specific"]) == {"a", "b", "c"}
    for r in [*out["model_specific"].values(), *(v for k, v in out.items() if k != "model_specific")]:
        assert sorted(r.order) == list(range(5))


def test_rankings_csv_round_trip(tmp_path):
    r = R.rank_from_importance([0.1, 0.3, 0.2], "demo", ["a", "b", "c"])
    R.write_rankings_csv([r], tmp_path / "r.csv")
    back = R.read_rankings_csv(tmp_path / "r.csv")
    assert back == {"demo": [("b", 0.3), ("c", 0.2), ("a", 0.1)]}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert (tmp_path / "r.csv").read_text().splitlines()[0] == "method,rank,feature,score"
