import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from xaifs.baselines import contingency, mutual_information_bits, quantile_bins
from xaifs.errors import DataError, InputError, LabelError, SchemaError
from xaifs.flowdata import (FeatureSchema, SplitSpec, deduplicate_and_shuffle, load_csv, minmax_fit_apply,
                            oversample_random, parse_schema, split_train_test, synth_planted)
from xaifs.models import LinearSVMParams, ModelKind, train


def _rows(d):
    return sorted(map(tuple, np.column_stack([d.x, d.y]).tolist()))


# ---- load_csv ----

def test_load_three_row_csv(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text(" a , b ,label\n1,2,x\n3,4,y\n5,6,x\n")
    d, rep = load_csv(p, FeatureSchema.identity(["a", "b"], ["x", "y"]))
    assert len(d) == 3 and d.n_features == 2
    assert d.y.tolist() == [0, 1, 0]
    assert rep.rows_in == 3


def test_builtin_schemas():
    cic = FeatureSchema.builtin("cicids2017")
    assert (cic.n_features, cic.n_classes) == (78, 7)
    sim = FeatureSchema.builtin("simargl2021")
    assert (sim.n_features, sim.n_classes) == (29, 3)


def test_schema_text_round_trip():
    s = FeatureSchema.builtin("simargl2021")
    again = parse_schema(s.to_text())
    assert again.feature_names == s.feature_names
    assert again.label_map == s.label_map
    assert again.encodings == s.encodings


def test_cicids_label_variants(tmp_path):
    s = FeatureSchema.builtin("cicids2017")
    assert s.class_names[s.label_map["BENIGN"]] == "Normal"
    assert s.class_names[s.label_map["Heartbleed"]] == "DoS"


@pytest.mark.parametrize("policy,expected_rows", [("drop-row", 2), ("zero", 3), ("median", 3)])
def test_nonfinite_policies(tmp_path, policy, expected_rows):
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n1,Infinity,x\n3,4,y\n5,8,x\n")
    d, rep = load_csv(p, FeatureSchema.identity(["a", "b"], ["x", "y"]), policy)
    assert len(d) == expected_rows
    assert rep.nonfinite_cells_handled == 1
    if policy == "zero":
        assert d.x[0, 1] == 0.0
    if policy == "median":
        assert d.x[0, 1] == 6.0


def test_categorical_encoding(tmp_path):
    s = parse_schema("label_column: L\nclass: n\nclass: a\nencode: proto | tcp = 6 | udp = 17\n"
                     "feature: proto\nfeature: v\n")
    p = tmp_path / "d.csv"
    p.write_text("proto,v,L\ntcp,1,n\nudp,2,a\n")
    d, _ = load_csv(p, s)
    assert d.x[:, 0].tolist() == [6.0, 17.0]


@pytest.mark.parametrize("body,err", [
    ("a,label\n1,x\n", SchemaError),        # missing column b
    ("a,b,label\n1,2,zzz\n", LabelError),   # unmapped label
    ("", InputError),
])
def test_load_errors(tmp_path, body, err):
    p = tmp_path / "d.csv"
    p.write_text(body)
    with pytest.raises(err):
        load_csv(p, FeatureSchema.identity(["a", "b"], ["x", "y"]))


def test_missing_file():
    with pytest.raises(InputError):
        load_csv("/nonexistent/file.csv", FeatureSchema.identity(["a"], ["x"]))


def test_malformed_schema():
    with pytest.raises(SchemaError):
        parse_schema("class: a\nfeature: f\n")
    with pytest.raises(SchemaError):
        parse_schema("label_column: L\nclass: a\nlabel: raw = b\n")


# ---- dedup / shuffle ----

def test_duplicates_removed():
    d = make_dataset([[1, 2], [1, 2], [3, 4]], [0, 0, 1])
    out, rep = deduplicate_and_shuffle(d, 0)
    assert len(out) == 2 and rep.duplicates_removed == 1


def test_same_features_different_label_kept():
    d = make_dataset([[1, 2], [1, 2]], [0, 1])
    out, rep = deduplicate_and_shuffle(d, 0)
    assert len(out) == 2 and rep.duplicates_removed == 0


def test_shuffle_deterministic(planted_small):
    a, _ = deduplicate_and_shuffle(planted_small, 9)
    b, _ = deduplicate_and_shuffle(planted_small, 9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 1)), min_size=1, max_size=40),
       st.integers(0, 2 ** 32 - 1))
def test_dedup_cardinality_property(rows, seed):
    x = [[a, b] for a, b, _ in rows]
    y = [c for *_, c in rows]
    d = make_dataset(x, y, classes=["c0", "c1"])
    out, _ = deduplicate_and_shuffle(d, seed)
    assert len(out) == len(set(rows))
    assert set(_rows(out)) == set(_rows(d))


# ---- oversampling ----

def test_oversample_counts():
    y = [0] * 100 + [1] * 10 + [2] * 5
    x = np.arange(len(y), dtype=float)[:, None]
    out = oversample_random(make_dataset(x, y), 3)
    assert np.bincount(out.y).tolist() == [100, 100, 100]
    # every added row equals an original row of its class
    orig = {(float(v), c) for v, c in zip(x[:, 0], y)}
    assert all((float(v), int(c)) in orig for v, c in zip(out.x[:, 0], out.y))


def test_oversample_balanced_unchanged():
    d = make_dataset([[0], [1], [2], [3]], [0, 1, 0, 1])
    assert _rows(oversample_random(d, 0)) == _rows(d)


def test_oversample_missing_class():
    d = make_dataset([[0], [1]], [0, 0], classes=["a", "b"])
    with pytest.raises(DataError):
        oversample_random(d, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=60).filter(lambda ys: len(set(ys)) == 4),
       st.integers(0, 1000))
def test_oversample_ratio_property(y, seed):
    d = make_dataset(np.arange(len(y), dtype=float)[:, None], y)
    counts = np.bincount(oversample_random(d, seed).y)
    assert counts.max() == counts.min()


# ---- min-max ----

def test_minmax_examples():
    tr = make_dataset([[0, 7], [5, 7], [10, 7]], [0, 1, 0])
    te = make_dataset([[20, 1]], [0])
    (s_tr, s_te), params = minmax_fit_apply(tr, [te])
    assert s_tr.x[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert s_tr.x[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert s_te.x[0, 0] == 2.0
    assert params["f0"] == (0.0, 10.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 10 ** 6))
def test_minmax_idempotent(n, f, seed):
    x = np.random.default_rng(seed).normal(size=(n, f)) * 10
    (once,), _ = minmax_fit_apply(make_dataset(x, np.zeros(n, int), classes=["a"]))
    (twice,), params = minmax_fit_apply(once)
    assert np.allclose(once.x, twice.x, atol=1e-12)
    for lo, hi in params.values():
        assert lo == 0.0 and hi in (0.0, 1.0)


# ---- split ----

def test_split_sizes_and_union():
    d = make_dataset(np.arange(10.0)[:, None], [0, 1] * 5)
    tr, te = split_train_test(d, SplitSpec(0.7, 4))
    assert (len(tr), len(te)) == (7, 3)
    assert sorted(tr.x[:, 0].tolist() + te.x[:, 0].tolist()) == list(range(10))
    tr2, _ = split_train_test(d, SplitSpec(0.7, 4))
    assert np.array_equal(tr.x, tr2.x)


def test_split_fraction_validated():
    with pytest.raises(ValueError):
        SplitSpec(1.0)


# ---- synthetic generator ----

def test_planted_informative_mi_exceeds_noise():
    d = synth_planted(20000, 30, 5, 3, seed=2)
    mi = [mutual_information_bits(contingency(quantile_bins(d.x[:, j]), d.y, 3)) for j in range(30)]
    assert min(mi[:5]) > max(mi[5:])


def test_planted_binary_separable_svm():
    d = synth_planted(4000, 10, 3, 2, seed=1, separation=3.0)
    tr, te = split_train_test(d, SplitSpec(0.7, 0))
    m = train(ModelKind.LINEAR_SVM, LinearSVMParams(), tr, seed=0)
    assert (m.predict_labels(te.x) == te.y).mean() >= 0.95


def test_planted_noise_independent_of_label():
    d = synth_planted(20000, 10, 2, 3, seed=4)
    # noise column means per class agree within sampling error
    for j in range(2, 10):
        means = [d.x[d.y == c, j].mean() for c in range(3)]
        assert np.ptp(means) < 0.1


def test_planted_deterministic():
    a = synth_planted(500, 6, 2, 3, seed=8)
    b = synth_planted(500, 6, 2, 3, seed=8)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


def test_csv_round_trip(tmp_path, planted_small):
    p = tmp_path / "p.csv"
    planted_small.to_csv(p)
    back, _ = load_csv(p, planted_small.schema)
    assert np.array_equal(back.x, planted_small.x) and np.array_equal(back.y, planted_small.y)
