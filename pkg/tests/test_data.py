import numpy as np
import pandas as pd
import pytest

from rnsmlp.data import (DegenerateFeature, EmptySplit, ParseError, PreprocessSpec, Dataset,
                         load_csv, load_registered, preprocess, split_and_batch, split_indices,
                         to_grid)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small(tmp_path):
    ds = load_csv(write(tmp_path, "a,b,class\n1,2,x\n3,4,y\n5,6,x\n"), "class")
    assert len(ds) == 3 and ds.n_features == 2 and ds.n_classes == 2


def test_missing_label_column(tmp_path):
    with pytest.raises(ParseError):
        load_csv(write(tmp_path, "a,b\n1,2\n3,4\n"), "class")


def test_parse_error_location(tmp_path):
    text = "a,b,class\n" + "".join(f"{i},{i},0\n" for i in range(5)) + "7,oops,1\n"
    with pytest.raises(ParseError) as info:
        load_csv(write(tmp_path, text), "class")
    assert info.value.column == "b" and info.value.row == 7


def test_string_column_becomes_categorical(tmp_path):
    ds = load_csv(write(tmp_path, "a,c,class\n1,red,0\n2,blue,1\n3,red,0\n"), "class")
    assert ds.categorical == ("c",)


def test_wine_shape():
    ds = load_registered("wine")
    assert (len(ds), ds.n_features, ds.n_classes) == (178, 13, 3)


@pytest.mark.parametrize("key,shape", [("bcancer", (569, 30, 2)), ("diabetes", (768, 8, 2)),
                                       ("hdisease", (303, 13, 2))])
def test_bundled_shapes(key, shape):
    ds = load_registered(key)
    assert (len(ds), ds.n_features, ds.n_classes) == shape


def test_bcancer_beta4_range():
    p = preprocess(load_registered("bcancer"), PreprocessSpec(beta=4))
    for X in (p.X_train, p.X_test):
        assert X.min() >= -8 and X.max() <= 7
    assert (p.Y_train.sum(1) == 1).all() and (p.Y_test.sum(1) == 1).all()


def test_ramp_spans_grid():
    n = 200
    ds = Dataset(pd.DataFrame({"r": np.arange(n, dtype=float)}), np.arange(n) % 2)
    p = preprocess(ds, PreprocessSpec(beta=4))
    X = np.concatenate([p.X_train, p.X_test])[:, 0]
    assert X.min() == -8 and X.max() == 7
    assert set(np.unique(X)) == set(range(-8, 8))
    # identity up to rounding: the grid value is monotone in the ramp
    tr, te = split_indices(n, 0.2, 0)
    order = np.argsort(np.concatenate([tr, te]))
    assert (np.diff(X[order]) >= 0).all()


def test_to_grid():
    assert to_grid([0.0, 0.5, 1.0], 4).tolist() == [-8, 0, 7]
    assert to_grid([0.0, 1.0], 2).tolist() == [-2, 1]


def test_quantile_fit_on_train_only():
    n = 100
    vals = np.arange(n, dtype=float)
    ds = Dataset(pd.DataFrame({"v": vals}), np.arange(n) % 2)
    spec = PreprocessSpec(beta=8, test_fraction=0.2, split_seed=3)
    p = preprocess(ds, spec)
    q = p.F_train[:, 0] + 0.5
    # uniform on the training rows: empirical CDF within 1/#quantiles
    ecdf = (np.argsort(np.argsort(q)) + 1) / len(q)
    assert np.abs(np.sort(q) - np.sort(ecdf)).max() <= 1 / len(q) + 1e-9


def test_zero_as_missing():
    g = np.array([0.0, 2.0, 4.0, 6.0, 8.0, 0.0, 1.0, 3.0, 5.0, 7.0])
    ds = Dataset(pd.DataFrame({"g": g}), np.arange(10) % 2)
    spec = PreprocessSpec(beta=8, zero_as_missing=("g",), linear_columns=("g",), test_fraction=0.3)
    p = preprocess(ds, spec)
    tr, te = split_indices(10, 0.3, 0)
    train_vals = g[tr]
    mean = train_vals[train_vals != 0].mean()
    filled = np.where(g == 0, mean, g)
    lo, hi = filled[tr].min(), filled[tr].max()
    want = np.clip((filled - lo) / (hi - lo), 0, 1)
    assert np.allclose(p.F_train[:, 0] + 0.5, want[tr])
    assert np.allclose(p.F_test[:, 0] + 0.5, want[te])


def test_binary_categorical_one_hot():
    df = pd.DataFrame({"c": ["0", "1"] * 10, "v": np.arange(20.0)})
    ds = Dataset(df, np.arange(20) % 2, categorical=("c",))
    p = preprocess(ds, PreprocessSpec(beta=2))
    assert p.feature_names[:2] == ["c=0", "c=1"]
    assert set(np.unique(p.X_train[:, :2])) == {0, 1}
    assert (p.X_train[:, :2].sum(1) == 1).all()


def test_constant_column_dropped():
    df = pd.DataFrame({"k": np.ones(20), "v": np.arange(20.0)})
    ds = Dataset(df, np.arange(20) % 2)
    with pytest.warns(DegenerateFeature):
        p = preprocess(ds, PreprocessSpec())
    assert p.dropped == ["k"] and p.feature_names == ["v"]
    with pytest.raises(DegenerateFeature):
        preprocess(ds, PreprocessSpec(), strict=True)


def test_nan_imputation():
    df = pd.DataFrame({"v": [1.0, np.nan, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]})
    p = preprocess(Dataset(df, np.arange(10) % 2), PreprocessSpec(test_fraction=0.3))
    assert not np.isnan(p.F_train).any() and not np.isnan(p.F_test).any()


def test_preprocess_deterministic():
    ds = load_registered("diabetes")
    a = preprocess(ds, PreprocessSpec(beta=4, split_seed=1))
    b = preprocess(ds, PreprocessSpec(beta=4, split_seed=1))
    assert np.array_equal(a.X_train, b.X_train) and np.array_equal(a.X_test, b.X_test)


def test_spec_validation():
    with pytest.raises(ValueError):
        preprocess(load_registered("wine"), PreprocessSpec(beta=9))
    with pytest.raises(ValueError):
        preprocess(load_registered("wine"), PreprocessSpec(test_fraction=1.0))


def test_split_counts():
    tr, te = split_indices(100, 0.2, 0)
    assert (len(tr), len(te)) == (80, 20)
    tr, te = split_indices(383, 0.3, 0)
    assert len(tr) == 268 and len(tr) // 8 == 33 and len(tr) % 8 == 4
    with pytest.raises(EmptySplit):
        split_indices(1, 0.5, 0)


def test_split_and_batch():
    X = np.arange(200).reshape(100, 2)
    Y = np.eye(2, dtype=int)[np.arange(100) % 2]
    batches, (Xt, Yt) = split_and_batch(X, Y, 0.2, seed=4)
    assert len(batches) == 10 and all(len(b[0]) == 8 for b in batches)
    assert len(Xt) == 20
    again, _ = split_and_batch(X, Y, 0.2, seed=4)
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(batches, again))
    seen = np.concatenate([b[0][:, 0] for b in batches])
    assert len(set(seen) & set(Xt[:, 0])) == 0


def test_dump_csv(tmp_path):
    p = preprocess(load_registered("wine"), PreprocessSpec(beta=2))
    p.to_csv(tmp_path / "wine_int.csv")
    df = pd.read_csv(tmp_path / "wine_int.csv")
    assert len(df) == 178 and df["split"].sum() == len(p.X_test)
