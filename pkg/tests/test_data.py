import math

import pytest

from gnm.data import (
    Standardizer,
    kfold,
    load_csv,
    make_moons,
    make_xor_gaussians,
    standardize,
)
from gnm.errors import DataError
from gnm.linalg import Matrix, Rng


def test_load_mixed_csv_one_hot(data_dir):
    ds = load_csv(data_dir / "mixed.csv")
    assert ds.task == "classification"
    assert ds.N == 3 and ds.m == 4 and ds.c == 2
    assert list(ds.feature_names) == ["size", "color=a", "color=b", "price"]
    assert list(ds.classes) == ["no", "yes"]
    assert list(ds.y) == [1, 0, 1]
    # one-hot group sums to exactly 1 on every row
    for i in range(ds.N):
        assert ds.X.get(i, 1) + ds.X.get(i, 2) == 1.0
    assert ds.X.get(0, 0) == 1.5 and ds.X.get(0, 3) == 10.0
    assert list(ds.numeric_flags) == [True, False, False, True]


def test_load_numeric_csv_regression(data_dir):
    ds = load_csv(data_dir / "numeric.csv")
    assert ds.task == "regression"
    assert ds.N == 5 and ds.m == 3 and ds.c == 1
    assert ds.target == "target"
    assert ds.y.get(2, 0) == 1.0
    assert ds.rejected == []


def test_load_wine_csv(data_dir):
    ds = load_csv(data_dir / "wine.csv")
    assert ds.task == "regression"
    assert ds.N == 30 and ds.m == 11
    assert ds.target == "quality"
    assert all(ds.numeric_flags)


def test_load_missing_csv_rejects_bad_rows(data_dir):
    ds = load_csv(data_dir / "missing.csv")
    assert ds.N == 3
    assert list(ds.y) == [0, 0, 1]
    assert len(ds.rejected) == 2
    linenos = [r[0] for r in ds.rejected]
    assert linenos == [3, 5]
    assert "'b'" in ds.rejected[0][1]
    assert "expected 3 fields" in ds.rejected[1][1]


def test_load_csv_explicit_target(data_dir):
    ds = load_csv(data_dir / "numeric.csv", target="x2")
    assert ds.target == "x2"
    assert ds.m == 3
    assert "x2" not in ds.feature_names


def test_load_csv_missing_target_column(data_dir):
    with pytest.raises(DataError):
        load_csv(data_dir / "numeric.csv", target="nope")


def test_load_csv_forced_categorical(data_dir):
    ds = load_csv(data_dir / "tiny.csv", categorical=("u",))
    # every distinct value becomes its own indicator column
    assert ds.m == 10 + 1
    assert not ds.numeric_flags[0]


def test_dataset_subset(data_dir):
    ds = load_csv(data_dir / "mixed.csv")
    Xs, ys = ds.subset([2, 0])
    assert Xs.rows == 2
    assert Xs.get(0, 0) == 3.5
    assert list(ys) == [1, 1]


def test_standardizer_centers_train_rows(data_dir):
    ds = load_csv(data_dir / "numeric.csv")
    idx = [0, 1, 2, 3]
    sc = standardize(idx, ds)
    Xs = sc.apply(ds.X)
    for j in range(ds.m):
        mu = sum(Xs.get(i, j) for i in idx) / len(idx)
        assert abs(mu) < 1e-12
        var = sum(Xs.get(i, j) ** 2 for i in idx) / len(idx)
        assert abs(var - 1.0) < 1e-12


def test_standardizer_leaves_one_hot(data_dir):
    ds = load_csv(data_dir / "mixed.csv")
    sc = standardize([0, 1, 2], ds)
    Xs = sc.apply(ds.X)
    for i in range(3):
        assert Xs.get(i, 1) in (0.0, 1.0)
        assert Xs.get(i, 2) in (0.0, 1.0)


def test_standardizer_constant_column_safe():
    X = Matrix.from_rows([[2.0, 1.0], [2.0, 3.0], [2.0, 5.0]])
    ds_like = type("D", (), {})()
    ds_like.m = 2
    ds_like.X = X
    ds_like.numeric_flags = [True, True]
    sc = standardize([0, 1, 2], ds_like)
    out = sc.apply(X)
    # zero-variance column maps to 0 rather than dividing by zero
    assert all(out.get(i, 0) == 0.0 for i in range(3))
    assert abs(sum(out.get(i, 1) for i in range(3))) < 1e-12


def test_standardizer_round_trip(data_dir):
    ds = load_csv(data_dir / "wine.csv")
    sc = standardize(list(range(20)), ds)
    back = sc.invert(sc.apply(ds.X))
    worst = max(
        abs(back.get(i, j) - ds.X.get(i, j))
        for i in range(ds.N)
        for j in range(ds.m)
    )
    assert worst < 1e-10


def test_standardize_empty_index():
    with pytest.raises(DataError):
        ds_like = type("D", (), {"m": 1, "numeric_flags": [True]})()
        standardize([], ds_like)


def test_kfold_partition_sizes():
    plan = kfold(100, 10, 0.1, Rng(0))
    assert plan.F == 10
    seen = []
    for train, val, test in plan:
        assert len(test) == 10
        assert len(val) == 9  # floor(0.1 * 90)
        assert len(train) == 81
        assert not (set(train) & set(val))
        assert not (set(train) & set(test))
        assert not (set(val) & set(test))
        seen.extend(test)
    assert sorted(seen) == list(range(100))


def test_kfold_uneven_split():
    plan = kfold(10, 3, 0.2, Rng(1))
    sizes = [len(test) for _, _, test in plan]
    assert sorted(sizes) == [3, 3, 4]
    union = sorted(i for _, _, test in plan for i in test)
    assert union == list(range(10))


def test_kfold_val_at_least_one():
    plan = kfold(6, 3, 0.01, Rng(2))
    for train, val, _ in plan:
        assert len(val) == 1
        assert len(train) == 3


def test_kfold_same_seed_identical():
    a = kfold(50, 5, 0.1, Rng(7))
    b = kfold(50, 5, 0.1, Rng(7))
    assert a.folds == b.folds


def test_kfold_rejects_bad_f():
    with pytest.raises(DataError):
        kfold(10, 1, 0.1, Rng(0))
    with pytest.raises(DataError):
        kfold(3, 4, 0.1, Rng(0))


def test_moons_shape_and_balance():
    ds = make_moons(rng=Rng(3))
    assert ds.N == 1000 and ds.m == 2 and ds.c == 2
    n1 = sum(ds.y)
    assert abs((ds.N - n1) - n1) <= 1


def test_moons_noise_free_geometry():
    ds = make_moons(n=200, noise=0.0)
    for i in range(ds.N):
        x, y = ds.X.get(i, 0), ds.X.get(i, 1)
        if ds.y[i] == 0:
            r = math.hypot(x, y)
            assert y >= -1e-12
        else:
            r = math.hypot(x - 1.0, y - 0.5)
            assert y <= 0.5 + 1e-12
        assert abs(r - 1.0) < 1e-12


def test_moons_noise_statistics():
    ds = make_moons(n=4000, noise=0.05, rng=Rng(4))
    clean = make_moons(n=4000, noise=0.0)
    dev = [ds.X.get(i, 0) - clean.X.get(i, 0) for i in range(ds.N)]
    mean = sum(dev) / len(dev)
    var = sum((d - mean) ** 2 for d in dev) / len(dev)
    assert abs(mean) < 0.005
    assert abs(math.sqrt(var) - 0.05) < 0.005


def test_moons_rejects_tiny_n():
    with pytest.raises(DataError):
        make_moons(n=1)


def test_xor_split_sizes():
    train, test = make_xor_gaussians(Rng(5))
    assert train.N == 180 and test.N == 20
    assert train.m == 2 and train.c == 2
    assert set(train.classes) == {"1", "2"}


def test_xor_component_statistics():
    train, test = make_xor_gaussians(Rng(6), per_component=500, test_frac=0.0)
    assert train.N == 2000
    # group points by quadrant of their generating mean
    sums = {}
    counts = {}
    for i in range(train.N):
        x, y = train.X.get(i, 0), train.X.get(i, 1)
        q = (x > 0, y > 0)
        sums.setdefault(q, [0.0, 0.0])
        sums[q][0] += x
        sums[q][1] += y
        counts[q] = counts.get(q, 0) + 1
    for (qx, qy), (sx, sy) in sums.items():
        cnt = counts[(qx, qy)]
        ex = 1.0 if qx else -1.0
        ey = 1.0 if qy else -1.0
        # quadrant-conditioned means shrink toward the axes, so allow slack
        assert abs(sx / cnt - ex) < 0.25
        assert abs(sy / cnt - ey) < 0.25
    xs = [train.X.get(i, 0) for i in range(train.N)]
    mean = sum(xs) / len(xs)
    # per-coordinate variance of the mixture is 0.3 + 1 (means at +-1)
    var = sum((v - mean) ** 2 for v in xs) / len(xs)
    assert 1.0 < var < 1.6


def test_xor_labels_follow_quadrant_parity():
    train, _ = make_xor_gaussians(Rng(8), per_component=200, test_frac=0.0)
    agree = 0
    for i in range(train.N):
        x, y = train.X.get(i, 0), train.X.get(i, 1)
        pred = 0 if x * y > 0 else 1
        agree += pred == train.y[i]
    # the known best decision rule gets roughly 93 percent right
    assert agree / train.N > 0.85
