"""Dataset ingestion, splitting and the two synthetic generators.

CSV loading is deliberately strict: header required, rows with missing or
unparseable cells are dropped and reported, categorical columns become
one-hot groups.  Standardization statistics are always fit on a caller-chosen
training subset so folds never leak.
"""

import csv
from array import array
from math import ceil, cos, floor, pi, sin, sqrt

from .errors import DataError
from .linalg import Matrix, Rng


class Column:
    """One source column: name, inferred kind, categories when categorical."""

    __slots__ = ("name", "kind", "categories")

    def __init__(self, name, kind, categories=None):
        self.name = name
        self.kind = kind
        self.categories = tuple(categories) if categories is not None else None

    def __repr__(self):
        return f"Column({self.name!r}, {self.kind})"


class Dataset:
    """Expanded feature matrix plus targets and provenance metadata.

    X is N x m after one-hot expansion.  y is an int array of class indices
    for classification, an N x c matrix for regression.  ``numeric_flags``
    marks which expanded columns came from numeric sources (the ones
    standardization may touch).
    """

    __slots__ = ("X", "y", "task", "columns", "feature_names", "numeric_flags",
                 "target", "classes", "rejected")

    def __init__(self, X, y, task, columns, feature_names, numeric_flags,
                 target, classes=None, rejected=()):
        self.X = X
        self.y = y
        self.task = task
        self.columns = columns
        self.feature_names = feature_names
        self.numeric_flags = numeric_flags
        self.target = target
        self.classes = tuple(classes) if classes is not None else None
        self.rejected = list(rejected)

    @property
    def N(self) -> int:
        return self.X.rows

    @property
    def m(self) -> int:
        return self.X.cols

    @property
    def c(self) -> int:
        if self.task == "classification":
            return len(self.classes)
        return self.y.cols

    def with_X(self, X: Matrix) -> "Dataset":
        """Same metadata and targets over a replacement feature matrix."""
        if (X.rows, X.cols) != (self.X.rows, self.X.cols):
            raise DataError("replacement features must keep the same shape")
        return Dataset(X, self.y, self.task, self.columns, self.feature_names,
                       self.numeric_flags, self.target, self.classes,
                       self.rejected)

    def subset(self, indices):
        """(features, targets) restricted to the given rows, same types."""
        Xs = Matrix(len(indices), self.m)
        xd, sd = Xs.data, self.X.data
        mcols = self.m
        for r, i in enumerate(indices):
            xd[r * mcols:(r + 1) * mcols] = sd[i * mcols:(i + 1) * mcols]
        if self.task == "classification":
            ys = array("i", (self.y[i] for i in indices))
        else:
            ys = Matrix(len(indices), self.y.cols)
            yd, syd = ys.data, self.y.data
            w = self.y.cols
            for r, i in enumerate(indices):
                yd[r * w:(r + 1) * w] = syd[i * w:(i + 1) * w]
        return Xs, ys


def _numeric_dataset(rows, labels, names, task, classes, target="label"):
    m = len(names)
    X = Matrix(len(rows), m)
    flat = X.data
    for i, row in enumerate(rows):
        flat[i * m:(i + 1) * m] = array("d", row)
    cols = [Column(nm, "numeric") for nm in names]
    if task == "classification":
        y = array("i", labels)
    else:
        y = labels
    return Dataset(X, y, task, cols, list(names), [True] * m, target, classes)


def _try_float(s: str):
    try:
        return float(s)
    except ValueError:
        return None


def load_csv(path, target=None, task=None, categorical=()) -> Dataset:
    """Read a header-ed CSV into a Dataset.

    target names the target column (default: last).  task overrides the
    auto-detected kind; categorical lists feature columns to force one-hot
    even when their cells all parse as numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        raw = list(reader)

    header = [h.strip() for h in header]
    ncol = len(header)
    if target is None:
        t_idx = ncol - 1
    else:
        if target not in header:
            raise DataError(f"target column {target!r} not in header {header}")
        t_idx = header.index(target)

    rows = []
    rejected = []
    for lineno, row in enumerate(raw, start=2):
        if len(row) != ncol:
            rejected.append((lineno, f"expected {ncol} fields, got {len(row)}"))
            continue
        cells = [c.strip() for c in row]
        if any(c == "" for c in cells):
            bad = header[cells.index("")]
            rejected.append((lineno, f"missing value in column {bad!r}"))
            continue
        rows.append(cells)
    if not rows:
        raise DataError(f"{path}: no usable data rows")

    forced = set(categorical)
    kinds = []
    for j, name in enumerate(header):
        values = [r[j] for r in rows]
        numeric = all(_try_float(v) is not None for v in values)
        if name in forced and j != t_idx:
            numeric = False
        kinds.append("numeric" if numeric else "categorical")

    def sorted_cats(values):
        distinct = set(values)
        if all(_try_float(v) is not None for v in distinct):
            return sorted(distinct, key=float)
        return sorted(distinct)

    # target handling
    t_name = header[t_idx]
    t_values = [r[t_idx] for r in rows]
    if task is None:
        if kinds[t_idx] == "categorical":
            task = "classification"
        else:
            floats = [float(v) for v in t_values]
            integral = all(v == int(v) for v in floats)
            task = "classification" if integral and len(set(floats)) <= 20 \
                else "regression"
    if task not in ("classification", "regression"):
        raise DataError(f"unknown task {task!r}")
    if task == "regression" and kinds[t_idx] == "categorical":
        raise DataError(f"target {t_name!r} is categorical; cannot regress on it")

    classes = None
    if task == "classification":
        classes = sorted_cats(t_values)
        index = {v: i for i, v in enumerate(classes)}
        y = array("i", (index[v] for v in t_values))
    else:
        y = Matrix(len(rows), 1, array("d", (float(v) for v in t_values)))

    columns = []
    feature_names = []
    numeric_flags = []
    encoders = []  # (source column j, None | category value)
    for j, name in enumerate(header):
        if j == t_idx:
            continue
        if kinds[j] == "numeric":
            columns.append(Column(name, "numeric"))
            feature_names.append(name)
            numeric_flags.append(True)
            encoders.append((j, None))
        else:
            cats = sorted_cats([r[j] for r in rows])
            columns.append(Column(name, "categorical", cats))
            for cat in cats:
                feature_names.append(f"{name}={cat}")
                numeric_flags.append(False)
                encoders.append((j, cat))

    m = len(encoders)
    X = Matrix(len(rows), m)
    xd = X.data
    for i, r in enumerate(rows):
        base = i * m
        for e, (j, cat) in enumerate(encoders):
            if cat is None:
                xd[base + e] = float(r[j])
            else:
                xd[base + e] = 1.0 if r[j] == cat else 0.0

    return Dataset(X, y, task, columns, feature_names, numeric_flags,
                   t_name, classes, rejected)


class Standardizer:
    """Per-column (x - mean) / std fitted on training rows only.

    One-hot columns pass through untouched; zero-variance columns map to 0.
    """

    __slots__ = ("mean", "scale", "flags")

    def __init__(self, mean, scale, flags):
        self.mean = mean
        self.scale = scale
        self.flags = flags

    def apply(self, X: Matrix) -> Matrix:
        out = X.copy()
        od = out.data
        m = X.cols
        for j in range(m):
            if not self.flags[j]:
                continue
            mu, sc = self.mean[j], self.scale[j]
            for i in range(X.rows):
                od[i * m + j] = (od[i * m + j] - mu) * sc
        return out

    def invert(self, X: Matrix) -> Matrix:
        out = X.copy()
        od = out.data
        m = X.cols
        for j in range(m):
            if not self.flags[j]:
                continue
            mu, sc = self.mean[j], self.scale[j]
            inv = 1.0 / sc if sc != 0.0 else 0.0
            for i in range(X.rows):
                od[i * m + j] = od[i * m + j] * inv + mu
        return out


def standardize(train_idx, ds: Dataset) -> Standardizer:
    """Fit a leak-free transform on the given training rows."""
    if not len(train_idx):
        raise DataError("cannot fit standardizer on an empty index set")
    m = ds.m
    xd = ds.X.data
    count = len(train_idx)
    mean = [0.0] * m
    scale = [1.0] * m
    for j in range(m):
        if not ds.numeric_flags[j]:
            continue
        s = 0.0
        for i in train_idx:
            s += xd[i * m + j]
        mu = s / count
        var = 0.0
        for i in train_idx:
            d = xd[i * m + j] - mu
            var += d * d
        sd = sqrt(var / count)
        mean[j] = mu
        scale[j] = 1.0 / sd if sd > 0.0 else 0.0
    return Standardizer(mean, scale, list(ds.numeric_flags))


class FoldPlan:
    """Cross-validation plan: per-fold disjoint train/val/test index lists."""

    __slots__ = ("F", "folds", "seed")

    def __init__(self, F, folds, seed=None):
        self.F = F
        self.folds = folds
        self.seed = seed

    def __iter__(self):
        return iter(self.folds)


def kfold(N: int, F: int, val_frac: float, rng: Rng, seed=None) -> FoldPlan:
    """Seeded shuffle, F near-equal test blocks, validation carved from train.

    Validation gets floor(val_frac * pool) of the non-test rows, but at
    least one row so every fold remains trainable.
    """
    if F < 2:
        raise DataError("need at least 2 folds")
    if F > N:
        raise DataError(f"cannot make {F} folds from {N} samples")
    order = list(range(N))
    rng.shuffle(order)
    base, extra = divmod(N, F)
    folds = []
    start = 0
    for f in range(F):
        size = base + (1 if f < extra else 0)
        test = order[start:start + size]
        pool = order[:start] + order[start + size:]
        n_val = max(1, floor(val_frac * len(pool)))
        train = pool[:-n_val]
        val = pool[-n_val:]
        folds.append((train, val, test))
        start += size
    return FoldPlan(F, folds, seed)


def make_moons(n: int = 1000, noise: float = 0.1, rng: Rng = None) -> Dataset:
    """Two interleaved half circles with isotropic Gaussian noise.

    Class 0 on the upper unit arc (cos t, sin t), class 1 on the lower arc
    shifted to interleave: (1 - cos t, 0.5 - sin t), t spanning [0, pi].
    """
    if n < 2:
        raise DataError("need at least 2 samples")
    if rng is None:
        rng = Rng(0)
    n0 = ceil(n / 2)
    n1 = n - n0
    rows = []
    labels = []
    for i in range(n0):
        t = pi * i / (n0 - 1) if n0 > 1 else 0.0
        rows.append([cos(t), sin(t)])
        labels.append(0)
    for i in range(n1):
        t = pi * i / (n1 - 1) if n1 > 1 else 0.0
        rows.append([1.0 - cos(t), 0.5 - sin(t)])
        labels.append(1)
    if noise > 0.0:
        for row in rows:
            row[0] += rng.normal(0.0, noise)
            row[1] += rng.normal(0.0, noise)
    return _numeric_dataset(rows, labels, ["x1", "x2"], "classification",
                            ["0", "1"])


XOR_COMPONENTS = (
    ((1.0, 1.0), 0),
    ((-1.0, -1.0), 0),
    ((-1.0, 1.0), 1),
    ((1.0, -1.0), 1),
)


def make_xor_gaussians(rng: Rng, per_component: int = 50, test_frac: float = 0.1):
    """Four Gaussian blobs in XOR arrangement, split train/test.

    Each component draws ``per_component`` points with covariance 0.3*I
    (std sqrt(0.3) per axis); diagonal blobs share a class.  Returns
    (train, test) after a seeded shuffle, test taking the final fraction.
    """
    std = sqrt(0.3)
    rows = []
    labels = []
    for (mx, my), label in XOR_COMPONENTS:
        for _ in range(per_component):
            rows.append([rng.normal(mx, std), rng.normal(my, std)])
            labels.append(label)
    total = len(rows)
    order = list(range(total))
    rng.shuffle(order)
    n_test = round(total * test_frac)
    train_idx = order[:total - n_test]
    test_idx = order[total - n_test:]

    def pick(idx):
        return _numeric_dataset([rows[i] for i in idx],
                                [labels[i] for i in idx],
                                ["x1", "x2"], "classification", ["1", "2"])

    return pick(train_idx), pick(test_idx)
