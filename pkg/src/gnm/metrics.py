"""Evaluation metrics and the fold-aggregated report."""

from math import sqrt

from .errors import DataError


def accuracy(pred, truth) -> float:
    if len(pred) != len(truth):
        raise DataError("prediction/truth length mismatch")
    if not pred:
        raise DataError("empty predictions")
    return sum(1 for p, t in zip(pred, truth) if p == t) / len(pred)


def macro_f1(pred, truth, c: int) -> float:
    """Unweighted mean of per-class F1.

    A class gets F1 = 0 when its denominator vanishes but it occurs in
    predictions or truth; classes absent from both are skipped entirely.
    """
    if len(pred) != len(truth):
        raise DataError("prediction/truth length mismatch")
    if not pred:
        raise DataError("empty predictions")
    for v in pred:
        if not 0 <= v < c:
            raise DataError(f"prediction {v} out of range for {c} classes")
    scores = []
    for cls in range(c):
        tp = fp = fn = 0
        for p, t in zip(pred, truth):
            if p == cls and t == cls:
                tp += 1
            elif p == cls:
                fp += 1
            elif t == cls:
                fn += 1
        if tp == fp == fn == 0:
            continue
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores) if scores else 0.0


def mse(pred, truth) -> float:
    if len(pred) != len(truth):
        raise DataError("prediction/truth length mismatch")
    if not len(pred):
        raise DataError("empty predictions")
    return sum((p - t) * (p - t) for p, t in zip(pred, truth)) / len(pred)


def r2(pred, truth) -> float:
    """Coefficient of determination; undefined (error) for constant truth."""
    if len(pred) != len(truth):
        raise DataError("prediction/truth length mismatch")
    if not len(pred):
        raise DataError("empty predictions")
    mean_t = sum(truth) / len(truth)
    ss_tot = sum((t - mean_t) * (t - mean_t) for t in truth)
    if ss_tot == 0.0:
        raise DataError("r2 undefined: truth values are constant")
    ss_res = sum((p - t) * (p - t) for p, t in zip(pred, truth))
    return 1.0 - ss_res / ss_tot


def argmax_columns(out) -> list:
    """Predicted class per column of a c x B logit matrix."""
    c, B = out.rows, out.cols
    od = out.data
    preds = []
    for j in range(B):
        best, arg = od[j], 0
        for i in range(1, c):
            v = od[i * B + j]
            if v > best:
                best, arg = v, i
        preds.append(arg)
    return preds


CLASSIFICATION_METRICS = ("accuracy", "macro_f1")
REGRESSION_METRICS = ("mse", "r2")


class EvalReport:
    """Per-fold metric values with mean and population std aggregation."""

    __slots__ = ("task", "fold_values")

    def __init__(self, task: str, fold_values):
        self.task = task
        self.fold_values = list(fold_values)

    @property
    def metric_names(self):
        return CLASSIFICATION_METRICS if self.task == "classification" \
            else REGRESSION_METRICS

    def values(self, name) -> list:
        return [fv[name] for fv in self.fold_values]

    def mean(self, name) -> float:
        vals = self.values(name)
        return sum(vals) / len(vals)

    def std(self, name) -> float:
        vals = self.values(name)
        mu = sum(vals) / len(vals)
        return sqrt(sum((v - mu) * (v - mu) for v in vals) / len(vals))

    def _cell(self, name) -> str:
        scale = 100.0 if self.task == "classification" else 1.0
        return f"{self.mean(name) * scale:.2f} +- {self.std(name) * scale:.2f}"

    def render(self, label: str = "model") -> str:
        names = self.metric_names
        header = f"{'':<10}" + "".join(f"{n:>18}" for n in names)
        row = f"{label:<10}" + "".join(f"{self._cell(n):>18}" for n in names)
        return header + "\n" + row

    def to_csv(self, fh) -> None:
        names = self.metric_names
        fh.write("fold," + ",".join(names) + "\n")
        for f, fv in enumerate(self.fold_values):
            fh.write(f"{f}," + ",".join(repr(fv[n]) for n in names) + "\n")
        fh.write("mean," + ",".join(repr(self.mean(n)) for n in names) + "\n")
        fh.write("std," + ",".join(repr(self.std(n)) for n in names) + "\n")
