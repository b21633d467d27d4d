"""Losses, Adam, dropout and the mini-batch training loop.

The loop is model-agnostic: anything exposing params/forward/backward the
way GnmModel and MlpModel do can be trained.  Reported losses are batch
means (the data term only; the L1 penalty steers optimization but never
model selection).
"""

import time
from array import array
from dataclasses import dataclass
from math import exp, isfinite, log

from . import _kernels
from .errors import ConfigError, DataError, NumericError, TrainingDiverged
from .linalg import Matrix, Rng, Vector, derive_seed
from .model import AdjacencyTensor, GradientSet

TASKS = ("classification", "regression")
LR_GRID = (0.01, 0.001)
DROPOUT_GRID = (0.0, 0.2)


@dataclass
class TrainConfig:
    task: str = "classification"
    epochs: int = 300
    batch_size: int = 64
    lr: float = 0.01
    l1_lambda: float = 0.0
    dropout_p: float = 0.0
    seed: int = 0
    # model geometry, carried for run configs and reports
    K: int = 2
    n: int = 0

    def validate(self) -> "TrainConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must be in [0, 1)")
        if self.l1_lambda < 0.0:
            raise ConfigError("l1_lambda must be >= 0")
        if self.lr < 0.0:
            raise ConfigError("lr must be >= 0")
        return self


class AdamState:
    """First/second moment buffers per parameter block, plus the step count."""

    __slots__ = ("m", "v", "t", "beta1", "beta2", "eps")

    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.m = [array("d", bytes(8 * len(p))) for p in params]
        self.v = [array("d", bytes(8 * len(p))) for p in params]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def _adam_apply(params, grads, state: AdamState, lr: float) -> None:
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        _kernels.adam_update(p, g, m, v, state.t, lr,
                             state.beta1, state.beta2, state.eps, len(p))


def adam_step(a: AdjacencyTensor, g: GradientSet, s: AdamState, lr: float) -> None:
    """One bias-corrected Adam update on the tensor's trainable entries."""
    n, b = a.n, a.bias_row
    for gmat in g.mats:
        _kernels.zero_row(gmat.data, b, n)
    _adam_apply([m.data for m in a.mats], [m.data for m in g.mats], s, lr)


def softmax(z: Vector) -> Vector:
    mx = max(z.data)
    exps = array("d", (exp(v - mx) for v in z.data))
    total = sum(exps)
    return Vector(array("d", (e / total for e in exps)))


def cross_entropy(outputs: Matrix, labels) -> float:
    """Mean negative log-likelihood; outputs holds one sample per row."""
    N, c = outputs.rows, outputs.cols
    if len(labels) != N:
        raise DataError(f"{N} output rows but {len(labels)} labels")
    total = 0.0
    for i in range(N):
        y = labels[i]
        if not 0 <= y < c:
            raise DataError(f"label {y} out of range for {c} classes")
        row = outputs.data[i * c:(i + 1) * c]
        mx = max(row)
        total += log(sum(exp(v - mx) for v in row)) - (row[y] - mx)
    return total / N


def mse_loss(outputs: Matrix, targets: Matrix) -> float:
    """Squared error summed over coordinates, averaged over samples."""
    if (outputs.rows, outputs.cols) != (targets.rows, targets.cols):
        raise DataError("outputs and targets differ in shape")
    total = 0.0
    for a, b in zip(outputs.data, targets.data):
        d = a - b
        total += d * d
    return total / outputs.rows


def l1_penalty(a: AdjacencyTensor, lam: float):
    """Penalty value and subgradient over trainable entries (bias row excluded)."""
    if lam < 0.0:
        raise ConfigError("l1 strength must be >= 0")
    n, b = a.n, a.bias_row
    sub = GradientSet.zeros_like(a)
    value = 0.0
    if lam != 0.0:
        for mat, smat in zip(a.mats, sub.mats):
            value += lam * _kernels.l1_sum(mat.data, n, n, b)
            _kernels.l1_add_subgrad(smat.data, mat.data, lam, n, n, b)
    return value, sub


def dropout_mask(rng: Rng, length: int, p: float, pinned=()) -> Vector:
    """Inverted-dropout mask; pinned coordinates stay 1 and consume no draws."""
    if not 0.0 <= p < 1.0:
        raise ConfigError("dropout probability must be in [0, 1)")
    mask = Vector(array("d", bytes(8 * length)))
    for i in range(length):
        mask[i] = 1.0
    if p == 0.0:
        return mask
    keep = 1.0 / (1.0 - p)
    pinned = set(pinned)
    for i in range(length):
        if i not in pinned:
            mask[i] = 0.0 if rng.random() < p else keep
    return mask


class TrainHistory:
    """Per-epoch curves: mean train data loss, validation loss, wall ms."""

    __slots__ = ("train_loss", "val_loss", "ms", "best_epoch")

    def __init__(self):
        self.train_loss = []
        self.val_loss = []
        self.ms = []
        self.best_epoch = -1

    def __len__(self):
        return len(self.train_loss)

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch] if self.best_epoch >= 0 else float("inf")

    def to_csv(self, fh) -> None:
        fh.write("epoch,train_loss,val_loss,ms\n")
        for e in range(len(self.train_loss)):
            fh.write(f"{e + 1},{self.train_loss[e]!r},{self.val_loss[e]!r},"
                     f"{self.ms[e]:.3f}\n")


class Splits:
    """Train/validation pair handed to the trainer; rows are samples."""

    __slots__ = ("X_train", "y_train", "X_val", "y_val")

    def __init__(self, X_train, y_train, X_val, y_val):
        self.X_train = X_train
        self.y_train = y_train
        self.X_val = X_val
        self.y_val = y_val


def _targets_columns(y, task: str, c: int) -> Matrix:
    # regression targets as a c x N column matrix for per-batch gathering
    if task != "regression":
        return None
    if y.cols != c:
        raise DataError(f"targets have {y.cols} columns, model emits {c}")
    return y.transpose()


def _labels_array(y, task: str, c: int):
    if task != "classification":
        return None
    labels = array("i", y)
    for v in labels:
        if not 0 <= v < c:
            raise DataError(f"label {v} out of range for {c} classes")
    return labels


def _batch_loss_grad(out: Matrix, task: str, labels, tgt_cols,
                     idx, dgrad: Matrix) -> float:
    c, B = out.rows, out.cols
    if task == "classification":
        lab = array("i", (labels[i] for i in idx))
        return _kernels.ce_loss_grad(out.data, lab, dgrad.data, c, B)
    tgt = Matrix(c, B)
    _kernels.gather_cols(tgt_cols.data, c, tgt_cols.cols, idx, B, tgt.data)
    return _kernels.mse_loss_grad(out.data, tgt.data, dgrad.data, c, B)


def evaluate_loss(model, h_cols: Matrix, y, task: str, chunk: int = 256) -> float:
    """Mean data loss in evaluation mode (no dropout), chunked over samples."""
    c = model.c
    N = h_cols.cols
    if N == 0:
        raise DataError("empty evaluation split")
    labels = _labels_array(y, task, c)
    tgt_cols = _targets_columns(y, task, c)
    total = 0.0
    dump = None
    for start in range(0, N, chunk):
        B = min(chunk, N - start)
        idx = array("i", range(start, start + B))
        hb = Matrix(h_cols.rows, B)
        _kernels.gather_cols(h_cols.data, h_cols.rows, N, idx, B, hb.data)
        out, _ = model.forward(hb)
        if dump is None or dump.cols != B:
            dump = Matrix(c, B)
        total += _batch_loss_grad(out, task, labels, tgt_cols, idx, dump)
    return total / N


def train(model, splits: Splits, cfg: TrainConfig):
    """Mini-batch training with per-epoch validation snapshots.

    Returns (best model, history) where "best" is the parameter snapshot at
    the epoch with the lowest validation data loss (earliest wins ties).
    Raises TrainingDiverged with the epoch index if anything goes non-finite.
    """
    cfg.validate()
    N = splits.X_train.rows
    if N == 0 or splits.X_val.rows == 0:
        raise DataError("training and validation splits must be nonempty")

    rng = Rng(derive_seed(cfg.seed, "train"))
    h_train = model.prepare(splits.X_train)
    h_val = model.prepare(splits.X_val)
    c = model.c
    labels = _labels_array(splits.y_train, cfg.task, c)
    tgt_cols = _targets_columns(splits.y_train, cfg.task, c)

    params = model.params()
    state = AdamState(params)
    shapes = model.param_shapes()
    skips = model.skip_rows()
    l1_idx = model.l1_param_indices() if cfg.l1_lambda > 0.0 else ()

    history = TrainHistory()
    best = model.clone()
    best_val = float("inf")
    order = list(range(N))
    n_rows = h_train.rows

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        rng.shuffle(order)
        loss_sum = 0.0
        try:
            for start in range(0, N, cfg.batch_size):
                idx = array("i", order[start:start + cfg.batch_size])
                B = len(idx)
                hb = Matrix(n_rows, B)
                _kernels.gather_cols(h_train.data, n_rows, N, idx, B, hb.data)
                out, tape = model.forward(hb, cfg.dropout_p, rng)
                dgrad = Matrix(c, B)
                loss_sum += _batch_loss_grad(out, cfg.task, labels, tgt_cols,
                                             idx, dgrad)
                grads = model.backward(tape, dgrad)
                for i in l1_idx:
                    rows, cols = shapes[i]
                    _kernels.l1_add_subgrad(grads[i], params[i],
                                            cfg.l1_lambda, rows, cols, skips[i])
                _adam_apply(params, grads, state, cfg.lr)
            train_loss = loss_sum / N
            val_loss = evaluate_loss(model, h_val, splits.y_val, cfg.task)
        except NumericError as err:
            raise TrainingDiverged(
                f"non-finite values while training: {err}", epoch=epoch
            ) from err
        if not (isfinite(train_loss) and isfinite(val_loss)):
            raise TrainingDiverged("loss went non-finite", epoch=epoch)

        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.ms.append((time.perf_counter() - t0) * 1000.0)
        if val_loss < best_val:
            best_val = val_loss
            best = model.clone()
            history.best_epoch = epoch - 1
    return best, history
