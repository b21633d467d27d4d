"""Command-line surface: train, cv, verify, xor, bench, prune, eval.

Flags can come from a flat key=value config file (--config); explicit
command-line flags win.  Exit codes: 0 success, 1 failed check or runtime
error, 2 usage problems.
"""

import argparse
import os
import sys
from array import array
from concurrent.futures import ThreadPoolExecutor
from math import log

from . import _kernels
from .data import (Dataset, Standardizer, kfold, load_csv, make_moons,
                   make_xor_gaussians, standardize)
from .errors import ConfigError, GnmError
from .graph import build_mlp_graph
from .linalg import Matrix, Rng, Vector, derive_seed
from .metrics import EvalReport, accuracy, argmax_columns, macro_f1, mse, r2
from .model import (GnmModel, MlpModel, annotate_input, embed_mlp,
                    gnm_forward, gnm_param_count, gnn_mlp_forward, init_mlp,
                    mlp_forward, mlp_param_count, transcribe_mlp_weights)
from .modelfile import load_model, save_model
from .sparsity import extract_structure, prune
from .train import DROPOUT_GRID, LR_GRID, Splits, TrainConfig, train

CONFIG_KEYS = {
    "model": str, "data": str, "nodes": int, "hidden": str, "layers": int,
    "lr": float, "epochs": int, "batch_size": int, "dropout": float,
    "l1": float, "seed": int, "threads": int, "noise": float, "folds": int,
    "tau": float, "checks": int, "budget": int, "task": str, "target": str,
    "out": str, "grid": int,
}

DEFAULTS = {
    "model": "gnm", "data": "moons", "nodes": 50, "hidden": "", "layers": 2,
    "lr": 0.01, "epochs": 300, "batch_size": 64, "dropout": 0.0, "l1": 0.0,
    "seed": 0, "threads": 1, "noise": 0.1, "folds": 10, "tau": 1e-3,
    "checks": 10, "budget": 0, "task": "", "target": "", "out": "", "grid": 0,
}

XOR_L1_DEFAULT = 0.008
# After the main run, training continues at a tiny step size so that weights
# the penalty has killed settle well below the prune threshold instead of
# bouncing around it with amplitude proportional to the learning rate.
XOR_SETTLE_LR = 1e-4
XOR_SETTLE_EPOCHS = 800


def read_config(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](raw.strip())
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: bad value for {key!r}: {raw.strip()!r}"
                ) from None
    return values


def _add_shared(p):
    p.add_argument("--model", choices=("gnm", "mlp", "both"), default=None)
    p.add_argument("--data", default=None, metavar="PATH|moons|xor")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--hidden", default=None, metavar="W1,W2,...")
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--l1", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--task", choices=("classification", "regression"), default=None)
    p.add_argument("--target", default=None, metavar="COLUMN")
    p.add_argument("--budget", type=int, default=None, metavar="PARAMS")
    p.add_argument("--out", default=None, metavar="DIR")
    p.add_argument("--config", default=None, metavar="FILE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnm",
        description="Train, verify and dissect dense message-passing models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model and write it out")
    _add_shared(p)

    p = sub.add_parser("cv", help="10-fold cross-validation table")
    _add_shared(p)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--grid", action="store_true", default=None,
                   help="per-fold search over the lr/dropout grids")

    p = sub.add_parser("verify", help="equivalence checks against the MLP")
    _add_shared(p)
    p.add_argument("--checks", type=int, default=None)
    p.add_argument("--corrupt-embedding", action="store_true",
                   dest="corrupt_embedding", help=argparse.SUPPRESS)

    p = sub.add_parser("xor", help="four-Gaussian XOR: train, prune, report")
    _add_shared(p)
    p.add_argument("--tau", type=float, default=None)

    p = sub.add_parser("bench", help="epoch-time scaling over node counts")
    _add_shared(p)
    p.add_argument("--sizes", default="50,100,200,400,800")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--kdouble", action="store_true",
                   help="also time K=2 vs K=4 at n=400")
    p.add_argument("--compare-backends", action="store_true",
                   dest="compare_backends",
                   help="time every available kernel backend")

    p = sub.add_parser("prune", help="threshold-prune a saved model")
    _add_shared(p)
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--tau", type=float, default=None)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    _add_shared(p)
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--scaler", default=None,
                   help="per-column mean/scale CSV written by train")
    return parser


def resolve(args, **base) -> dict:
    """defaults (plus subcommand overrides) < config file < explicit flags."""
    s = dict(DEFAULTS)
    s.update(base)
    if getattr(args, "config", None):
        s.update(read_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    s["grid"] = bool(s["grid"])
    return s


def _out_dir(s) -> str:
    out = s["out"] or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_dataset(s):
    name = s["data"]
    if name == "moons":
        return make_moons(1000, s["noise"], Rng(derive_seed(s["seed"], "moons")))
    if name == "xor":
        raise ConfigError("the xor generator is driven by the 'xor' subcommand")
    return load_csv(name, target=s["target"] or None, task=s["task"] or None)


def _report_rejects(ds: Dataset) -> None:
    if ds.rejected:
        print(f"rejected {len(ds.rejected)} rows:")
        for lineno, reason in ds.rejected[:10]:
            print(f"  line {lineno}: {reason}")


def _hidden_widths(s, m: int, c: int):
    if s["hidden"]:
        widths = tuple(int(w) for w in s["hidden"].split(","))
    else:
        widths = (16,) * max(1, s["layers"] - 1)
    if s["budget"] > 0:
        K = len(widths) + 1
        w = 1
        while mlp_param_count(m, (w + 1,) * (K - 1), c) <= s["budget"]:
            w += 1
        widths = (w,) * (K - 1)
    return widths


def _gnm_nodes(s, m: int, c: int) -> int:
    n = s["nodes"]
    if s["budget"] > 0:
        K = s["layers"]
        n = m + c + 1
        while gnm_param_count(n + 1, K) <= s["budget"]:
            n += 1
    if n < m + c + 1:
        raise ConfigError(f"--nodes {n} too small: need at least {m + c + 1}")
    return n


def _build_model(kind: str, s, ds, rng: Rng):
    m, c = ds.m, ds.c
    if kind == "gnm":
        n = _gnm_nodes(s, m, c)
        return GnmModel.build(m, n - m - 1 - c, c, s["layers"], rng)
    return MlpModel.build(m, _hidden_widths(s, m, c), c, rng)


def _train_cfg(s, task: str, n: int = 0, **over) -> TrainConfig:
    kw = dict(task=task, epochs=s["epochs"], batch_size=s["batch_size"],
              lr=s["lr"], l1_lambda=s["l1"], dropout_p=s["dropout"],
              seed=s["seed"], K=s["layers"], n=n)
    kw.update(over)
    return TrainConfig(**kw).validate()


def _fold_metrics(model, Xte: Matrix, yte, task: str) -> dict:
    out = model.predict_columns(model.prepare(Xte))
    if task == "classification":
        pred = argmax_columns(out)
        truth = list(yte)
        return {"accuracy": accuracy(pred, truth),
                "macro_f1": macro_f1(pred, truth, model.c)}
    B, cc = out.cols, out.rows
    pred = [out.data[i * B + j] for j in range(B) for i in range(cc)]
    truth = list(yte.data)
    return {"mse": mse(pred, truth), "r2": r2(pred, truth)}


def _holdout_split(N: int, seed: int):
    order = list(range(N))
    Rng(derive_seed(seed, "holdout")).shuffle(order)
    n_test = max(1, N // 10)
    rest = order[:N - n_test]
    n_val = max(1, len(rest) // 10)
    return rest[:-n_val], rest[-n_val:], order[N - n_test:]


def _write_scaler(path, st) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("column,mean,scale\n")
        for j, (mu, sc) in enumerate(zip(st.mean, st.scale)):
            if st.flags[j]:
                fh.write(f"{j},{mu!r},{sc!r}\n")


def cmd_train(args) -> int:
    s = resolve(args)
    out = _out_dir(s)
    if s["data"] == "xor":
        rng = Rng(derive_seed(s["seed"], "xor"))
        tr, te = make_xor_gaussians(rng)
        N = tr.N
        order = list(range(N))
        Rng(derive_seed(s["seed"], "holdout")).shuffle(order)
        n_val = max(1, N // 10)
        tr_idx, va_idx = order[:-n_val], order[-n_val:]
        ds, test_ds, te_idx = tr, te, list(range(te.N))
    else:
        ds = _load_dataset(s)
        _report_rejects(ds)
        tr_idx, va_idx, te_idx = _holdout_split(ds.N, s["seed"])
        test_ds = ds

    st = standardize(tr_idx, ds)
    dz = ds.with_X(st.apply(ds.X))
    test_z = test_ds.with_X(st.apply(test_ds.X)) if test_ds is not ds else dz

    kind = "gnm" if s["model"] == "both" else s["model"]
    model = _build_model(kind, s, ds, Rng(derive_seed(s["seed"], "init", kind)))
    cfg = _train_cfg(s, ds.task, n=model.tensor.n if kind == "gnm" else 0)
    Xtr, ytr = dz.subset(tr_idx)
    Xva, yva = dz.subset(va_idx)
    best, history = train(model, Splits(Xtr, ytr, Xva, yva), cfg)

    save_model(best, os.path.join(out, f"{kind}_model.bin"))
    with open(os.path.join(out, "history.csv"), "w", encoding="utf-8") as fh:
        history.to_csv(fh)
    _write_scaler(os.path.join(out, "scaler.csv"), st)

    Xte, yte = test_z.subset(te_idx)
    report = EvalReport(ds.task, [_fold_metrics(best, Xte, yte, ds.task)])
    print(report.render(kind))
    return 0


def _run_fold(ds, fold, kind, s, f):
    tr_idx, va_idx, te_idx = fold
    st = standardize(tr_idx, ds)
    dz = ds.with_X(st.apply(ds.X))
    Xtr, ytr = dz.subset(tr_idx)
    Xva, yva = dz.subset(va_idx)
    Xte, yte = dz.subset(te_idx)
    combos = [(lr, dp) for lr in LR_GRID for dp in DROPOUT_GRID] if s["grid"] \
        else [(s["lr"], s["dropout"])]
    best_model, best_val = None, float("inf")
    for lr, dp in combos:
        model = _build_model(kind, s, ds,
                             Rng(derive_seed(s["seed"], "init", kind, f)))
        cfg = _train_cfg(s, ds.task, lr=lr, dropout_p=dp,
                         seed=derive_seed(s["seed"], kind, f))
        cand, history = train(model, Splits(Xtr, ytr, Xva, yva), cfg)
        if history.best_val_loss < best_val or best_model is None:
            best_model, best_val = cand, history.best_val_loss
    return _fold_metrics(best_model, Xte, yte, ds.task)


def cmd_cv(args) -> int:
    s = resolve(args)
    ds = _load_dataset(s)
    _report_rejects(ds)
    if ds.N < s["folds"]:
        raise ConfigError(f"{s['folds']} folds need at least that many samples")
    plan = kfold(ds.N, s["folds"], 0.1,
                 Rng(derive_seed(s["seed"], "folds")), s["seed"])
    kinds = ("gnm", "mlp") if s["model"] == "both" else (s["model"],)

    reports = {}
    for kind in kinds:
        if s["threads"] > 1:
            with ThreadPoolExecutor(max_workers=s["threads"]) as pool:
                rows = list(pool.map(
                    lambda ff: _run_fold(ds, plan.folds[ff], kind, s, ff),
                    range(plan.F)))
        else:
            rows = [_run_fold(ds, plan.folds[f], kind, s, f)
                    for f in range(plan.F)]
        reports[kind] = EvalReport(ds.task, rows)

    first = reports[kinds[0]]
    names = first.metric_names
    print(f"{'':<10}" + "".join(f"{n:>18}" for n in names))
    for kind in kinds:
        rep = reports[kind]
        print(f"{kind:<10}" + "".join(f"{rep._cell(n):>18}" for n in names))
    out = s["out"]
    if out:
        os.makedirs(out, exist_ok=True)
        for kind in kinds:
            with open(os.path.join(out, f"cv_{kind}.csv"), "w",
                      encoding="utf-8") as fh:
                reports[kind].to_csv(fh)
    return 0


def cmd_verify(args) -> int:
    s = resolve(args)
    checks = s["checks"]
    worst1 = worst2 = 0.0
    bad_seed = None
    for r in range(checks):
        rng = Rng(derive_seed(s["seed"], "verify", r))
        m = 1 + rng.randbelow(8)
        K = 2 + rng.randbelow(3)
        widths = tuple(1 + rng.randbelow(16) for _ in range(K - 1))
        c = 1 + rng.randbelow(4)
        spec = init_mlp(m, widths, c, rng)
        g_mlp = build_mlp_graph(m, widths, c)
        weights = transcribe_mlp_weights(g_mlp, spec)
        g_gnm, tensor = embed_mlp(spec)
        if getattr(args, "corrupt_embedding", False):
            row = tensor.update_sets[0][0]
            tensor.mats[0].set(row, 0, tensor.mats[0].get(row, 0) + 1e-3)
        for _ in range(100):
            x = Vector(array("d", (rng.normal() for _ in range(m))))
            ref = mlp_forward(spec, x)
            got1 = gnn_mlp_forward(g_mlp, weights, x)
            got2, _ = gnm_forward(tensor, annotate_input(g_gnm, x))
            d1 = max(abs(a - b) for a, b in zip(ref, got1))
            d2 = max(abs(a - b) for a, b in zip(ref, got2))
            if d1 > worst1:
                worst1 = d1
            if d2 > worst2:
                worst2 = d2
            if (d1 > 1e-9 or d2 > 1e-9) and bad_seed is None:
                bad_seed = derive_seed(s["seed"], "verify", r)
    print(f"dag-vs-mlp max |delta| = {worst1:.3e}")
    print(f"embedding-vs-mlp max |delta| = {worst2:.3e}")
    if worst1 > 1e-9 or worst2 > 1e-9:
        print(f"FAIL: deviation above 1e-9 (seed {bad_seed})")
        return 1
    print(f"OK: {checks} specs x 100 inputs within 1e-9")
    return 0


def cmd_xor(args) -> int:
    s = resolve(args, l1=XOR_L1_DEFAULT)
    # One fixed draw of the four-Gaussian sample; --seed varies initialization
    # and training, so repeated runs probe the optimizer rather than the data.
    rng = Rng(derive_seed(0, "xor-data"))
    tr, te = make_xor_gaussians(rng)

    order = list(range(tr.N))
    Rng(derive_seed(s["seed"], "holdout")).shuffle(order)
    n_val = max(1, tr.N // 10)
    tr_idx, va_idx = order[:-n_val], order[-n_val:]

    st = standardize(tr_idx, tr)
    trz = tr.with_X(st.apply(tr.X))
    tez = te.with_X(st.apply(te.X))

    model = _build_model("gnm", s, tr, Rng(derive_seed(s["seed"], "init", "gnm")))
    cfg = _train_cfg(s, "classification", n=model.tensor.n)
    Xtr, ytr = trz.subset(tr_idx)
    Xva, yva = trz.subset(va_idx)
    splits = Splits(Xtr, ytr, Xva, yva)
    best, _ = train(model, splits, cfg)

    # Settle phase: keep optimizing the snapshot at a tiny step size and take
    # the final state, so pruned-away weights end up parked near zero.
    settle_cfg = _train_cfg(s, "classification", n=model.tensor.n,
                            lr=XOR_SETTLE_LR, epochs=XOR_SETTLE_EPOCHS)
    train(best, splits, settle_cfg)

    Xte, yte = tez.subset(list(range(te.N)))
    dense_acc = _fold_metrics(best, Xte, yte, "classification")["accuracy"]

    pruned = prune(best.tensor, s["tau"])
    pruned_model = GnmModel(best.graph, pruned, best.activation)
    pruned_acc = _fold_metrics(pruned_model, Xte, yte, "classification")["accuracy"]

    report = extract_structure(pruned)
    live_hidden = report.live_hidden(pruned.part)
    print(f"test accuracy (dense):  {dense_acc * 100:.2f}%")
    print(f"test accuracy (pruned): {pruned_acc * 100:.2f}%")
    print(f"live hidden nodes: {len(live_hidden)}")
    print(report.render())
    out = s["out"]
    if out:
        os.makedirs(out, exist_ok=True)
        save_model(pruned_model, os.path.join(out, "xor_pruned.bin"))
        with open(os.path.join(out, "structure.txt"), "w", encoding="utf-8") as fh:
            fh.write(report.render() + "\n")
    return 0


def _bench_dataset(n_samples: int, m: int, rng: Rng):
    X = Matrix(n_samples, m)
    for i in range(n_samples * m):
        X.data[i] = rng.uniform(-1.0, 1.0)
    y = array("i", (rng.randbelow(2) for _ in range(n_samples)))
    return X, y


def _time_epoch(n: int, K: int, repeats: int, batch_size: int = 64) -> float:
    rng = Rng(derive_seed(1234, "bench", n, K))
    X, y = _bench_dataset(256, 4, rng)
    Xv, yv = _bench_dataset(8, 4, rng)
    base = GnmModel.build(4, n - 4 - 1 - 2, 2, K, rng)
    cfg = TrainConfig(task="classification", epochs=1,
                      batch_size=batch_size, lr=0.001, seed=99, K=K, n=n)
    best = float("inf")
    for _ in range(repeats):
        _, history = train(base.clone(), Splits(X, y, Xv, yv), cfg)
        if history.ms[0] < best:
            best = history.ms[0]
    return best


def cmd_bench(args) -> int:
    s = resolve(args)
    sizes = [int(v) for v in args.sizes.split(",")]
    backends = list(_kernels.available_backends()) if args.compare_backends \
        else [_kernels.active_backend()]
    saved = _kernels.active_backend()
    lines = ["backend,n,ms"] if args.compare_backends else ["n,ms"]
    fitted = {}
    try:
        for backend in backends:
            _kernels.use(backend)
            times = {}
            for n in sizes:
                ms = _time_epoch(n, s["layers"], args.repeats)
                times[n] = ms
                if args.compare_backends:
                    lines.append(f"{backend},{n},{ms:.3f}")
                else:
                    lines.append(f"{n},{ms:.3f}")
            big = [n for n in sizes if n >= 200]
            if len(big) >= 2:
                xs = [log(n) for n in big]
                ys = [log(times[n]) for n in big]
                mx = sum(xs) / len(xs)
                my = sum(ys) / len(ys)
                slope = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / \
                    sum((x - mx) ** 2 for x in xs)
                fitted[backend] = slope
    finally:
        _kernels.use(saved)

    for line in lines:
        print(line)
    for backend, slope in fitted.items():
        tag = f" [{backend}]" if args.compare_backends else ""
        print(f"exponent(n>=200){tag}: {slope:.3f}")
    if args.kdouble:
        t2 = _time_epoch(400, 2, args.repeats)
        t4 = _time_epoch(400, 4, args.repeats)
        print(f"K-doubling ratio at n=400: {t4 / t2:.3f}")
    out = s["out"]
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "bench.csv"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def cmd_prune(args) -> int:
    s = resolve(args)
    model = load_model(args.model_file)
    if not isinstance(model, GnmModel):
        raise ConfigError("prune only applies to the message-passing model")
    before = sum(1 for mat in model.tensor.mats for v in mat.data if v != 0.0)
    pruned = prune(model.tensor, s["tau"])
    after = sum(1 for mat in pruned.mats for v in mat.data if v != 0.0)
    report = extract_structure(pruned)
    print(f"nnz: {before} -> {after} (tau={s['tau']:g})")
    print(report.render())
    out = _out_dir(s)
    save_model(GnmModel(model.graph, pruned, model.activation),
               os.path.join(out, "pruned.bin"))
    return 0


def _read_scaler(path, m: int):
    mean = [0.0] * m
    scale = [1.0] * m
    flags = [False] * m
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "column,mean,scale":
            raise ConfigError(f"{path}: not a scaler file")
        for line in fh:
            j, mu, sc = line.strip().split(",")
            j = int(j)
            mean[j] = float(mu)
            scale[j] = float(sc)
            flags[j] = True
    return Standardizer(mean, scale, flags)


def cmd_eval(args) -> int:
    s = resolve(args)
    model = load_model(args.model_file)
    ds = _load_dataset(s)
    _report_rejects(ds)
    if args.scaler:
        st = _read_scaler(args.scaler, ds.m)
        ds = ds.with_X(st.apply(ds.X))
    X, y = ds.subset(list(range(ds.N)))
    report = EvalReport(ds.task, [_fold_metrics(model, X, y, ds.task)])
    print(report.render(model.kind))
    return 0


COMMANDS = {
    "train": cmd_train,
    "cv": cmd_cv,
    "verify": cmd_verify,
    "xor": cmd_xor,
    "bench": cmd_bench,
    "prune": cmd_prune,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (GnmError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except ValueError as err:
        # malformed numeric arguments such as --sizes "a,b"
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
