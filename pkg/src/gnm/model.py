"""Forward/backward passes and the exact MLP-to-GNM embedding.

Two model families share the kernel layer: the synchronous message-passing
model parameterized by K stacked n x n matrices, and the plain MLP used as
baseline and as the embedding source.  Batched passes stack samples as
columns, so one step is a single matrix product.
"""

from array import array
from math import isfinite, sqrt

from . import _kernels
from .errors import GnmError, NumericError, ShapeError
from .graph import GnmGraph, MlpGraph, NodePartition, build_gnm_graph
from .linalg import Matrix, Rng, Vector

ACTIVATIONS = ("relu", "identity")


def _check_activation(f: str) -> str:
    if f not in ACTIVATIONS:
        raise GnmError(f"unknown activation {f!r}; expected one of {ACTIVATIONS}")
    return f


class AdjacencyTensor:
    """K stacked n x n step matrices; mats[k].get(i, j) weights edge j -> i.

    The bias row is pinned to the unit row selecting the bias node itself
    (the constructor rewrites it, so the invariant holds for any input).
    ``update_sets``, when present, lists per step the node indices whose
    features are recomputed; all other rows carry values through unchanged.
    Produced by embeddings, absent on ordinary models.
    """

    __slots__ = ("K", "n", "mats", "part", "update_sets")

    def __init__(self, mats, part: NodePartition, update_sets=None):
        if not mats:
            raise ShapeError("need at least one step matrix")
        n = part.n
        for mat in mats:
            if mat.rows != n or mat.cols != n:
                raise ShapeError(
                    f"step matrix {mat.rows}x{mat.cols} does not match n={n}"
                )
        if part.bias != 1:
            raise ShapeError("adjacency tensor needs exactly one bias node")
        self.K = len(mats)
        self.n = n
        self.mats = list(mats)
        self.part = part
        self.update_sets = update_sets
        b = self.bias_row
        for mat in self.mats:
            _kernels.zero_row(mat.data, b, n)
            mat.data[b * n + b] = 1.0

    @property
    def bias_row(self) -> int:
        return self.part.m + self.part.hidden

    def copy(self) -> "AdjacencyTensor":
        sets = None if self.update_sets is None else [list(u) for u in self.update_sets]
        return AdjacencyTensor([m.copy() for m in self.mats], self.part, sets)

    def __repr__(self):
        return f"AdjacencyTensor(K={self.K}, n={self.n})"


class GradientSet:
    """Per-step loss gradients, same shapes as the tensor, bias rows zero."""

    __slots__ = ("mats",)

    def __init__(self, mats):
        self.mats = list(mats)

    @classmethod
    def zeros_like(cls, a: AdjacencyTensor) -> "GradientSet":
        return cls([Matrix(a.n, a.n) for _ in range(a.K)])


class ForwardTape:
    """Values recorded by a forward pass for exact backpropagation.

    hs[k] holds the (post-dropout) features after step k as an n x B matrix,
    hs[0] the initial annotation; zs[k-1] the step-k pre-activations; masks
    and drop_masks mirror exactly what the forward pass applied.
    """

    __slots__ = ("hs", "zs", "masks", "drop_masks", "bias_row", "batch")

    def __init__(self, hs, zs, masks, drop_masks, bias_row, batch):
        self.hs = hs
        self.zs = zs
        self.masks = masks
        self.drop_masks = drop_masks
        self.bias_row = bias_row
        self.batch = batch


def annotate_input(g: GnmGraph, x: Vector) -> Vector:
    if len(x) != g.part.m:
        raise ShapeError(f"expected {g.part.m} input features, got {len(x)}")
    h0 = Vector(g.n)
    for i, v in enumerate(x):
        h0[i] = v
    h0[g.bias_index] = 1.0
    return h0


def annotate_batch(g: GnmGraph, X: Matrix) -> Matrix:
    """Initial features for N samples, stacked as columns of an n x N matrix."""
    if X.cols != g.part.m:
        raise ShapeError(f"expected {g.part.m} feature columns, got {X.cols}")
    n, N = g.n, X.rows
    h0 = Matrix(n, N)
    hd, xd = h0.data, X.data
    m = g.part.m
    for s in range(N):
        base = s * m
        for j in range(m):
            hd[j * N + s] = xd[base + j]
    b = g.bias_index
    for s in range(N):
        hd[b * N + s] = 1.0
    return h0


def _step_mask(a: AdjacencyTensor, k: int, f: str) -> bytearray:
    # rows getting the activation at step k (1-based); empty for the last
    # step and for identity models
    n = a.n
    mask = bytearray(n)
    if f == "identity" or k == a.K:
        return mask
    if a.update_sets is not None:
        for i in a.update_sets[k - 1]:
            mask[i] = 1
    else:
        for i in range(n):
            mask[i] = 1
        mask[a.bias_row] = 0
    return mask


def _dropout_flat(rng: Rng, part: NodePartition, batch: int, p: float) -> array:
    # dropout touches hidden and output features only, never inputs or bias
    n = part.n
    mask = array("d", bytes(8 * n * batch))
    keep = 1.0 / (1.0 - p)
    state = array("Q", rng.state_words())
    _kernels.dropout_fill(state, mask, n, batch, part.m,
                          part.m + part.hidden, p, keep)
    rng.set_state_words(state)
    return mask


def gnm_forward_batch(a: AdjacencyTensor, h0: Matrix, f: str = "relu",
                      dropout_p: float = 0.0, rng: Rng = None):
    """Run all K steps on column-stacked samples; returns (outputs, tape).

    Outputs are the final features of the c output nodes, a c x B matrix.
    Raises NumericError (with the step index) as soon as a step produces a
    non-finite value.
    """
    _check_activation(f)
    n, B = a.n, h0.cols
    if h0.rows != n:
        raise ShapeError(f"h0 has {h0.rows} rows, tensor has n={n}")
    bias_row = a.bias_row
    train = dropout_p > 0.0 and rng is not None

    hs = [h0]
    zs = []
    masks = []
    drop_masks = []
    h = h0
    for k in range(1, a.K + 1):
        z = Matrix(n, B)
        _kernels.matmul(a.mats[k - 1].data, h.data, z.data, n, n, B)
        mask = _step_mask(a, k, f)
        nh = Matrix(n, B)
        ok = _kernels.step_activate(z.data, nh.data, n, B, mask, bias_row)
        if not ok:
            raise NumericError("non-finite features in forward pass", step=k)
        dm = None
        if train and k < a.K:
            dm = _dropout_flat(rng, a.part, B, dropout_p)
            _kernels.mul_inplace(nh.data, dm, n * B)
        zs.append(z)
        masks.append(mask)
        drop_masks.append(dm)
        hs.append(nh)
        h = nh

    c = a.part.c
    out = Matrix(c, B)
    od, hd = out.data, h.data
    for i in range(c):
        row = (n - c + i) * B
        od[i * B:(i + 1) * B] = hd[row:row + B]
    tape = ForwardTape(hs, zs, masks, drop_masks, bias_row, B)
    return out, tape


def gnm_forward(a: AdjacencyTensor, h0: Vector, f: str = "relu"):
    """Single-sample forward pass; see gnm_forward_batch."""
    if len(h0) != a.n:
        raise ShapeError(f"h0 length {len(h0)} != n {a.n}")
    if h0[a.bias_row] != 1.0:
        raise ShapeError("bias coordinate of h0 must be 1")
    col = Matrix(a.n, 1, array("d", h0.data))
    out, tape = gnm_forward_batch(a, col, f)
    return Vector(array("d", out.data)), tape


def gnm_backward_batch(a: AdjacencyTensor, tape: ForwardTape, dout: Matrix) -> GradientSet:
    """Exact gradients w.r.t. every trainable entry given d(loss)/d(outputs)."""
    n, B, c = a.n, tape.batch, a.part.c
    if dout.rows != c or dout.cols != B:
        raise ShapeError(f"dout is {dout.rows}x{dout.cols}, expected {c}x{B}")
    if len(tape.zs) != a.K:
        raise ShapeError("tape does not match tensor step count")
    bias_row = a.bias_row

    delta = Matrix(n, B)
    dd, gd = delta.data, dout.data
    for i in range(c):
        row = (n - c + i) * B
        dd[row:row + B] = gd[i * B:(i + 1) * B]

    grads = GradientSet.zeros_like(a)
    s = Matrix(n, B)
    for k in range(a.K, 0, -1):
        dm = tape.drop_masks[k - 1]
        if dm is not None:
            _kernels.mul_inplace(delta.data, dm, n * B)
        _kernels.backprop_scale(delta.data, tape.zs[k - 1].data, s.data,
                                n, B, tape.masks[k - 1], bias_row)
        gmat = grads.mats[k - 1]
        _kernels.matmul_a_bt(s.data, tape.hs[k - 1].data, gmat.data, n, B, n)
        _kernels.zero_row(gmat.data, bias_row, n)
        if k > 1:
            nd = Matrix(n, B)
            _kernels.matmul_at_b(a.mats[k - 1].data, s.data, nd.data, n, n, B)
            _kernels.zero_row(nd.data, bias_row, B)
            delta = nd
    return grads


def gnm_backward(a: AdjacencyTensor, tape: ForwardTape, dl_douts: Vector) -> GradientSet:
    if tape.batch != 1:
        raise ShapeError("tape holds a batch; use gnm_backward_batch")
    dout = Matrix(a.part.c, 1, array("d", dl_douts.data))
    return gnm_backward_batch(a, tape, dout)


class MlpSpec:
    """Weights/biases of a K-layer MLP; widths chain m -> n_1 ... -> c."""

    __slots__ = ("m", "widths", "c", "weights", "biases")

    def __init__(self, m: int, widths, c: int, weights, biases):
        widths = tuple(widths)
        dims = (m,) + widths + (c,)
        if len(weights) != len(biases) or len(weights) != len(dims) - 1:
            raise ShapeError("need one weight matrix and bias per layer")
        if len(weights) < 2:
            raise ShapeError("a multilayer perceptron needs K >= 2 layers")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.rows != dims[k + 1] or w.cols != dims[k]:
                raise ShapeError(
                    f"layer {k + 1} weights {w.rows}x{w.cols}, "
                    f"expected {dims[k + 1]}x{dims[k]}"
                )
            if len(b) != dims[k + 1]:
                raise ShapeError(f"layer {k + 1} bias length {len(b)}")
        self.m = m
        self.widths = widths
        self.c = c
        self.weights = list(weights)
        self.biases = list(biases)

    @property
    def K(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpSpec":
        return MlpSpec(self.m, self.widths, self.c,
                       [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases])


def mlp_forward(spec: MlpSpec, x: Vector, f: str = "relu") -> Vector:
    _check_activation(f)
    if len(x) != spec.m:
        raise ShapeError(f"expected {spec.m} inputs, got {len(x)}")
    h = x
    for k in range(spec.K):
        w, b = spec.weights[k], spec.biases[k]
        z = Vector(w.rows)
        _kernels.matvec(w.data, h.data, z.data, w.rows, w.cols)
        for i in range(w.rows):
            z[i] += b[i]
        if f == "relu" and k < spec.K - 1:
            for i in range(w.rows):
                if z[i] < 0.0:
                    z[i] = 0.0
        h = z
    return h


def mlp_forward_batch(spec: MlpSpec, h0: Matrix, f: str = "relu",
                      dropout_p: float = 0.0, rng: Rng = None):
    """Batched MLP pass on column-stacked samples; returns (outputs, tape)."""
    _check_activation(f)
    if h0.rows != spec.m:
        raise ShapeError(f"h0 has {h0.rows} rows, expected {spec.m}")
    B = h0.cols
    train = dropout_p > 0.0 and rng is not None
    hs = [h0]
    zs = []
    masks = []
    drop_masks = []
    h = h0
    for k in range(spec.K):
        w, b = spec.weights[k], spec.biases[k]
        z = Matrix(w.rows, B)
        _kernels.matmul(w.data, h.data, z.data, w.rows, w.cols, B)
        _kernels.add_bias_col(z.data, b.data, w.rows, B)
        last = k == spec.K - 1
        mask = bytearray(w.rows) if (last or f == "identity") \
            else bytearray(b"\x01" * w.rows)
        nh = Matrix(w.rows, B)
        ok = _kernels.step_activate(z.data, nh.data, w.rows, B, mask, -1)
        if not ok:
            raise NumericError("non-finite features in forward pass", step=k + 1)
        dm = None
        if train and not last:
            dm = array("d", bytes(8 * w.rows * B))
            keep = 1.0 / (1.0 - dropout_p)
            for i in range(w.rows * B):
                dm[i] = 0.0 if rng.random() < dropout_p else keep
            _kernels.mul_inplace(nh.data, dm, w.rows * B)
        zs.append(z)
        masks.append(mask)
        drop_masks.append(dm)
        hs.append(nh)
        h = nh
    tape = ForwardTape(hs, zs, masks, drop_masks, -1, B)
    return h, tape


def mlp_backward_batch(spec: MlpSpec, tape: ForwardTape, dout: Matrix):
    """Gradients [(dW_1, db_1), ...] given d(loss)/d(outputs), c x B."""
    B = tape.batch
    if dout.rows != spec.c or dout.cols != B:
        raise ShapeError(f"dout is {dout.rows}x{dout.cols}, expected {spec.c}x{B}")
    delta = dout
    grads = [None] * spec.K
    for k in range(spec.K - 1, -1, -1):
        w = spec.weights[k]
        dm = tape.drop_masks[k]
        if dm is not None:
            _kernels.mul_inplace(delta.data, dm, w.rows * B)
        s = Matrix(w.rows, B)
        _kernels.backprop_scale(delta.data, tape.zs[k].data, s.data,
                                w.rows, B, tape.masks[k], -1)
        dw = Matrix(w.rows, w.cols)
        _kernels.matmul_a_bt(s.data, tape.hs[k].data, dw.data, w.rows, B, w.cols)
        db = Vector(w.rows)
        _kernels.row_sums(s.data, w.rows, B, db.data)
        grads[k] = (dw, db)
        if k > 0:
            nd = Matrix(w.cols, B)
            _kernels.matmul_at_b(w.data, s.data, nd.data, w.rows, w.cols, B)
            delta = nd
    return grads


def transcribe_mlp_weights(g: MlpGraph, spec: MlpSpec) -> dict:
    """Edge weight map for the DAG pass, read off the layer matrices."""
    if (g.m, tuple(g.widths), g.c) != (spec.m, spec.widths, spec.c):
        raise ShapeError("graph and spec shapes differ")
    weights = {}
    for t in range(1, g.K + 1):
        w, b = spec.weights[t - 1], spec.biases[t - 1]
        src, dst = g.layers[t - 1], g.layers[t]
        bias = g.bias_nodes[t - 1]
        for r, v in enumerate(dst):
            for j, u in enumerate(src):
                weights[(u, v)] = w.get(r, j)
            weights[(bias, v)] = b[r]
    return weights


def gnn_mlp_forward(g: MlpGraph, weights: dict, x: Vector, f: str = "relu",
                    update_order=None) -> Vector:
    """Asynchronous layer-by-layer pass over the MLP DAG.

    Each node sums weighted predecessor features (previous layer in index
    order, bias last) and applies f except in the output layer.  The result
    does not depend on the update order inside a layer; ``update_order`` (a
    per-stage node sequence) exists so tests can demonstrate that.
    """
    _check_activation(f)
    if len(x) != g.m:
        raise ShapeError(f"expected {g.m} inputs, got {len(x)}")
    h = [0.0] * g.n
    for i, v in enumerate(x):
        h[i] = v
    for b in g.bias_nodes:
        h[b] = 1.0
    for t in range(1, g.K + 1):
        nodes = g.layers[t] if update_order is None else update_order[t - 1]
        fresh = {}
        for v in nodes:
            acc = 0.0
            for u in g.in_edges[v]:
                try:
                    acc += weights[(u, v)] * h[u]
                except KeyError:
                    raise GnmError(f"missing weight for edge ({u}, {v})") from None
            if f == "relu" and t < g.K and acc < 0.0:
                acc = 0.0
            fresh[v] = acc
        for v, val in fresh.items():
            h[v] = val
    return Vector(array("d", (h[v] for v in g.layers[g.K])))


def embed_mlp(spec: MlpSpec):
    """Exact reconstruction of an MLP inside the synchronous model.

    Step k writes layer k's affine map into the block sending layer-(k-1)
    coordinates to layer-k coordinates, puts the layer bias in the bias
    column, and carries every other node through with a diagonal 1.  The
    returned tensor's update_sets restrict the activation to the coordinates
    recomputed at each step, so raw (possibly negative) inputs survive the
    carry; outputs equal the source MLP everywhere.
    """
    hidden = sum(spec.widths)
    g = build_gnm_graph(spec.m, hidden, spec.c)
    n = g.n
    bias_col = g.bias_index

    blocks = [list(range(spec.m))]
    base = spec.m
    for w in spec.widths:
        blocks.append(list(range(base, base + w)))
        base += w
    blocks.append(list(range(n - spec.c, n)))

    mats = []
    update_sets = []
    for k in range(1, spec.K + 1):
        mat = Matrix(n, n)
        md = mat.data
        src, dst = blocks[k - 1], blocks[k]
        updated = set(dst)
        for i in range(n):
            if i not in updated and i != bias_col:
                md[i * n + i] = 1.0
        w, b = spec.weights[k - 1], spec.biases[k - 1]
        for r, i in enumerate(dst):
            for j, u in enumerate(src):
                md[i * n + u] = w.get(r, j)
            md[i * n + bias_col] = b[r]
        mats.append(mat)
        update_sets.append(list(dst))
    return g, AdjacencyTensor(mats, g.part, update_sets)


def init_gnm(g: GnmGraph, K: int, rng: Rng) -> AdjacencyTensor:
    """Fresh tensor with trainable entries ~ Uniform(-1/sqrt(n), 1/sqrt(n))."""
    if K < 1:
        raise ShapeError("need at least one step")
    n = g.n
    bound = 1.0 / sqrt(n)
    b = g.bias_index
    mats = []
    for _ in range(K):
        mat = Matrix(n, n)
        md = mat.data
        for i in range(n):
            if i == b:
                continue
            base = i * n
            for j in range(n):
                md[base + j] = -bound + 2.0 * bound * rng.random()
        mats.append(mat)
    return AdjacencyTensor(mats, g.part)


def init_mlp(m: int, widths, c: int, rng: Rng) -> MlpSpec:
    """Fresh MLP, entries ~ Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    dims = (m,) + tuple(widths) + (c,)
    weights, biases = [], []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = 1.0 / sqrt(fan_in)
        w = Matrix(fan_out, fan_in)
        for i in range(fan_out * fan_in):
            w.data[i] = -bound + 2.0 * bound * rng.random()
        b = Vector(fan_out)
        for i in range(fan_out):
            b[i] = -bound + 2.0 * bound * rng.random()
        weights.append(w)
        biases.append(b)
    return MlpSpec(m, widths, c, weights, biases)


def gnm_param_count(n: int, K: int) -> int:
    # every entry except the fixed bias row
    return K * (n - 1) * n


def mlp_param_count(m: int, widths, c: int) -> int:
    dims = (m,) + tuple(widths) + (c,)
    return sum(dims[k] * dims[k + 1] + dims[k + 1] for k in range(len(dims) - 1))


class GnmModel:
    """Trainable synchronous model: graph, tensor, and the trainer surface."""

    kind = "gnm"

    def __init__(self, graph: GnmGraph, tensor: AdjacencyTensor, activation: str = "relu"):
        if tensor.part != graph.part:
            raise ShapeError("tensor partition does not match graph")
        self.graph = graph
        self.tensor = tensor
        self.activation = _check_activation(activation)

    @classmethod
    def build(cls, m: int, hidden: int, c: int, K: int, rng: Rng,
              activation: str = "relu") -> "GnmModel":
        g = build_gnm_graph(m, hidden, c)
        return cls(g, init_gnm(g, K, rng), activation)

    @property
    def c(self) -> int:
        return self.graph.part.c

    def params(self):
        return [mat.data for mat in self.tensor.mats]

    def param_shapes(self):
        n = self.tensor.n
        return [(n, n)] * self.tensor.K

    def skip_rows(self):
        return [self.tensor.bias_row] * self.tensor.K

    def l1_param_indices(self):
        return list(range(self.tensor.K))

    def clone(self) -> "GnmModel":
        return GnmModel(self.graph, self.tensor.copy(), self.activation)

    def prepare(self, X: Matrix) -> Matrix:
        return annotate_batch(self.graph, X)

    def forward(self, h0: Matrix, dropout_p: float = 0.0, rng: Rng = None):
        return gnm_forward_batch(self.tensor, h0, self.activation, dropout_p, rng)

    def backward(self, tape: ForwardTape, dout: Matrix):
        gs = gnm_backward_batch(self.tensor, tape, dout)
        return [mat.data for mat in gs.mats]

    def predict_columns(self, h0: Matrix) -> Matrix:
        out, _ = self.forward(h0)
        return out


class MlpModel:
    """Trainable MLP with the same surface the trainer expects."""

    kind = "mlp"

    def __init__(self, spec: MlpSpec, activation: str = "relu"):
        self.spec = spec
        self.activation = _check_activation(activation)

    @classmethod
    def build(cls, m: int, widths, c: int, rng: Rng,
              activation: str = "relu") -> "MlpModel":
        return cls(init_mlp(m, widths, c, rng), activation)

    @property
    def c(self) -> int:
        return self.spec.c

    def params(self):
        out = []
        for w, b in zip(self.spec.weights, self.spec.biases):
            out.append(w.data)
            out.append(b.data)
        return out

    def param_shapes(self):
        shapes = []
        for w in self.spec.weights:
            shapes.append((w.rows, w.cols))
            shapes.append((w.rows, 1))
        return shapes

    def skip_rows(self):
        return [-1] * (2 * self.spec.K)

    def l1_param_indices(self):
        # penalty on weights only; biases are left free like the pinned
        # bias fan-out of the other model
        return [2 * k for k in range(self.spec.K)]

    def clone(self) -> "MlpModel":
        return MlpModel(self.spec.copy(), self.activation)

    def prepare(self, X: Matrix) -> Matrix:
        return X.transpose()

    def forward(self, h0: Matrix, dropout_p: float = 0.0, rng: Rng = None):
        return mlp_forward_batch(self.spec, h0, self.activation, dropout_p, rng)

    def backward(self, tape: ForwardTape, dout: Matrix):
        pairs = mlp_backward_batch(self.spec, tape, dout)
        out = []
        for dw, db in pairs:
            out.append(dw.data)
            out.append(db.data)
        return out

    def predict_columns(self, h0: Matrix) -> Matrix:
        out, _ = self.forward(h0)
        return out
