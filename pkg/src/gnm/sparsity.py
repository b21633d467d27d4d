"""Threshold pruning, CSR inference and structure recovery.

After L1 training most trainable entries sit near zero; pruning them exposes
the effective wiring.  The structure report tells which nodes still matter
(reachable from inputs or bias AND able to reach an output through the
step-ordered nonzeros) and recognizes when the survivor is a plain layered
network.
"""

from array import array
from math import isfinite

from . import _kernels
from .errors import ConfigError, NumericError, ShapeError
from .linalg import Matrix, Vector
from .model import AdjacencyTensor, _step_mask


class SparseMatrix:
    """Compressed sparse row storage; reconstructs its dense source exactly."""

    __slots__ = ("rows", "cols", "indptr", "indices", "values")

    def __init__(self, rows, cols, indptr, indices, values):
        self.rows = rows
        self.cols = cols
        self.indptr = indptr
        self.indices = indices
        self.values = values

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> Matrix:
        out = Matrix(self.rows, self.cols)
        od = out.data
        for i in range(self.rows):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                od[i * self.cols + self.indices[p]] = self.values[p]
        return out


def to_sparse(a: Matrix) -> SparseMatrix:
    indptr = array("i", [0] * (a.rows + 1))
    indices = array("i")
    values = array("d")
    ad = a.data
    for i in range(a.rows):
        base = i * a.cols
        for j in range(a.cols):
            v = ad[base + j]
            if v != 0.0:
                indices.append(j)
                values.append(v)
        indptr[i + 1] = len(values)
    return SparseMatrix(a.rows, a.cols, indptr, indices, values)


def sparse_matvec(s: SparseMatrix, x: Vector) -> Vector:
    if s.cols != len(x):
        raise ShapeError(f"sparse_matvec: {s.rows}x{s.cols} with vector of {len(x)}")
    out = Vector(s.rows)
    _kernels.csr_matvec(s.indptr, s.indices, s.values, x.data, out.data, s.rows)
    return out


def prune(a: AdjacencyTensor, tau: float) -> AdjacencyTensor:
    """Zero trainable entries with |value| < tau (strict); bias row untouched."""
    if tau < 0.0:
        raise ConfigError("pruning threshold must be >= 0")
    out = a.copy()
    n, b = out.n, out.bias_row
    for mat in out.mats:
        md = mat.data
        for i in range(n):
            if i == b:
                continue
            base = i * n
            for j in range(n):
                if -tau < md[base + j] < tau:
                    md[base + j] = 0.0
    return out


def sparse_forward(a: AdjacencyTensor, h0: Vector, f: str = "relu") -> Vector:
    """Forward pass over CSR matrices; same step semantics as the dense engine."""
    n = a.n
    if len(h0) != n:
        raise ShapeError(f"h0 length {len(h0)} != n {n}")
    bias_row = a.bias_row
    h = array("d", h0.data)
    for k in range(1, a.K + 1):
        s = to_sparse(a.mats[k - 1])
        z = Vector(n)
        _kernels.csr_matvec(s.indptr, s.indices, s.values, h, z.data, n)
        mask = _step_mask(a, k, f)
        nh = array("d", bytes(8 * n))
        for i in range(n):
            v = z[i]
            if not isfinite(v):
                raise NumericError("non-finite features in sparse forward", step=k)
            nh[i] = (v if v > 0.0 else 0.0) if mask[i] else v
        nh[bias_row] = 1.0
        h = nh
    c = a.part.c
    return Vector(array("d", h[n - c:]))


class StructureReport:
    """What survives pruning: per-step positions, live nodes, layer shape.

    positions[k-1] lists the (row, col) nonzeros of step k outside the bias
    row, sorted.  A node is live when some step-k feature of it is both
    influenced by inputs/bias and consumed by an output.  widths holds the
    per-step live fan-out sizes when the live edges form a strict layering
    (sources of step k all updated at step k-1, bias always allowed),
    otherwise None.
    """

    __slots__ = ("K", "n", "bias_row", "positions", "live", "widths")

    def __init__(self, K, n, bias_row, positions, live, widths):
        self.K = K
        self.n = n
        self.bias_row = bias_row
        self.positions = positions
        self.live = live
        self.widths = widths

    def live_hidden(self, part) -> list:
        return [v for v in self.live if v in part.hidden_indices()]

    def render(self) -> str:
        lines = []
        for k in range(self.K):
            cells = " ".join(f"({i},{j})" for i, j in self.positions[k])
            lines.append(f"{k + 1}: {cells}")
        lines.append("live: " + " ".join(str(v) for v in self.live))
        if self.widths is None:
            lines.append("widths: not layered")
        else:
            lines.append("widths: " + ",".join(str(w) for w in self.widths))
        return "\n".join(lines)


def extract_structure(a: AdjacencyTensor) -> StructureReport:
    """Positions, liveness and layered-shape detection for a pruned tensor."""
    n, K, b = a.n, a.K, a.bias_row
    part = a.part
    positions = []
    for mat in a.mats:
        md = mat.data
        pos = [(i, j) for i in range(n) if i != b
               for j in range(n) if md[i * n + j] != 0.0]
        positions.append(pos)

    inputs = set(part.input_indices())
    outputs = set(part.output_indices())

    # forward influence per step: R[k] = nodes whose step-k feature depends
    # on the annotation (inputs or the pinned bias)
    R = [inputs | {b}]
    for k in range(K):
        cur = {b}
        prev = R[-1]
        for i, j in positions[k]:
            if j in prev:
                cur.add(i)
        R.append(cur)

    # co-reachability per step: T[k] = nodes whose step-k feature can still
    # reach an output
    T = [set() for _ in range(K + 1)]
    T[K] = set(outputs)
    for k in range(K, 0, -1):
        back = set()
        nxt = T[k]
        for i, j in positions[k - 1]:
            if i in nxt:
                back.add(j)
        T[k - 1] = back

    # the bias node is a constant source; it is never listed as live itself
    live = sorted(set().union(*(R[k] & T[k] for k in range(K + 1))) - {b})

    # layered check over live edges only
    U = [set(inputs)]
    layered = True
    for k in range(1, K + 1):
        edges = [(i, j) for i, j in positions[k - 1]
                 if j in R[k - 1] and i in T[k]]
        sources = {j for _, j in edges}
        if not sources <= U[k - 1] | {b}:
            layered = False
            break
        U.append({i for i, _ in edges})
    widths = [len(u) for u in U[1:K]] if layered else None
    return StructureReport(K, n, b, positions, live, widths)
