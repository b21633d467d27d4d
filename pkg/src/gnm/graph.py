"""Graph structures: the near-complete digraph and the layered MLP DAG.

Both share one fixed node index layout: inputs first, then hidden nodes,
then bias node(s), outputs in the final ``c`` positions.  All serialization
and reporting assumes this layout.
"""

from .errors import ShapeError


class NodePartition:
    """Disjoint node groups (inputs, hidden, bias, outputs) under the fixed layout."""

    __slots__ = ("m", "hidden", "bias", "c")

    def __init__(self, m: int, hidden: int, bias: int, c: int):
        if m < 1 or c < 1:
            raise ShapeError("need at least one input and one output node")
        if hidden < 0 or bias < 0:
            raise ShapeError("negative node counts")
        self.m = m
        self.hidden = hidden
        self.bias = bias
        self.c = c

    @property
    def n(self) -> int:
        return self.m + self.hidden + self.bias + self.c

    def input_indices(self) -> range:
        return range(0, self.m)

    def hidden_indices(self) -> range:
        return range(self.m, self.m + self.hidden)

    def bias_indices(self) -> range:
        base = self.m + self.hidden
        return range(base, base + self.bias)

    def output_indices(self) -> range:
        return range(self.n - self.c, self.n)

    def __eq__(self, other):
        return (
            isinstance(other, NodePartition)
            and (self.m, self.hidden, self.bias, self.c)
            == (other.m, other.hidden, other.bias, other.c)
        )

    def __repr__(self):
        return (
            f"NodePartition(m={self.m}, hidden={self.hidden}, "
            f"bias={self.bias}, c={self.c})"
        )


class GnmGraph:
    """Complete-with-self-loops digraph over non-bias nodes plus a bias source.

    The single bias node fans out to every other node and receives no edges;
    its adjacency row is fixed, so the trainable mask is true everywhere
    except that row.
    """

    __slots__ = ("part", "trainable_mask")

    def __init__(self, part: NodePartition):
        if part.bias != 1:
            raise ShapeError("GnmGraph requires exactly one bias node")
        self.part = part
        n = part.n
        mask = bytearray(b"\x01" * (n * n))
        b = self.bias_index
        mask[b * n:(b + 1) * n] = bytes(n)
        self.trainable_mask = mask

    @property
    def n(self) -> int:
        return self.part.n

    @property
    def bias_index(self) -> int:
        return self.part.m + self.part.hidden

    def trainable(self, i: int, j: int) -> bool:
        return bool(self.trainable_mask[i * self.n + j])

    def trainable_count(self) -> int:
        return (self.n - 1) * self.n

    def in_degree(self, v: int) -> int:
        # bias receives nothing; everyone else hears from all n nodes
        return 0 if v == self.bias_index else self.n

    def __repr__(self):
        p = self.part
        return f"GnmGraph(m={p.m}, hidden={p.hidden}, c={p.c}, n={p.n})"


def build_gnm_graph(m: int, hidden: int, c: int) -> GnmGraph:
    return GnmGraph(NodePartition(m, hidden, 1, c))


class MlpGraph:
    """Layered DAG of a K-layer MLP with one bias node per layer.

    Layers: 0 = inputs, 1..K-1 = hidden, K = outputs.  ``bias_nodes[t-1]``
    feeds layer t.  In-edges of each node are ordered previous layer
    ascending, bias last; forward passes accumulate in exactly that order.
    """

    __slots__ = ("part", "m", "widths", "c", "layers", "bias_nodes", "in_edges")

    def __init__(self, m: int, widths, c: int):
        widths = tuple(widths)
        if any(w < 1 for w in widths):
            raise ShapeError("hidden layer widths must be >= 1")
        K = len(widths) + 1
        hidden = sum(widths)
        self.part = NodePartition(m, hidden, K, c)
        self.m = m
        self.widths = widths
        self.c = c

        layers = [list(range(m))]
        base = m
        for w in widths:
            layers.append(list(range(base, base + w)))
            base += w
        bias_base = m + hidden
        self.bias_nodes = [bias_base + t for t in range(K)]
        out_base = bias_base + K
        layers.append(list(range(out_base, out_base + c)))
        self.layers = layers

        in_edges = {}
        for t in range(1, K + 1):
            bias = self.bias_nodes[t - 1]
            for v in layers[t]:
                in_edges[v] = list(layers[t - 1]) + [bias]
        self.in_edges = in_edges

    @property
    def K(self) -> int:
        return len(self.widths) + 1

    @property
    def n(self) -> int:
        return self.part.n

    def edge_list(self) -> list:
        edges = []
        for t in range(1, self.K + 1):
            for v in self.layers[t]:
                edges.extend((u, v) for u in self.in_edges[v])
        return edges

    def __repr__(self):
        return f"MlpGraph(m={self.m}, widths={self.widths}, c={self.c})"


def build_mlp_graph(m: int, widths, c: int) -> MlpGraph:
    return MlpGraph(m, widths, c)


def topological_layers(g: MlpGraph) -> list:
    """Node sets in asynchronous update order.

    Stage t makes the features of layer t+1's sources available: inputs and
    the first bias node come first, each hidden layer arrives with the bias
    node of the next layer, outputs close the list.
    """
    stages = [set(g.layers[0]) | {g.bias_nodes[0]}]
    for t in range(1, g.K):
        stages.append(set(g.layers[t]) | {g.bias_nodes[t]})
    stages.append(set(g.layers[g.K]))
    return stages
