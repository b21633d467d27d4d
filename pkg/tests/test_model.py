import math
from array import array

import numpy as np
import pytest

from gnm.errors import NumericError, ShapeError
from gnm.graph import build_gnm_graph, build_mlp_graph
from gnm.linalg import Matrix, Rng, Vector
from gnm.model import (
    AdjacencyTensor,
    GnmModel,
    MlpModel,
    MlpSpec,
    annotate_batch,
    annotate_input,
    embed_mlp,
    gnm_backward,
    gnm_forward,
    gnm_forward_batch,
    gnm_param_count,
    gnn_mlp_forward,
    init_gnm,
    init_mlp,
    mlp_forward,
    mlp_param_count,
    transcribe_mlp_weights,
)


def _ident_tensor(g, K):
    mats = []
    for _ in range(K):
        m = Matrix(g.n, g.n)
        for i in range(g.n):
            m.set(i, i, 1.0)
        mats.append(m)
    return AdjacencyTensor(mats, g.part)


def test_annotate_input_layout():
    g = build_gnm_graph(2, 2, 1)
    h0 = annotate_input(g, [0.5, -1.0])
    assert h0.to_list() == [0.5, -1.0, 0.0, 0.0, 1.0, 0.0]


def test_annotate_zero_input():
    g = build_gnm_graph(3, 1, 2)
    h0 = annotate_input(g, [0.0, 0.0, 0.0])
    vals = h0.to_list()
    assert vals[g.bias_index] == 1.0
    assert sum(v != 0.0 for v in vals) == 1


def test_annotate_sum_property():
    g = build_gnm_graph(3, 2, 1)
    x = [0.3, -0.8, 2.0]
    assert abs(sum(annotate_input(g, x).to_list()) - (sum(x) + 1.0)) < 1e-15


def test_identity_dynamics():
    g = build_gnm_graph(2, 2, 1)
    a = _ident_tensor(g, 3)
    out, _ = gnm_forward(a, annotate_input(g, [5.0, -3.0]), f="identity")
    # output nodes start at zero and identity matrices keep them there
    assert out.to_list() == [0.0]


def test_hand_unrolled_four_node_model():
    g = build_gnm_graph(1, 1, 1)
    a1 = Matrix.from_rows(
        [[0.5, 0, 0, 0], [1.0, 0, -0.5, 0], [0, 0, 1, 0], [0.25, 0, 0, 0]]
    )
    a2 = Matrix.from_rows(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 2.0, 1.5, -1.0]]
    )
    a = AdjacencyTensor([a1, a2], g.part)
    out, _ = gnm_forward(a, annotate_input(g, [0.8]))
    # value fixed by unrolling the two steps with an independent script
    assert abs(out[0] - 1.9) < 1e-12

    a1b = a1.copy()
    for j, v in enumerate([-2.0, 0.0, 0.5, 0.0]):
        a1b.set(1, j, v)
    ab = AdjacencyTensor([a1b, a2], g.part)
    out, _ = gnm_forward(ab, annotate_input(g, [0.8]))
    # hidden pre-activation is negative, so only bias and carry survive
    assert abs(out[0] - 1.3) < 1e-12


def test_inputs_update_during_steps():
    # in the full model input nodes are rewritten like any other node
    g = build_gnm_graph(1, 0, 1)
    a1 = Matrix.from_rows([[2.0, 0, 0], [0, 1, 0], [0, 0, 0]])
    a2 = Matrix.from_rows([[1, 0, 0], [0, 1, 0], [3.0, 0, 0]])
    a = AdjacencyTensor([a1, a2], g.part)
    out, _ = gnm_forward(a, annotate_input(g, [1.5]))
    assert abs(out[0] - 9.0) < 1e-12


def test_bias_row_rewritten_by_constructor():
    g = build_gnm_graph(2, 1, 1)
    mats = [Matrix(g.n, g.n) for _ in range(2)]
    mats[0].set(g.bias_index, 0, 7.0)  # junk that must be overwritten
    a = AdjacencyTensor(mats, g.part)
    row = [a.mats[0].get(g.bias_index, j) for j in range(g.n)]
    assert row == [0.0, 0.0, 0.0, 1.0, 0.0]


def test_bias_stays_one_through_steps():
    g = build_gnm_graph(2, 3, 2)
    rng = Rng(3)
    a = init_gnm(g, 3, rng)
    _, tape = gnm_forward(a, annotate_input(g, [0.4, -0.2]))
    for h in tape.hs:
        assert h.get(g.bias_index, 0) == 1.0


def test_forward_batch_matches_single():
    g = build_gnm_graph(2, 3, 2)
    a = init_gnm(g, 2, Rng(5))
    xs = [[0.1, -0.4], [1.2, 0.8], [-0.3, 0.0]]
    h0 = annotate_batch(g, Matrix.from_rows(xs))
    out, _ = gnm_forward_batch(a, h0)
    for s, x in enumerate(xs):
        single, _ = gnm_forward(a, annotate_input(g, x))
        for i in range(2):
            assert out.get(i, s) == single[i]


def test_forward_rejects_bad_h0():
    g = build_gnm_graph(2, 1, 1)
    a = init_gnm(g, 2, Rng(1))
    with pytest.raises(ShapeError):
        gnm_forward(a, Vector.from_list([1.0, 2.0]))
    bad = annotate_input(g, [1.0, 2.0])
    bad[g.bias_index] = 0.0
    with pytest.raises(ShapeError):
        gnm_forward(a, bad)


def test_forward_flags_nonfinite_step():
    g = build_gnm_graph(1, 1, 1)
    mats = [Matrix(g.n, g.n) for _ in range(2)]
    mats[0].set(1, 0, 1e4)  # step 1 stays finite at 1e304
    mats[1].set(3, 1, 1e308)
    a = AdjacencyTensor(mats, g.part)
    with pytest.raises(NumericError) as err:
        gnm_forward(a, annotate_input(g, [1e300]))
    assert err.value.step == 2


def test_zero_upstream_gradient():
    g = build_gnm_graph(2, 2, 1)
    a = init_gnm(g, 2, Rng(8))
    _, tape = gnm_forward(a, annotate_input(g, [0.5, 0.5]))
    grads = gnm_backward(a, tape, Vector.from_list([0.0]))
    for mat in grads.mats:
        assert all(v == 0.0 for v in mat.data)


def test_backward_bias_row_zero():
    g = build_gnm_graph(2, 3, 2)
    a = init_gnm(g, 3, Rng(9))
    _, tape = gnm_forward(a, annotate_input(g, [0.3, -0.9]))
    grads = gnm_backward(a, tape, Vector.from_list([1.0, -2.0]))
    b = g.bias_index
    for mat in grads.mats:
        assert all(mat.get(b, j) == 0.0 for j in range(g.n))


def test_gradients_match_finite_differences_small():
    g = build_gnm_graph(2, 2, 1)
    a = init_gnm(g, 2, Rng(21))
    x = [0.7, -0.3]
    dout = Vector.from_list([1.0])

    def value(t):
        out, _ = gnm_forward(t, annotate_input(g, x))
        return out[0]

    _, tape = gnm_forward(a, annotate_input(g, x))
    grads = gnm_backward(a, tape, dout)
    eps = 1e-6
    for k in range(a.K):
        for i in range(a.n):
            if i == a.bias_row:
                continue
            for j in range(a.n):
                plus = a.copy()
                plus.mats[k].set(i, j, plus.mats[k].get(i, j) + eps)
                minus = a.copy()
                minus.mats[k].set(i, j, minus.mats[k].get(i, j) - eps)
                fd = (value(plus) - value(minus)) / (2 * eps)
                an = grads.mats[k].get(i, j)
                assert abs(fd - an) <= 1e-8 + 1e-5 * abs(fd)


def test_mlp_forward_zero_weights():
    spec = MlpSpec(
        2,
        (3,),
        1,
        [Matrix(3, 2), Matrix(1, 3)],
        [Vector(3), Vector(1)],
    )
    out = mlp_forward(spec, Vector.from_list([4.0, -7.0]))
    assert out.to_list() == [0.0]


def test_mlp_forward_hand_value():
    spec = MlpSpec(
        1,
        (2,),
        1,
        [Matrix.from_rows([[1.0], [-1.0]]), Matrix.from_rows([[1.0, 1.0]])],
        [Vector(2), Vector(1)],
    )
    out = mlp_forward(spec, Vector.from_list([3.0]))
    assert out.to_list() == [3.0]


def test_dag_forward_equals_mlp_forward():
    rng = Rng(33)
    spec = init_mlp(3, (5, 4), 2, rng)
    g = build_mlp_graph(3, (5, 4), 2)
    w = transcribe_mlp_weights(g, spec)
    for _ in range(20):
        x = [rng.normal() for _ in range(3)]
        ref = mlp_forward(spec, Vector.from_list(x))
        got = gnn_mlp_forward(g, w, x)
        assert all(r == v for r, v in zip(ref, got))


def test_dag_forward_single_edge():
    g = build_mlp_graph(1, (), 1)
    src, dst = g.layers[0][0], g.layers[1][0]
    w = {(src, dst): 2.0, (g.bias_nodes[0], dst): 0.5}
    got = gnn_mlp_forward(g, w, [3.0])
    assert list(got) == [6.5]


def test_dag_forward_update_order_invariant():
    rng = Rng(40)
    spec = init_mlp(2, (4, 3), 2, rng)
    g = build_mlp_graph(2, (4, 3), 2)
    w = transcribe_mlp_weights(g, spec)
    x = [0.6, -1.1]
    base = gnn_mlp_forward(g, w, x)
    reordered = [list(reversed(g.layers[t])) for t in range(1, g.K + 1)]
    scrambled = gnn_mlp_forward(g, w, x, update_order=reordered)
    shuffled = [list(g.layers[t]) for t in range(1, g.K + 1)]
    r = Rng(4242)
    for stage in shuffled:
        r.shuffle(stage)
    third = gnn_mlp_forward(g, w, x, update_order=shuffled)
    assert list(base) == list(scrambled) == list(third)


def test_embedding_matches_mlp_everywhere():
    rng = Rng(50)
    spec = init_mlp(3, (5,), 2, rng)
    g, a = embed_mlp(spec)
    for _ in range(100):
        x = [rng.normal() for _ in range(3)]
        ref = mlp_forward(spec, Vector.from_list(x))
        out, _ = gnm_forward(a, annotate_input(g, x))
        assert max(abs(r - o) for r, o in zip(ref, out)) <= 1e-9


def test_embedding_zero_spec():
    spec = MlpSpec(
        2,
        (3,),
        1,
        [Matrix(3, 2), Matrix(1, 3)],
        [Vector(3), Vector(1)],
    )
    g, a = embed_mlp(spec)
    out, _ = gnm_forward(a, annotate_input(g, [1.0, -2.0]))
    assert out.to_list() == [0.0]


def test_embedding_block_layout():
    rng = Rng(51)
    spec = init_mlp(2, (3,), 2, rng)
    g, a = embed_mlp(spec)
    part = g.part
    b = g.bias_index
    hidden = list(range(2, 5))
    outputs = list(part.output_indices())
    # step 1: W1 block maps input coords to hidden coords, b1 in bias column
    for r, i in enumerate(hidden):
        for cidx, j in enumerate(range(2)):
            assert a.mats[0].get(i, j) == spec.weights[0].get(r, cidx)
        assert a.mats[0].get(i, b) == spec.biases[0][r]
    # carried coordinates hold a diagonal 1
    for i in list(range(2)) + outputs:
        assert a.mats[0].get(i, i) == 1.0
    # step 2: W2 block maps hidden coords to outputs, bottom-right bias 1
    for r, i in enumerate(outputs):
        for cidx, j in enumerate(hidden):
            assert a.mats[1].get(i, j) == spec.weights[1].get(r, cidx)
        assert a.mats[1].get(i, b) == spec.biases[1][r]
    assert a.mats[1].get(b, b) == 1.0
    # selective activation: step 1 refreshes the hidden coords only
    assert a.update_sets is not None
    assert set(a.update_sets[0]) == set(hidden)


def test_init_gnm_deterministic_and_bias_fixed():
    g = build_gnm_graph(2, 3, 1)
    a = init_gnm(g, 2, Rng(77))
    b = init_gnm(g, 2, Rng(77))
    for ma, mb in zip(a.mats, b.mats):
        assert ma.data == mb.data
    row = [a.mats[0].get(g.bias_index, j) for j in range(g.n)]
    assert row == [0.0] * g.bias_index + [1.0] + [0.0] * (g.n - g.bias_index - 1)


def test_init_gnm_moments():
    g = build_gnm_graph(10, 80, 10)  # n = 101
    n = g.n
    a = init_gnm(g, 1, Rng(123))
    vals = []
    b = g.bias_index
    for i in range(n):
        if i == b:
            continue
        for j in range(n):
            vals.append(a.mats[0].get(i, j))
    arr = np.array(vals)
    expect_sd = (2.0 / math.sqrt(n)) / math.sqrt(12.0)
    assert abs(arr.std() - expect_sd) / expect_sd < 0.05
    assert abs(arr.mean()) < expect_sd * 0.1
    assert arr.min() >= -1.0 / math.sqrt(n)
    assert arr.max() <= 1.0 / math.sqrt(n)


def test_param_counts():
    assert gnm_param_count(6, 2) == 2 * 5 * 6
    g = build_gnm_graph(2, 2, 1)
    model = GnmModel(g, init_gnm(g, 2, Rng(1)))
    total = sum(len(p) for p in model.params())
    assert total == 2 * 6 * 6  # stored dense, bias row included
    assert mlp_param_count(3, (5,), 2) == 3 * 5 + 5 + 5 * 2 + 2


def test_model_clone_independent():
    g = build_gnm_graph(2, 2, 1)
    model = GnmModel(g, init_gnm(g, 2, Rng(2)))
    other = model.clone()
    other.tensor.mats[0].set(0, 0, 99.0)
    assert model.tensor.mats[0].get(0, 0) != 99.0


def test_mlp_model_batch_forward_matches_single():
    spec = init_mlp(3, (4,), 2, Rng(31))
    model = MlpModel(spec)
    xs = [[0.2, -0.5, 1.0], [1.5, 0.0, -2.0]]
    cols = model.prepare(Matrix.from_rows(xs))
    out = model.predict_columns(cols)
    for s, x in enumerate(xs):
        ref = mlp_forward(spec, Vector.from_list(x))
        for i in range(2):
            assert out.get(i, s) == ref[i]
