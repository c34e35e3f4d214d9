import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergl.errors import ConfigurationError, DimensionError, UsageError
from ergl.graph import (
    EventRelationalGraph,
    GatedGCN,
    GatedGCNLayer,
    GraphEmbed,
    SceneHead,
    edge_gates,
    graph_forward,
    total_loss,
    zero_linear_weights,
)
from ergl.numerics import functional as F
from ergl.numerics.gradcheck import finite_diff_check, param_grad_check
from ergl.numerics.tensor import Tensor, shadow64


def random_graph(rng, b=2, n=3, d=64):
    return EventRelationalGraph(Tensor(rng.normal(size=(b, n, d))), Tensor(rng.normal(size=(b, n, n, d))))


def randomise_bn(module, rng):
    for name, buf in module.named_buffers():
        buf[...] = rng.uniform(0.5, 2.0, buf.shape) if "var" in name else rng.normal(size=buf.shape)
    for name, p in module.named_parameters():
        if "gamma" in name or "beta" in name:
            p.data = rng.uniform(0.5, 1.5, p.shape) if "gamma" in name else rng.normal(size=p.shape)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def layer_oracle(layer, h, e):
    """Scalar-by-scalar transcription of one eval-mode layer for a single graph."""
    n, d = h.shape
    lin = {k: (getattr(layer, k).weight.data, getattr(layer, k).bias.data) for k in "ABCUV"}

    def affine(k, x, c):
        w, bias = lin[k]
        return sum(x[r] * w[r, c] for r in range(d)) + bias[c]

    def bn(bn_mod, x, c):
        mean, var = bn_mod.running_mean[c], bn_mod.running_var[c]
        return (x - mean) / np.sqrt(var + 1e-5) * bn_mod.gamma.data[c] + bn_mod.beta.data[c]

    e_new = np.zeros_like(e)
    for i in range(n):
        for j in range(n):
            for c in range(d):
                pre = affine("A", e[i, j], c) + affine("B", h[i], c) + affine("C", h[j], c)
                e_new[i, j, c] = e[i, j, c] + max(bn(layer.bn_edge, pre, c), 0.0)
    h_new = np.zeros_like(h)
    for i in range(n):
        for c in range(d):
            denom = sum(sigmoid(e_new[i, k, c]) for k in range(n)) + 1e-6
            msg = sum(sigmoid(e_new[i, j, c]) / denom * affine("V", h[j], c) for j in range(n))
            pre = affine("U", h[i], c) + msg
            h_new[i, c] = h[i, c] + max(bn(layer.bn_node, pre, c), 0.0)
    return h_new, e_new


# ---------------------------------------------------------------- embedding


def test_graph_embed_shapes_and_zero_input():
    rng = np.random.default_rng(0)
    emb = GraphEmbed(rng)
    for n in (2, 5):
        g = emb(Tensor(rng.normal(size=(3, n, 64))), Tensor(rng.normal(size=(3, n, n, 8))))
        assert g.node_features.shape == (3, n, 64) and g.edge_features.shape == (3, n, n, 64)
    emb.node_proj.bias.data = rng.normal(size=64).astype(np.float32)
    emb.edge_proj.bias.data = rng.normal(size=64).astype(np.float32)
    g = emb(Tensor(np.zeros((1, 2, 64))), Tensor(np.zeros((1, 2, 2, 8))))
    np.testing.assert_array_equal(g.node_features.data, np.broadcast_to(emb.node_proj.bias.data, (1, 2, 64)))
    np.testing.assert_array_equal(g.edge_features.data, np.broadcast_to(emb.edge_proj.bias.data, (1, 2, 2, 64)))
    with pytest.raises(DimensionError):
        emb(Tensor(np.zeros((1, 2, 64))), Tensor(np.zeros((1, 3, 3, 8))))


def test_graph_embed_gradients():
    rng = np.random.default_rng(1)
    with shadow64():
        emb = GraphEmbed(rng)
    v, e = rng.normal(size=(2, 3, 64)), rng.normal(size=(2, 3, 3, 8))
    wn, we = rng.normal(size=(2, 3, 64)), rng.normal(size=(2, 3, 3, 64))

    def f(vt, et):
        g = emb(vt, et)
        return (g.node_features * Tensor(wn)).sum() + (g.edge_features * Tensor(we)).sum()

    assert finite_diff_check(lambda t: f(t, Tensor(e)), v) < 1e-4
    assert finite_diff_check(lambda t: f(Tensor(v), t), e) < 1e-4


# ---------------------------------------------------------------- layer


@pytest.mark.parametrize("u", [1, 2, 4])
def test_residual_identity_at_zero_init(u):
    rng = np.random.default_rng(2)
    gcn = GatedGCN(rng, u)
    for layer in gcn.layers:
        zero_linear_weights(layer)
    gcn.eval()
    g0 = random_graph(rng)
    gu = graph_forward(gcn, g0)
    assert np.array_equal(gu.node_features.data, g0.node_features.data)
    assert np.array_equal(gu.edge_features.data, g0.edge_features.data)


def test_layer_matches_scalar_oracle_n2():
    rng = np.random.default_rng(3)
    with shadow64():
        layer = GatedGCNLayer(rng)
        for k in "ABCUV":
            getattr(layer, k).bias.data = rng.normal(scale=0.1, size=64)
    randomise_bn(layer, rng)
    layer.eval()
    h, e = rng.normal(size=(2, 64)), rng.normal(size=(2, 2, 64))
    out = layer(EventRelationalGraph(Tensor(h[None]), Tensor(e[None])))
    h_ref, e_ref = layer_oracle(layer, h, e)
    np.testing.assert_allclose(out.edge_features.data[0], e_ref, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(out.node_features.data[0], h_ref, rtol=1e-10, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.floats(0.1, 50.0), st.integers(0, 2**31 - 1))
def test_gates_bounded(n, scale, seed):
    e = np.random.default_rng(seed).normal(scale=scale, size=(2, n, n, 16))
    with shadow64():
        eta = edge_gates(Tensor(e)).data
    assert np.all(eta >= 0) and np.all(eta <= 1)
    assert np.all(eta.sum(axis=2) <= 1.0)


def test_u1_equals_single_layer_and_composition():
    rng = np.random.default_rng(4)
    gcn = GatedGCN(np.random.default_rng(5), 2).eval()
    g0 = random_graph(rng)
    one = GatedGCN(np.random.default_rng(5), 1).eval()
    assert np.array_equal(one(g0).node_features.data, gcn.layers[0](g0).node_features.data)
    twice = gcn.layers[1](gcn.layers[0](g0))
    out = graph_forward(gcn, g0)
    assert np.array_equal(out.node_features.data, twice.node_features.data)
    assert np.array_equal(out.edge_features.data, twice.edge_features.data)


@pytest.mark.parametrize("training", [False, True])
def test_u8_stays_finite(training):
    rng = np.random.default_rng(6)
    gcn = GatedGCN(rng, 8).train(training)
    out = gcn(random_graph(rng, b=4, n=6))
    assert np.all(np.isfinite(out.node_features.data)) and np.all(np.isfinite(out.edge_features.data))


def test_gcn_needs_a_layer():
    with pytest.raises(ConfigurationError):
        GatedGCN(np.random.default_rng(0), 0)


def test_graph_requires_consistent_shapes():
    with pytest.raises(DimensionError):
        EventRelationalGraph(Tensor(np.zeros((1, 2, 64))), Tensor(np.zeros((1, 2, 3, 64))))


def test_layer_gradients_eval_and_train():
    for training in (False, True):
        rng = np.random.default_rng(7)
        with shadow64():
            layer = GatedGCNLayer(rng)
        layer.train(training)
        h, e = rng.normal(size=(2, 3, 64)), rng.normal(size=(2, 3, 3, 64))
        w = rng.normal(size=(2, 3, 64))

        def f(ht):
            return (layer(EventRelationalGraph(ht, Tensor(e))).node_features * Tensor(w)).sum()

        assert finite_diff_check(f, h) < 1e-4


# ---------------------------------------------------------------- scene head + loss


def test_scene_head_bias_and_shape():
    rng = np.random.default_rng(8)
    head = SceneHead(4, 10, rng).eval()
    head.fc.bias.data = rng.normal(size=10).astype(np.float32)
    g = EventRelationalGraph(Tensor(np.zeros((3, 4, 64))), Tensor(np.zeros((3, 4, 4, 64))))
    logits = head(g)
    assert logits.shape == (3, 10)
    np.testing.assert_array_equal(logits.data, np.broadcast_to(head.fc.bias.data, (3, 10)))
    with pytest.raises(UsageError):
        head(EventRelationalGraph(Tensor(np.zeros((3, 5, 64))), Tensor(np.zeros((3, 5, 5, 64)))))


def test_scene_head_concatenates_in_node_order():
    rng = np.random.default_rng(9)
    with shadow64():
        head = SceneHead(3, 4, rng)
    head.eval()
    h = rng.normal(size=(2, 3, 64))
    g = EventRelationalGraph(Tensor(h), Tensor(np.zeros((2, 3, 3, 64))))
    expected = np.concatenate([h[:, 0], h[:, 1], h[:, 2]], axis=1) @ head.fc.weight.data + head.fc.bias.data
    np.testing.assert_allclose(head(g).data, expected, rtol=1e-12)


def test_scene_head_gradient_end_to_end():
    rng = np.random.default_rng(10)
    with shadow64():
        emb, gcn, head = GraphEmbed(rng), GatedGCN(rng, 2), SceneHead(3, 4, rng)
    for m in (gcn, head):
        m.eval()
    randomise_bn(gcn, rng)
    v, e = rng.normal(size=(2, 3, 64)), rng.normal(size=(2, 3, 3, 8))
    labels = np.array([0, 3])
    assert finite_diff_check(lambda t: F.loss_ce(head(gcn(emb(t, Tensor(e)))), labels), v) < 1e-4
    errs = param_grad_check(
        lambda: F.loss_ce(head(gcn(emb(Tensor(v), Tensor(e)))), labels), head.named_parameters(), max_entries=30
    )
    assert max(errs.values()) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_joint_permutation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    with shadow64():
        gcn, head = GatedGCN(rng, 2), SceneHead(n, 5, rng)
    gcn.eval()
    head.eval()
    randomise_bn(gcn, rng)
    g = random_graph(rng, b=2, n=n)
    perm = rng.permutation(n)
    gp = EventRelationalGraph(
        Tensor(g.node_features.data[:, perm]), Tensor(g.edge_features.data[:, perm][:, :, perm])
    )
    # the head's block k must now read the node that moved to position k
    permuted_head = SceneHead(n, 5, np.random.default_rng(0))
    permuted_head.astype(np.float64).eval()
    w = head.fc.weight.data.reshape(n, 64, 5)
    permuted_head.fc.weight.data = w[perm].reshape(n * 64, 5)
    permuted_head.fc.bias.data = head.fc.bias.data.copy()
    np.testing.assert_allclose(permuted_head(gcn(gp)).data, head(gcn(g)).data, atol=1e-5)


def test_total_loss_is_unweighted_sum():
    rng = np.random.default_rng(11)
    logits, labels = rng.normal(size=(4, 3)), rng.integers(0, 3, 4)
    p = rng.uniform(size=(4, 5))
    with shadow64():
        perfect = total_loss(Tensor(logits), labels, Tensor(p), p).item()
        ce = F.loss_ce(Tensor(logits), labels).item()
        y = rng.uniform(size=(4, 5))
        tot = total_loss(Tensor(logits), labels, Tensor(p), y).item()
        mse = F.loss_mse(Tensor(p), y).item()
    assert perfect == ce
    assert abs(tot - (ce + mse)) < 1e-7
    z = logits - logits.max(axis=1, keepdims=True)
    oracle = -np.mean(z[np.arange(4), labels] - np.log(np.exp(z).sum(axis=1))) + np.mean((p - y) ** 2)
    tot32 = total_loss(Tensor(logits.astype(np.float32)), labels, Tensor(p.astype(np.float32)), y.astype(np.float32))
    assert abs(tot32.item() - oracle) < 1e-5
