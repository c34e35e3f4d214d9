"""Finite-difference gradient suite over every primitive and the composed ERGL loss."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .edges import NodeContextAttention, NodeNodeAttention
from .graph import EventRelationalGraph, GatedGCNLayer, GraphEmbed, SceneHead
from .model import ERGL, ModelConfig
from .numerics import functional as F
from .numerics.gradcheck import finite_diff_check, param_grad_check
from .numerics.tensor import Tensor, exp, log, matmul, shadow64

TOLERANCE = 1e-4
STEP = 1e-3


@dataclass
class GradResult:
    name: str
    error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def primitive_checks(seed: int = 0) -> Dict[str, Callable[[], float]]:
    rng = np.random.default_rng(seed)
    r = lambda *shape: rng.normal(size=shape)  # noqa: E731
    checks: Dict[str, Callable[[], float]] = {}

    # each output is contracted with fixed random weights so no gradient is structurally zero
    def add(name, fn, x):
        w = rng.normal(size=np.shape(fn(Tensor(np.asarray(x, dtype=np.float64))).data))
        checks[name] = lambda: finite_diff_check(lambda t: (fn(t) * Tensor(w)).sum(), x, STEP)

    a, b = r(3, 4), r(4, 2)
    add("matmul/lhs", lambda t: matmul(t, Tensor(b)), a)
    add("matmul/rhs", lambda t: matmul(Tensor(a), t), b)
    add("softmax", lambda t: F.softmax(t, axis=-1), r(4, 5))
    add("log_softmax", lambda t: F.log_softmax(t, axis=-1), r(4, 5))
    x, k = r(1, 2, 5, 5), r(3, 2, 3, 3)
    add("conv2d/input", lambda t: F.conv2d(t, Tensor(k)), x)
    add("conv2d/kernel", lambda t: F.conv2d(Tensor(x), t), k)
    xb, gamma, beta = r(4, 3, 2, 2), rng.uniform(0.5, 1.5, 3), r(3)

    def bn(t, g=gamma, bt=beta, training=True):
        return F.batch_norm(t, g, bt, np.zeros(3), np.ones(3), training)

    add("batch_norm/train/input", lambda t: bn(t), xb)
    add("batch_norm/train/gamma", lambda t: bn(Tensor(xb), g=t), gamma)
    add("batch_norm/train/beta", lambda t: bn(Tensor(xb), bt=t), beta)
    mean, var = r(3) * 0.1, rng.uniform(0.5, 2.0, 3)
    add("batch_norm/eval/input", lambda t: F.batch_norm(t, gamma, beta, mean, var, False), xb)
    add("relu", F.relu, r(6, 5))
    add("sigmoid", F.sigmoid, r(6, 5))
    xl, wl, bl = r(2, 3, 4), r(4, 5), r(5)
    add("linear/input", lambda t: F.linear(t, Tensor(wl), Tensor(bl)), xl)
    add("linear/weight", lambda t: F.linear(Tensor(xl), t, Tensor(bl)), wl)
    add("linear/bias", lambda t: F.linear(Tensor(xl), Tensor(wl), t), bl)
    add("global_avg_pool", lambda t: F.global_avg_pool(t, axis=-2), r(2, 8, 3))
    add("avg_pool2d", lambda t: F.avg_pool2d(t, 2), r(2, 2, 5, 4))
    add("dropout", lambda t: F.dropout(t, 0.3, True, np.random.default_rng(7)), r(5, 6))
    add("exp/log/div/pow", lambda t: log(exp(t) + 1.0) / (t * t + 1.0) ** 1.5, r(7))
    add("reshape/transpose/sum/mean", lambda t: t.reshape(3, 2, 4).transpose(2, 0, 1).sum(axis=1) + t.mean(), r(6, 4))
    target = rng.uniform(size=(3, 4))
    checks["loss_mse"] = lambda: finite_diff_check(lambda t: F.loss_mse(t, target), r(3, 4), STEP)
    labels = np.array([0, 3, 1])
    checks["loss_ce"] = lambda: finite_diff_check(lambda t: F.loss_ce(t, labels), r(3, 4), STEP)
    return checks


def _module_checks(seed: int) -> Dict[str, Callable[[], float]]:
    checks: Dict[str, Callable[[], float]] = {}

    def ncm_check():
        rng = np.random.default_rng(seed)
        with shadow64():
            m = NodeContextAttention(rng)
        v = rng.normal(size=(2, 3, 64))
        w = rng.normal(size=(2, 3, 64))
        err = finite_diff_check(lambda t: (m(t) * Tensor(w)).sum(), v, STEP)
        errs = param_grad_check(lambda: (m(Tensor(v)) * Tensor(w)).sum(), m.named_parameters(), STEP, 24, rng)
        return max(err, *errs.values())

    def nnm_check():
        rng = np.random.default_rng(seed + 1)
        with shadow64():
            m = NodeNodeAttention(rng)
        s = rng.normal(size=(2, 3, 64))
        w = rng.normal(size=(2, 3, 3, 8))
        err = finite_diff_check(lambda t: (m(t) * Tensor(w)).sum(), s, STEP)
        errs = param_grad_check(lambda: (m(Tensor(s)) * Tensor(w)).sum(), m.named_parameters(), STEP, 24, rng)
        return max(err, *errs.values())

    def gcn_check(training: bool):
        def run():
            rng = np.random.default_rng(seed + 2)
            with shadow64():
                layer = GatedGCNLayer(rng)
            layer.train(training)
            h = rng.normal(size=(2, 3, 64))
            e = rng.normal(size=(2, 3, 3, 64))
            wh, we = rng.normal(size=h.shape), rng.normal(size=e.shape)

            def f(node_t, edge_t):
                g = layer(EventRelationalGraph(node_t, edge_t))
                return (g.node_features * Tensor(wh)).sum() + (g.edge_features * Tensor(we)).sum()

            err_h = finite_diff_check(lambda t: f(t, Tensor(e)), h, STEP)
            err_e = finite_diff_check(lambda t: f(Tensor(h), t), e, STEP)
            errs = param_grad_check(lambda: f(Tensor(h), Tensor(e)), layer.named_parameters(), STEP, 16, rng)
            return max(err_h, err_e, *errs.values())

        return run

    def embed_and_head_check():
        rng = np.random.default_rng(seed + 3)
        with shadow64():
            embed = GraphEmbed(rng)
            head = SceneHead(3, 4, rng)
        head.eval()
        v = rng.normal(size=(2, 3, 64))
        e = rng.normal(size=(2, 3, 3, 8))
        labels = np.array([1, 2])

        def f(vt, et):
            return F.loss_ce(head(embed(vt, et)), labels)

        errs = [finite_diff_check(lambda t: f(t, Tensor(e)), v, STEP)]
        errs.append(finite_diff_check(lambda t: f(Tensor(v), t), e, STEP))
        named = list(embed.named_parameters("embed.")) + list(head.named_parameters("head."))
        errs.extend(param_grad_check(lambda: f(Tensor(v), Tensor(e)), named, STEP, 24, rng).values())
        return max(errs)

    checks["ncm"] = ncm_check
    checks["nnm/build_edges"] = nnm_check
    checks["gated_gcn/eval"] = gcn_check(False)
    checks["gated_gcn/train"] = gcn_check(True)
    checks["graph_embed+scene_head"] = embed_and_head_check
    return checks


def composed_model(seed: int = 0, n_events: int = 3, u_layers: int = 2) -> ERGL:
    """Float64 ERGL with the 1-block test backbone, eval mode and non-trivial running statistics."""
    rng = np.random.default_rng(seed)
    with shadow64():
        model = ERGL(ModelConfig(n_events=n_events, n_scenes=4, u_layers=u_layers, profile="test"), list(range(n_events)), rng)
    for name, buf in model.named_buffers():
        if name.endswith("running_mean"):
            buf[...] = rng.normal(scale=0.1, size=buf.shape)
        else:
            buf[...] = rng.uniform(0.5, 1.5, size=buf.shape)
    return model.eval()


def composed_checks(seed: int = 0, max_entries: int = 12) -> Dict[str, Callable[[], float]]:
    """Full loss (backbone -> heads -> edges -> GCN -> scene head + event loss) on an 8x8 input."""

    def setup():
        model = composed_model(seed)
        rng = np.random.default_rng(seed + 100)
        spec = rng.normal(size=(2, 8, 8))
        labels = np.array([1, 3])
        events = rng.uniform(size=(2, 3))
        return model, rng, spec, labels, events

    def wrt_input():
        model, _, spec, labels, events = setup()
        return finite_diff_check(lambda t: model.loss(t, labels, events)[0], spec, STEP)

    def wrt_params():
        model, rng, spec, labels, events = setup()
        errs = param_grad_check(
            lambda: model.loss(Tensor(spec), labels, events)[0], model.named_parameters(), STEP, max_entries, rng
        )
        return max(errs.values())

    return {"ergl_loss/input": wrt_input, "ergl_loss/parameters": wrt_params}


def run_gradient_suite(seed: int = 0) -> List[GradResult]:
    results = []
    suites = {**primitive_checks(seed), **_module_checks(seed), **composed_checks(seed)}
    for name, check in suites.items():
        start = time.perf_counter()
        err = check()
        results.append(GradResult(name, err, time.perf_counter() - start))
    return results
