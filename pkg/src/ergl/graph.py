"""Gated graph convolution over the event relational graph, scene head and total loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import ConfigurationError, DimensionError, UsageError
from .numerics import functional as F
from .numerics.nn import BatchNorm, Dropout, Linear, Module
from .numerics.tensor import Tensor, as_tensor

HIDDEN_DIM = 64
GATE_EPS = 1e-6


@dataclass
class EventRelationalGraph:
    node_features: Tensor  # [b, n, d_h]
    edge_features: Tensor  # [b, n, n, d_h]

    def __post_init__(self):
        b, n, d = self.node_features.shape
        if self.edge_features.shape != (b, n, n, d):
            raise DimensionError(
                f"edge features {self.edge_features.shape} do not match nodes {self.node_features.shape}"
            )

    @property
    def n(self) -> int:
        return self.node_features.shape[1]


class GraphEmbed(Module):
    """Project node embeddings (64) and edge features (8) to the hidden width."""

    def __init__(self, rng: np.random.Generator, node_dim: int = 64, edge_dim: int = 8, hidden: int = HIDDEN_DIM):
        super().__init__()
        self.node_proj = Linear(node_dim, hidden, rng)
        self.edge_proj = Linear(edge_dim, hidden, rng)

    def forward(self, nodes, edges) -> EventRelationalGraph:
        nodes, edges = as_tensor(nodes), as_tensor(edges)
        if edges.shape[:3] != (nodes.shape[0], nodes.shape[1], nodes.shape[1]):
            raise DimensionError(f"edge tensor {edges.shape} inconsistent with {nodes.shape[1]} nodes")
        return EventRelationalGraph(self.node_proj(nodes), self.edge_proj(edges))


def edge_gates(edge_hat) -> Tensor:
    """eta_ij = sigmoid(e_ij) / (sum_j' sigmoid(e_ij') + 1e-6), elementwise over channels."""
    sig = F.sigmoid(edge_hat)
    return sig / (sig.sum(axis=2, keepdims=True) + GATE_EPS)


class GatedGCNLayer(Module):
    """Residual gated graph convolution with batch-normalised node and edge updates.

    Edge update:  e'_ij = e_ij + ReLU(BN(A e_ij + B h_i + C h_j))
    Node update:  h'_i  = h_i  + ReLU(BN(U h_i + sum_j eta_ij * V h_j))
    where the gates eta are computed from e'.  Aggregation runs over all n
    nodes, the node itself included.
    """

    def __init__(self, rng: np.random.Generator, hidden: int = HIDDEN_DIM):
        super().__init__()
        self.A = Linear(hidden, hidden, rng)
        self.B = Linear(hidden, hidden, rng)
        self.C = Linear(hidden, hidden, rng)
        self.U = Linear(hidden, hidden, rng)
        self.V = Linear(hidden, hidden, rng)
        self.bn_edge = BatchNorm(hidden, axis=-1)
        self.bn_node = BatchNorm(hidden, axis=-1)

    def forward(self, graph: EventRelationalGraph) -> EventRelationalGraph:
        h, e = graph.node_features, graph.edge_features
        b, n, d = h.shape
        bh = self.B(h).reshape(b, n, 1, d)  # sender i
        ch = self.C(h).reshape(b, 1, n, d)  # neighbour j
        e_new = e + F.relu(self.bn_edge(self.A(e) + bh + ch))
        gates = edge_gates(e_new)
        vh = self.V(h).reshape(b, 1, n, d)
        message = (gates * vh).sum(axis=2)
        h_new = h + F.relu(self.bn_node(self.U(h) + message))
        return EventRelationalGraph(h_new, e_new)


def zero_linear_weights(layer: GatedGCNLayer) -> None:
    for lin in (layer.A, layer.B, layer.C, layer.U, layer.V):
        lin.weight.data = np.zeros_like(lin.weight.data)
        lin.bias.data = np.zeros_like(lin.bias.data)


class GatedGCN(Module):
    def __init__(self, rng: np.random.Generator, u_layers: int = 2, hidden: int = HIDDEN_DIM):
        super().__init__()
        if u_layers < 1:
            raise ConfigurationError(f"need at least one graph layer, got {u_layers}")
        self.layers: List[GatedGCNLayer] = [GatedGCNLayer(rng, hidden) for _ in range(u_layers)]

    def forward(self, graph: EventRelationalGraph) -> EventRelationalGraph:
        for layer in self.layers:
            graph = layer(graph)
        return graph


def graph_forward(gcn: GatedGCN, graph: EventRelationalGraph) -> EventRelationalGraph:
    return gcn(graph)


class SceneHead(Module):
    """Concatenate the n node vectors (event-id order) and map to scene logits."""

    def __init__(self, n: int, n_scenes: int, rng: np.random.Generator, hidden: int = HIDDEN_DIM, dropout: float = 0.5):
        super().__init__()
        self.n = n
        self.hidden = hidden
        self.drop = Dropout(dropout, rng)
        self.fc = Linear(n * hidden, n_scenes, rng)

    def forward(self, graph: EventRelationalGraph) -> Tensor:
        h = graph.node_features
        if h.shape[1] != self.n or h.shape[2] != self.hidden:
            raise UsageError(
                f"scene head built for {self.n} nodes of width {self.hidden}, got {h.shape[1]}x{h.shape[2]}"
            )
        flat = h.reshape(h.shape[0], self.n * self.hidden)
        return self.fc(self.drop(flat))


def total_loss(scene_logits, scene_labels, event_pred, event_labels) -> Tensor:
    """Unweighted sum of scene cross-entropy and event MSE."""
    return F.loss_ce(scene_logits, scene_labels) + F.loss_mse(event_pred, event_labels)
