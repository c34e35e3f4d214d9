# Gated graph convolution over the event graph
#
# Nodes are events (64-d after an input projection), edges are the learned
# 8-d relations (also projected to 64-d). Each layer updates edges from
# their endpoints, turns them into sigmoid gates normalised over the
# neighbours, and aggregates gated neighbour messages. Both updates are
# residual with batch norm and ReLU.

import numpy as np

from ergl.graph import EventRelationalGraph, GatedGCN, GraphEmbed, SceneHead, edge_gates, zero_linear_weights
from ergl.numerics.tensor import Tensor

rng = np.random.default_rng(0)
b, n = 2, 5
nodes = Tensor(rng.normal(size=(b, n, 64)).astype(np.float32))
edges = Tensor(rng.normal(size=(b, n, n, 8)).astype(np.float32))

g0 = GraphEmbed(rng)(nodes, edges)
print("embedded graph: nodes", g0.node_features.shape, "edges", g0.edge_features.shape)

gcn = GatedGCN(rng, u_layers=2).eval()
g2 = gcn(g0)
print("after two layers:", g2.node_features.shape, g2.edge_features.shape)

# Gates for node i sum to one over its neighbours j, per channel.
gates = edge_gates(Tensor(rng.normal(size=(1, n, n, 64))))
print("gate sums over neighbours:", np.round(gates.data.sum(axis=2)[0, :, 0], 6))

# ## Residual identity
#
# With every linear map zeroed, each layer adds ReLU(BN(0)) = 0 in eval
# mode (fresh running stats, unit gamma, zero beta), so the graph passes
# through untouched, however deep.

deep = GatedGCN(rng, u_layers=4)
for layer in deep.layers:
    zero_linear_weights(layer)
deep.eval()
out = deep(g0)
print("4 zeroed layers leave the graph unchanged:",
      np.array_equal(out.node_features.data, g0.node_features.data)
      and np.array_equal(out.edge_features.data, g0.edge_features.data))

# ## Scene head
#
# Node embeddings are concatenated in event order (n * 64 wide) and mapped
# to scene logits.

head = SceneHead(n, n_scenes=3, rng=rng).eval()
print("scene logits:", np.round(head(g2).data, 3))
