# Learning edges between audio events
#
# Two attention modules turn a set of event embeddings into a directed,
# 8-dimensional relation between every ordered pair of events.
#
#   node-context: each event attends over all events (itself included),
#                 giving a scene-aware version of its embedding
#   node-node:    each 64-d scene-aware vector is cut into 8 tokens of 8;
#                 the tokens of event j query the tokens of event i and
#                 the result, averaged over tokens, is the edge i -> j

import numpy as np

from ergl.edges import EdgeLearner, NodeContextAttention, NodeNodeAttention, build_edges, ncm
from ergl.numerics.tensor import Tensor

rng = np.random.default_rng(0)
nodes = rng.normal(size=(1, 4, 64)).astype(np.float32)

ctx = NodeContextAttention(rng)
weights, _ = ctx.attention(Tensor(nodes))
print("node-context attention (rows sum to 1):")
print(np.round(weights.data[0], 3))
scene_aware = ncm(ctx, Tensor(nodes))

pairwise = NodeNodeAttention(rng)
edges = build_edges(pairwise, scene_aware)
print("edge tensor", edges.shape, "(batch, from, to, features)")

# Edges are directed: e_ij and e_ji swap the roles of query and key.
print("e_01:", np.round(edges.data[0, 0, 1, :4], 3), "...")
print("e_10:", np.round(edges.data[0, 1, 0, :4], 3), "...")

# ## No event is special
#
# The weights are shared across positions, so relabelling the events just
# relabels the outputs.

perm = np.array([2, 0, 3, 1])
learner = EdgeLearner(rng)
s, e = learner(Tensor(nodes))
s_p, e_p = learner(Tensor(nodes[:, perm]))
print("max |S(pi v) - pi S(v)|:", np.abs(s_p.data - s.data[:, perm]).max())
print("max |E(pi v) - pi E(v) pi^T|:", np.abs(e_p.data - e.data[:, perm][:, :, perm]).max())

# The batched computation is the same arithmetic as a loop over pairs, bit
# for bit.
loop = np.stack([np.stack([pairwise.directed(scene_aware[0, i], scene_aware[0, j]).data for j in range(4)])
                 for i in range(4)])
print("batched == loop:", np.array_equal(edges.data[0], loop))
