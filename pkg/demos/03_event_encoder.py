# Event encoder
#
# A CNN backbone turns a log-mel clip into one joint vector. Per-event heads
# then give every chosen audio event its own 64-d embedding and a
# presence probability. Which events get a head is decided once, from the
# pseudo-label table, using the training clips only.

import numpy as np

from ergl.encoder import BACKBONE_PROFILES, Backbone, EventHeads, PseudoLabelTable, event_loss, rank_top_n
from ergl.numerics.tensor import Tensor

rng = np.random.default_rng(0)

# ## Choosing the events
#
# Column sums of the pseudo-label table over training clips; the n
# largest win, ties go to the smaller event index.

names = ["speech", "vehicle", "music", "birdsong", "siren"]
values = np.array([
    [0.9, 0.1, 0.4, 0.0, 0.2],
    [0.8, 0.7, 0.3, 0.1, 0.0],
    [0.2, 0.9, 0.5, 0.0, 0.1],
    [0.0, 0.0, 0.0, 0.9, 1.0],  # held out for validation
])
table = PseudoLabelTable(["a", "b", "c", "d"], names, values)
chosen = rank_top_n(table, ["a", "b", "c"], 3)
print("training sums:", values[:3].sum(axis=0), "-> events", [names[i] for i in chosen])
# had the validation clip leaked in, siren would have displaced music
print("with the held out clip:", [names[i] for i in rank_top_n(table, ["a", "b", "c", "d"], 3)])

# ## Backbone
#
# "full" is four conv blocks (64..512 channels), "test" a single 8-channel
# block that trains quickly on a CPU. Both project to 2048 dims.

spec = rng.normal(size=(2, 101, 64)).astype(np.float32)  # two 1 s clips
for profile in ("test", "full"):
    bb = Backbone(BACKBONE_PROFILES[profile], rng).eval()
    print(f"{profile:5s} backbone: {spec.shape} -> {bb(Tensor(spec)).shape}, {sum(p.data.size for p in bb.parameters()):,} parameters")

# ## Heads
#
# Every head is ReLU(x W_i + b_i) followed by a sigmoid classifier. Heads
# share nothing, so a change to one leaves the others untouched.

heads = EventHeads(3, rng)
nodes = heads(bb(Tensor(spec)), chosen)
print("embeddings", nodes.embeddings.shape, "probabilities", nodes.probabilities.shape)
labels = values[:2][:, chosen]
print("event loss (mean squared error against pseudo labels): %.4f" % event_loss(nodes, labels).item())
