"""End-to-end ERGL network: spectrogram -> event nodes -> edges -> gated GCN -> scene logits."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .edges import EdgeLearner
from .encoder import BACKBONE_PROFILES, JOINT_DIM, Backbone, EventHeads, EventNodeSet
from .errors import ConfigurationError
from .graph import EventRelationalGraph, GatedGCN, GraphEmbed, SceneHead, total_loss
from .numerics import functional as F
from .numerics.nn import Module
from .numerics.tensor import Tensor


@dataclass
class ModelConfig:
    n_events: int = 25
    n_scenes: int = 10
    u_layers: int = 2
    profile: str = "full"
    joint_dim: int = JOINT_DIM
    dropout_conv: float = 0.2
    dropout_head: float = 0.5
    use_edges: bool = True

    def validate(self) -> None:
        if self.profile not in BACKBONE_PROFILES:
            raise ConfigurationError(f"unknown backbone profile {self.profile!r}; choose from {sorted(BACKBONE_PROFILES)}")
        if self.n_events < 2:
            raise ConfigurationError(f"n_events must be >= 2, got {self.n_events}")
        if self.n_scenes < 2:
            raise ConfigurationError(f"n_scenes must be >= 2, got {self.n_scenes}")
        if self.u_layers < 1:
            raise ConfigurationError(f"u_layers must be >= 1, got {self.u_layers}")

    def to_dict(self) -> dict:
        return asdict(self)


class ERGLOutput(NamedTuple):
    logits: Tensor
    nodes: EventNodeSet
    scene_aware: Tensor
    edges: Tensor
    graph: EventRelationalGraph


class ERGL(Module):
    """Event relational graph classifier.

    With ``use_edges=False`` the edge learner is bypassed and all edge
    features are zero (the MEL ablation).
    """

    def __init__(self, config: ModelConfig, event_ids: Sequence[int], rng: np.random.Generator):
        super().__init__()
        config.validate()
        if len(event_ids) != config.n_events:
            raise ConfigurationError(f"{len(event_ids)} event ids for n_events={config.n_events}")
        self.config = config
        self.event_ids: List[int] = [int(i) for i in event_ids]
        self.backbone = Backbone(BACKBONE_PROFILES[config.profile], rng, config.joint_dim, config.dropout_conv)
        self.heads = EventHeads(config.n_events, rng, config.joint_dim)
        self.edge_learner = EdgeLearner(rng)
        self.embed = GraphEmbed(rng)
        self.gcn = GatedGCN(rng, config.u_layers)
        self.scene_head = SceneHead(config.n_events, config.n_scenes, rng, dropout=config.dropout_head)

    def forward(self, spec) -> ERGLOutput:
        joint = self.backbone(spec)
        nodes = self.heads(joint, self.event_ids)
        s, edges = self.edge_learner(nodes.embeddings)
        if not self.config.use_edges:
            edges = Tensor(np.zeros(edges.shape, dtype=edges.dtype))
        g0 = self.embed(nodes.embeddings, edges)
        gu = self.gcn(g0)
        return ERGLOutput(self.scene_head(gu), nodes, s, edges, gu)

    def loss(self, spec, scene_labels, event_labels, out: Optional[ERGLOutput] = None):
        """Return (total, scene term, event term, forward output)."""
        out = out if out is not None else self.forward(spec)
        scene = F.loss_ce(out.logits, scene_labels)
        event = F.loss_mse(out.nodes.probabilities, event_labels)
        return scene + event, scene, event, out


__all__ = ["ERGL", "ERGLOutput", "ModelConfig", "total_loss"]
