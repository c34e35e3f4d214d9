"""Multi-dimensional edge learning.

Two cross-attention stages turn n event embeddings into a dense tensor of
directed edge features:

* node-context attention: each node queries all n nodes and returns a
  scene-aware feature ``S_i`` of width 64;
* node-node attention: for an ordered pair (i, j), ``S_j`` split into
  8 tokens of width 8 queries the 8 tokens of ``S_i``; averaging the
  attended tokens gives the 8-dimensional edge feature ``e_ij``.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from .errors import ConfigurationError, DimensionError
from .numerics import functional as F
from .numerics.nn import Module, parameter, xavier_uniform
from .numerics.tensor import Tensor, as_tensor, matmul

NODE_DIM = 64
EDGE_TOKENS = 8
TOKEN_DIM = 8
EDGE_DIM = TOKEN_DIM


class NodeContextAttention(Module):
    """Single-head cross-attention of every node against the set of all nodes."""

    def __init__(self, rng: np.random.Generator, dim: int = NODE_DIM):
        super().__init__()
        self.dim = dim
        self.w_q = parameter(xavier_uniform(rng, (dim, dim), dim, dim))
        self.w_k = parameter(xavier_uniform(rng, (dim, dim), dim, dim))
        self.w_v = parameter(xavier_uniform(rng, (dim, dim), dim, dim))

    def attention(self, nodes) -> Tuple[Tensor, Tensor]:
        """Return (attention weights [b, n, n], values [b, n, d])."""
        v = as_tensor(nodes)
        if v.ndim != 3 or v.shape[-1] != self.dim:
            raise DimensionError(f"node embeddings must be [batch, n, {self.dim}], got {v.shape}")
        if v.shape[1] < 2:
            raise ConfigurationError(f"node-context attention needs n >= 2 nodes, got {v.shape[1]}")
        q = matmul(v, self.w_q)
        k = matmul(v, self.w_k)
        scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.dim))
        return F.softmax(scores, axis=-1), matmul(v, self.w_v)

    def forward(self, nodes) -> Tensor:
        weights, values = self.attention(nodes)
        return matmul(weights, values)


class NodeNodeAttention(Module):
    """Token-level cross-attention between two scene-aware features, pooled to an edge vector."""

    def __init__(self, rng: np.random.Generator, tokens: int = EDGE_TOKENS, token_dim: int = TOKEN_DIM):
        super().__init__()
        self.tokens = tokens
        self.token_dim = token_dim
        d = token_dim
        self.w_q = parameter(xavier_uniform(rng, (d, d), d, d))
        self.w_k = parameter(xavier_uniform(rng, (d, d), d, d))
        self.w_v = parameter(xavier_uniform(rng, (d, d), d, d))

    def _tokens(self, s: Tensor) -> Tensor:
        if s.shape[-1] != self.tokens * self.token_dim:
            raise DimensionError(
                f"scene-aware feature width {s.shape[-1]} != {self.tokens} tokens x {self.token_dim}"
            )
        return s.reshape(*s.shape[:-1], self.tokens, self.token_dim)

    def pair(self, s_i, s_j) -> Tuple[Tensor, Tensor]:
        """Edge features (e_ij, e_ji) for one pair of 64-wide vectors."""
        return self.directed(s_i, s_j), self.directed(s_j, s_i)

    def directed(self, s_i, s_j) -> Tensor:
        """e_ij: tokens of ``s_j`` query the tokens of ``s_i``; mean over query tokens."""
        ti, tj = self._tokens(as_tensor(s_i)), self._tokens(as_tensor(s_j))
        q = matmul(tj, self.w_q)
        k = matmul(ti, self.w_k)
        v = matmul(ti, self.w_v)
        attn = F.softmax(matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.token_dim)), axis=-1)
        return F.global_avg_pool(matmul(attn, v), axis=-2)

    def forward(self, scene_aware) -> Tensor:
        """All ordered pairs: [b, n, 64] -> [b, n, n, 8] with entry [i, j] = e_ij."""
        s = as_tensor(scene_aware)
        if s.ndim != 3:
            raise DimensionError(f"scene-aware features must be [batch, n, 64], got {s.shape}")
        b, n, _ = s.shape
        t = self._tokens(s)  # [b, n, T, d]
        q = matmul(t, self.w_q)
        k = matmul(t, self.w_k)
        v = matmul(t, self.w_v)
        # [b, i, j] pairs keys/values of node i with queries of node j
        q_j = q.reshape(b, 1, n, self.tokens, self.token_dim)
        k_i = k.swapaxes(-1, -2).reshape(b, n, 1, self.token_dim, self.tokens)
        v_i = v.reshape(b, n, 1, self.tokens, self.token_dim)
        attn = F.softmax(matmul(q_j, k_i) * (1.0 / math.sqrt(self.token_dim)), axis=-1)
        return F.global_avg_pool(matmul(attn, v_i), axis=-2)


def ncm(module: NodeContextAttention, nodes) -> Tensor:
    return module(nodes)


def nnm_edge_pair(module: NodeNodeAttention, s_i, s_j) -> Tuple[Tensor, Tensor]:
    return module.pair(s_i, s_j)


def build_edges(module: NodeNodeAttention, scene_aware) -> Tensor:
    return module(scene_aware)


class EdgeLearner(Module):
    """Node embeddings -> (scene-aware features, directed edge tensor)."""

    def __init__(self, rng: np.random.Generator):
        super().__init__()
        self.ncm = NodeContextAttention(rng)
        self.nnm = NodeNodeAttention(rng)

    def forward(self, nodes) -> Tuple[Tensor, Tensor]:
        s = self.ncm(nodes)
        return s, self.nnm(s)
