"""Message-passing GNN and SE(2)-equivariant EGNN jet classifiers."""
from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor, as_tensor, concat, norm, softmax_cross_entropy
from .nn import MLP, Module


def _off_diagonal(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def coordinate_scale(n_nodes: int) -> float:
    """Suppression factor ``1 / ln(2n)`` applied to the coordinate update."""
    return 1.0 / math.log(2 * n_nodes)


class GNNLayer(Module):
    """Edge MLP, neighbour-sum aggregation, node MLP; optionally a coordinate MLP."""

    def __init__(self, n_in: int, n_hidden: int, rng, equivariant: bool = False, activation: str = "softplus"):
        super().__init__()
        self.equivariant = equivariant
        edge_in = 2 * n_in + 1 + (1 if equivariant else 0)
        self.edge_mlp = MLP(edge_in, n_hidden, n_hidden, rng, activation)
        self.node_mlp = MLP(n_in + n_hidden, n_hidden, n_hidden, rng, activation)
        if equivariant:
            self.coord_mlp = MLP(n_hidden, n_hidden, 1, rng, activation)
        self.n_in, self.n_hidden = n_in, n_hidden


def _messages(h: Tensor, a, layer: GNNLayer, dist=None) -> Tensor:
    n, k = h.shape[-2], h.shape[-1]
    if k != layer.n_in:
        raise ValueError(f"layer expects {layer.n_in} node features, got {k}")
    a = as_tensor(a)
    if a.shape[-2:] != (n, n):
        raise ValueError(f"edge matrix shape {a.shape} does not match {n} nodes")
    full = h.shape[:-2] + (n, n, k)
    parts = [h.expand_dims(-2).broadcast_to(full), h.expand_dims(-3).broadcast_to(full), a.expand_dims(-1)]
    if dist is not None:
        parts.append(dist.expand_dims(-1))
    return layer.edge_mlp(concat(_align(parts), axis=-1))


def _align(parts):
    # Broadcast constant edge attributes over any batch axes the features carry.
    lead = parts[0].shape[:-1]
    return [p if p.shape[:-1] == lead else p.broadcast_to(lead + p.shape[-1:]) for p in parts]


def gnn_layer(h, a, layer: GNNLayer) -> Tensor:
    """h'_i = node_mlp(h_i, sum_{j != i} edge_mlp(h_i, h_j, a_ij))."""
    h = as_tensor(h)
    m_ij = _messages(h, a, layer)
    mask = _off_diagonal(h.shape[-2])[..., None]
    m_i = (m_ij * mask).sum(axis=-2)
    return layer.node_mlp(concat([h, m_i], axis=-1))


def egnn_layer(h, x, a, layer: GNNLayer):
    """One SE(2)-equivariant layer; returns ``(h', x')``.

    The edge MLP also sees ``|x_i - x_j|`` and the coordinates move by
    ``C * sum_j (x_i - x_j) * coord_mlp(m_ij)`` with ``C = 1/ln(2n)``.
    """
    if not layer.equivariant:
        raise ValueError("egnn_layer needs a layer built with equivariant=True")
    h, x = as_tensor(h), as_tensor(x)
    n = h.shape[-2]
    diff = x.expand_dims(-2) - x.expand_dims(-3)
    m_ij = _messages(h, a, layer, dist=norm(diff, axis=-1))
    mask = _off_diagonal(n)[..., None]
    m_i = (m_ij * mask).sum(axis=-2)
    shift = (diff * layer.coord_mlp(m_ij) * mask).sum(axis=-2)
    x_new = x + shift * coordinate_scale(n)
    h_new = layer.node_mlp(concat([h, m_i], axis=-1))
    return h_new, x_new


def mean_pool(h) -> Tensor:
    h = as_tensor(h)
    if h.shape[-2] < 1:
        raise ValueError("cannot pool an empty graph")
    return h.mean(axis=-2)


def classify_head(features, head: MLP) -> Tensor:
    """Two logits from pooled features: affine -> nonlinearity -> affine."""
    features = as_tensor(features)
    if features.shape[-1] != head.fc1.weight.shape[0]:
        raise ValueError(f"head expects {head.fc1.weight.shape[0]} features, got {features.shape[-1]}")
    return head(features)


class ClassicalGNN(Module):
    """P stacked graph layers, mean pooling over nodes, and a two-logit head.

    With ``equivariant=True`` this is the EGNN: coordinates ride along the
    layers but only the node features reach the head.
    """

    quantum = False

    def __init__(self, hidden: int = 10, layers: int = 5, equivariant: bool = False, n_features: int = 8,
                 rng=None, activation: str = "softplus"):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.equivariant = equivariant
        self.hidden, self.n_layers = hidden, layers
        self.layers = [
            GNNLayer(n_features if i == 0 else hidden, hidden, rng, equivariant, activation) for i in range(layers)
        ]
        self.head = MLP(hidden, hidden, 2, rng, activation)

    @property
    def name(self) -> str:
        return "egnn" if self.equivariant else "gnn"

    def embed(self, h, x, a):
        h, x = as_tensor(h), as_tensor(x)
        for layer in self.layers:
            if self.equivariant:
                h, x = egnn_layer(h, x, a, layer)
            else:
                h = gnn_layer(h, a, layer)
        return h, x

    def forward(self, h, x, a) -> Tensor:
        feats, _ = self.embed(h, x, a)
        return classify_head(mean_pool(feats), self.head)

    __call__ = forward

    def loss(self, h, x, a, labels) -> Tensor:
        return softmax_cross_entropy(self.forward(h, x, a), labels)

    @staticmethod
    def scores(logits: np.ndarray) -> np.ndarray:
        """Class-1 softmax probability."""
        z = logits - logits.max(axis=-1, keepdims=True)
        p = np.exp(z)
        return p[..., 1] / p.sum(axis=-1)


def classical_parameter_count(hidden: int, layers: int, equivariant: bool = False, n_features: int = 8) -> int:
    """Closed-form parameter count for :class:`ClassicalGNN`."""

    def mlp(i, hdn, o):
        return i * hdn + hdn + hdn * o + o

    total = 0
    for layer in range(layers):
        k = n_features if layer == 0 else hidden
        total += mlp(2 * k + 1 + int(equivariant), hidden, hidden)
        total += mlp(k + hidden, hidden, hidden)
        if equivariant:
            total += mlp(hidden, hidden, 1)
    return total + mlp(hidden, hidden, 2)
