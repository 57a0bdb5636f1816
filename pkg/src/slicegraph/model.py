"""Multi-label graph classifier.

Two interchangeable graph modules over the same skeleton: a Chebyshev
spectral filter stack and a weighted-neighbour-sum ("graphconv")
baseline. Either way: three conv layers with ReLU, sum pooling over
nodes, then a two-layer MLP head producing one logit per label.

Parameters live in frozen dataclasses and are treated as immutable;
updates build new instances via `with_tensors`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .graph import GraphConfig, GraphSpec, build_adjacency
from .spectral import (
    ScaledLaplacian,
    cheb_basis,
    scaled_laplacian_from_adjacency,
    _filter_sum,
)

__all__ = [
    "Variant",
    "ChebLayer",
    "GraphConvLayer",
    "Head",
    "ModelParams",
    "SampleGraph",
    "ForwardTrace",
    "GraphOperatorCache",
    "prepare_graph",
    "init_params",
    "param_tensors",
    "with_tensors",
    "gnn_param_count",
    "relu",
    "sigmoid",
    "cheb_layer_forward",
    "graphconv_layer_forward",
    "aggregate_sum",
    "forward_trace",
    "model_forward",
    "bce_loss",
]

DEFAULT_N_LAYERS = 3
DEFAULT_CHEB_K = 3

_INIT_STREAM = 0  # rng stream tag for parameter init


class Variant(str, Enum):
    CHEB = "cheb"
    GRAPHCONV = "graphconv"


@dataclass(frozen=True)
class ChebLayer:
    """One spectral layer: Chebyshev filter, then feedforward + ReLU."""

    thetas: np.ndarray     # (K, d, d) filter coefficients
    ff_weight: np.ndarray  # (d, d)
    ff_bias: np.ndarray    # (d,)


@dataclass(frozen=True)
class GraphConvLayer:
    """One spatial layer: self + weighted-neighbour-sum transform, ReLU."""

    w_self: np.ndarray   # (d, d)
    w_neigh: np.ndarray  # (d, d)
    bias: np.ndarray     # (d,)


@dataclass(frozen=True)
class Head:
    """MLP head d -> hidden -> n_labels with one ReLU in between."""

    w1: np.ndarray  # (d, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, n_labels)
    b2: np.ndarray  # (n_labels,)


@dataclass(frozen=True)
class ModelParams:
    layers: tuple
    head: Head

    @property
    def variant(self) -> Variant:
        return Variant.CHEB if isinstance(self.layers[0], ChebLayer) else Variant.GRAPHCONV

    @property
    def d(self) -> int:
        return self.head.w1.shape[0]

    @property
    def n_labels(self) -> int:
        return self.head.b2.size

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def cheb_k(self) -> int:
        """Filter order; 0 for the spatial variant."""
        if isinstance(self.layers[0], ChebLayer):
            return self.layers[0].thetas.shape[0]
        return 0


@dataclass(frozen=True)
class SampleGraph:
    """Both operator forms for one sample's graph."""

    adjacency: np.ndarray
    lhat: ScaledLaplacian


def prepare_graph(spec: GraphSpec) -> SampleGraph:
    adjacency = build_adjacency(spec)
    return SampleGraph(adjacency, scaled_laplacian_from_adjacency(adjacency))


class GraphOperatorCache:
    """Memoises SampleGraph per (n_nodes, spacing); samples often share both."""

    def __init__(self, graph_cfg: GraphConfig) -> None:
        self.graph_cfg = graph_cfg
        self._cache: dict[tuple[int, float], SampleGraph] = {}

    def get(self, n_nodes: int, spacing_mm: float) -> SampleGraph:
        key = (n_nodes, spacing_mm)
        hit = self._cache.get(key)
        if hit is None:
            hit = prepare_graph(self.graph_cfg.spec_for(n_nodes, spacing_mm))
            self._cache[key] = hit
        return hit

    def for_sample(self, sample) -> SampleGraph:
        return self.get(sample.features.shape[0], sample.spacing_z_mm)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(d: int, n_labels: int, variant: Variant = Variant.CHEB, *,
                n_layers: int = DEFAULT_N_LAYERS, cheb_k: int = DEFAULT_CHEB_K,
                head_hidden: int | None = None, seed: int = 0) -> ModelParams:
    """Seeded init: weights uniform(-s, s) with s = 1/sqrt(fan_in), biases zero."""
    if d < 1 or n_labels < 1 or n_layers < 1 or cheb_k < 1:
        raise ValueError("d, n_labels, n_layers and cheb_k must all be >= 1")
    variant = Variant(variant)
    hidden = max(1, d // 2) if head_hidden is None else head_hidden
    if hidden < 1:
        raise ValueError(f"head_hidden must be >= 1, got {hidden}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, _INIT_STREAM))))

    def uniform(fan_in: int, shape) -> np.ndarray:
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    layers = []
    for _ in range(n_layers):
        if variant is Variant.CHEB:
            layers.append(ChebLayer(
                thetas=uniform(d, (cheb_k, d, d)),
                ff_weight=uniform(d, (d, d)),
                ff_bias=np.zeros(d),
            ))
        else:
            layers.append(GraphConvLayer(
                w_self=uniform(d, (d, d)),
                w_neigh=uniform(d, (d, d)),
                bias=np.zeros(d),
            ))
    head = Head(
        w1=uniform(d, (d, hidden)),
        b1=np.zeros(hidden),
        w2=uniform(hidden, (hidden, n_labels)),
        b2=np.zeros(n_labels),
    )
    return ModelParams(tuple(layers), head)


def param_tensors(params: ModelParams) -> list[np.ndarray]:
    """All parameter tensors in declaration order (layers first, then head)."""
    out: list[np.ndarray] = []
    for layer in params.layers:
        if isinstance(layer, ChebLayer):
            out.extend([layer.thetas, layer.ff_weight, layer.ff_bias])
        else:
            out.extend([layer.w_self, layer.w_neigh, layer.bias])
    out.extend([params.head.w1, params.head.b1, params.head.w2, params.head.b2])
    return out


def with_tensors(params: ModelParams, tensors: list[np.ndarray]) -> ModelParams:
    """Rebuild a ModelParams from tensors in declaration order."""
    expected = len(param_tensors(params))
    if len(tensors) != expected:
        raise ValueError(f"expected {expected} tensors, got {len(tensors)}")
    it = iter(tensors)
    layers = []
    for layer in params.layers:
        if isinstance(layer, ChebLayer):
            layers.append(ChebLayer(next(it), next(it), next(it)))
        else:
            layers.append(GraphConvLayer(next(it), next(it), next(it)))
    head = Head(next(it), next(it), next(it), next(it))
    return ModelParams(tuple(layers), head)


def gnn_param_count(params: ModelParams) -> int:
    """Scalar parameter count of the conv stack (head excluded)."""
    total = 0
    for layer in params.layers:
        if isinstance(layer, ChebLayer):
            total += layer.thetas.size + layer.ff_weight.size + layer.ff_bias.size
        else:
            total += layer.w_self.size + layer.w_neigh.size + layer.bias.size
    return total


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _cheb_layer_pre(lhat, z: np.ndarray, layer: ChebLayer):
    basis = cheb_basis(lhat, z, layer.thetas.shape[0])
    filtered = _filter_sum(basis, layer.thetas)
    pre = filtered @ layer.ff_weight + layer.ff_bias
    return basis, filtered, pre


def cheb_layer_forward(lhat, z: np.ndarray, layer: ChebLayer) -> np.ndarray:
    """ReLU(feedforward(Chebyshev filter(z)))."""
    _, _, pre = _cheb_layer_pre(lhat, z, layer)
    return relu(pre)


def _graphconv_layer_pre(adjacency: np.ndarray, z: np.ndarray, layer: GraphConvLayer):
    neigh = adjacency @ z
    pre = z @ layer.w_self + neigh @ layer.w_neigh + layer.bias
    return neigh, pre


def graphconv_layer_forward(adjacency: np.ndarray, z: np.ndarray,
                            layer: GraphConvLayer) -> np.ndarray:
    """ReLU(z W_self + (A z) W_neigh + bias): weighted neighbour sum."""
    z = np.asarray(z, dtype=float)
    _, pre = _graphconv_layer_pre(np.asarray(adjacency, dtype=float), z, layer)
    return relu(pre)


def aggregate_sum(z: np.ndarray) -> np.ndarray:
    """Permutation-invariant readout: column sums over nodes."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"expected (n_nodes, d) features, got shape {z.shape}")
    return z.sum(axis=0)


@dataclass
class ForwardTrace:
    """Intermediates needed by the backward pass."""

    layer_traces: list  # per layer: (basis, filtered, pre) or (z_in, neigh, pre)
    pooled: np.ndarray
    head_pre: np.ndarray
    head_act: np.ndarray
    logits: np.ndarray


def forward_trace(graph: SampleGraph, h: np.ndarray, params: ModelParams):
    """Run the model keeping intermediates; returns (logits, trace)."""
    z = np.asarray(h, dtype=float)
    if z.ndim != 2 or z.shape[1] != params.d:
        raise ValueError(
            f"features must be (n_nodes, {params.d}), got shape {np.shape(h)}"
        )
    traces = []
    for layer in params.layers:
        if isinstance(layer, ChebLayer):
            basis, filtered, pre = _cheb_layer_pre(graph.lhat, z, layer)
            traces.append((basis, filtered, pre))
        else:
            z_in = z
            neigh, pre = _graphconv_layer_pre(graph.adjacency, z_in, layer)
            traces.append((z_in, neigh, pre))
        z = relu(pre)

    pooled = aggregate_sum(z)
    head = params.head
    head_pre = pooled @ head.w1 + head.b1
    head_act = relu(head_pre)
    logits = head_act @ head.w2 + head.b2
    return logits, ForwardTrace(traces, pooled, head_pre, head_act, logits)


def model_forward(graph: SampleGraph, h: np.ndarray, params: ModelParams) -> np.ndarray:
    """Logits (one per label) for one sample."""
    logits, _ = forward_trace(graph, h, params)
    return logits


def bce_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over labels, from logits.

    Uses the overflow-free form max(x, 0) - x*y + log(1 + exp(-|x|)).
    """
    x = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"logits shape {x.shape} != labels shape {y.shape}")
    per_label = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    return float(per_label.mean())
