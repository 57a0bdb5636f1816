"""Banded, distance-weighted graphs over an axial slice sequence.

A 3D volume read along its z axis becomes a path-like graph: one node
per slice triplet, ordered by axial position. Two nodes are connected
when they are at most ``q`` apart in that ordering, and edge weights
encode the physical z distance between the slices they cover.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "WeightFn",
    "GraphSpec",
    "GraphConfig",
    "MM_PER_DM",
    "SLICES_PER_NODE",
    "build_edge_set",
    "edge_weight",
    "build_adjacency",
    "degree_vector",
]

# Scanner metadata reports z spacing in millimetres; the weight formulas
# work in decimetres.
MM_PER_DM = 100.0

# Each node covers a triplet of consecutive slices, so neighbouring nodes
# are three physical slices apart.
SLICES_PER_NODE = 3.0


class WeightFn(str, Enum):
    """Edge weighting schemes, keyed by the CLI spelling."""

    INVERSE_DM = "inverse-dm"  # 1 + 1/(1 + 3*gap*s_z), bounded in (1, 2)
    EXP_DECAY = "exp"          # exp(-3*gap*s_z)
    CONSTANT = "const"         # unweighted


@dataclass(frozen=True)
class GraphSpec:
    """Full description of one sample's graph.

    ``spacing_z`` is the z spacing in decimetres; use
    :meth:`from_spacing_mm` when starting from millimetre metadata.
    A ``q`` of ``n_nodes - 1`` or more yields the fully connected graph.
    """

    n_nodes: int
    q: int
    spacing_z: float
    weight_fn: WeightFn = WeightFn.INVERSE_DM

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ValueError(f"need at least 2 nodes, got {self.n_nodes}")
        if self.q < 1:
            raise ValueError(f"neighbourhood size must be >= 1, got {self.q}")
        if not self.spacing_z > 0:
            raise ValueError(f"z spacing must be positive, got {self.spacing_z}")
        object.__setattr__(self, "weight_fn", WeightFn(self.weight_fn))

    @classmethod
    def from_spacing_mm(cls, n_nodes: int, q: int, spacing_mm: float,
                        weight_fn: WeightFn = WeightFn.INVERSE_DM) -> "GraphSpec":
        return cls(n_nodes, q, spacing_mm / MM_PER_DM, weight_fn)

    @property
    def is_fully_connected(self) -> bool:
        return self.q >= self.n_nodes - 1


@dataclass(frozen=True)
class GraphConfig:
    """Graph hyperparameters shared across samples; spacing comes per sample."""

    q: int
    weight_fn: WeightFn = WeightFn.INVERSE_DM

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError(f"neighbourhood size must be >= 1, got {self.q}")
        object.__setattr__(self, "weight_fn", WeightFn(self.weight_fn))

    def spec_for(self, n_nodes: int, spacing_mm: float) -> GraphSpec:
        return GraphSpec.from_spacing_mm(n_nodes, self.q, spacing_mm, self.weight_fn)


def build_edge_set(spec: GraphSpec) -> frozenset[tuple[int, int]]:
    """Unordered index pairs (i, j), i < j, with j - i <= q. No self-loops."""
    n, q = spec.n_nodes, spec.q
    return frozenset(
        (i, j)
        for i in range(n)
        for j in range(i + 1, min(i + q, n - 1) + 1)
    )


def _gap_weight(gap, spacing_z: float, weight_fn: WeightFn):
    """Weight for a node-index gap; works elementwise on arrays."""
    dist = SLICES_PER_NODE * np.asarray(gap, dtype=float) * spacing_z
    if weight_fn is WeightFn.INVERSE_DM:
        return 1.0 + 1.0 / (1.0 + dist)
    if weight_fn is WeightFn.EXP_DECAY:
        return np.exp(-dist)
    return np.ones_like(dist)


def edge_weight(i: int, j: int, spec: GraphSpec) -> float:
    """Weight of the edge between nodes i and j under the GraphSpec's scheme."""
    if i == j:
        raise ValueError("self-loops are excluded (i == j)")
    for k in (i, j):
        if not 0 <= k < spec.n_nodes:
            raise ValueError(f"node index {k} out of range [0, {spec.n_nodes})")
    return float(_gap_weight(abs(i - j), spec.spacing_z, spec.weight_fn))


def build_adjacency(spec: GraphSpec) -> np.ndarray:
    """Dense symmetric weighted adjacency with a zero diagonal."""
    idx = np.arange(spec.n_nodes)
    gaps = np.abs(idx[:, None] - idx[None, :])
    weights = _gap_weight(gaps, spec.spacing_z, spec.weight_fn)
    banded = (gaps >= 1) & (gaps <= spec.q)
    return np.where(banded, weights, 0.0)


def degree_vector(adjacency: np.ndarray) -> np.ndarray:
    """Weighted degree of each node (row sums of the adjacency)."""
    return np.asarray(adjacency, dtype=float).sum(axis=1)
