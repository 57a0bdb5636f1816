"""Binary model checkpoints.

Layout (all integers little-endian u32, floats little-endian f64):

    magic   4 bytes, b"CTGC"
    version u32 (currently 1)
    n_labels, d, K, n_layers   u32 each
    then every parameter tensor in declaration order, each encoded as
    rank u32, dims (rank x u32), then the row-major f64 payload

K >= 1 marks the Chebyshev parameter set; K == 0 marks the spatial
(graphconv) one, whose layers carry (w_self, w_neigh, bias) instead of
(thetas, ff_weight, ff_bias). The head tensors follow the layers either
way. Round-trips are bit-exact because parameters are already f64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, TruncatedPayloadError, VersionMismatchError
from .model import ChebLayer, GraphConvLayer, Head, ModelParams, Variant, param_tensors

__all__ = ["save_checkpoint", "load_checkpoint", "CHECKPOINT_MAGIC", "CHECKPOINT_VERSION"]

CHECKPOINT_MAGIC = b"CTGC"
CHECKPOINT_VERSION = 1

_HEADER = struct.Struct("<4sIIIII")


def save_checkpoint(path, params: ModelParams) -> None:
    k = params.cheb_k  # 0 encodes the graphconv variant
    parts = [_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                          params.n_labels, params.d, k, params.n_layers)]
    for tensor in param_tensors(params):
        arr = np.ascontiguousarray(tensor, dtype="<f8")
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedPayloadError(
                f"checkpoint truncated: wanted {n} bytes at offset {self.offset}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def tensor(self) -> np.ndarray:
        rank = self.u32()
        if rank > 8:
            raise TruncatedPayloadError(f"implausible tensor rank {rank}")
        dims = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").reshape(dims).copy()

    def done(self) -> bool:
        return self.offset == len(self.data)


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError(
            f"not a checkpoint file: expected magic {CHECKPOINT_MAGIC!r}, "
            f"got {data[:4]!r}"
        )
    reader = _Reader(data)
    reader.take(4)  # magic, already validated
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    n_labels = reader.u32()
    d = reader.u32()
    k = reader.u32()
    n_layers = reader.u32()
    if n_labels < 1 or d < 1 or n_layers < 1:
        raise TruncatedPayloadError(
            f"implausible header: n_labels={n_labels}, d={d}, n_layers={n_layers}"
        )
    variant = Variant.CHEB if k >= 1 else Variant.GRAPHCONV

    layers = []
    for _ in range(n_layers):
        if variant is Variant.CHEB:
            layers.append(ChebLayer(reader.tensor(), reader.tensor(), reader.tensor()))
        else:
            layers.append(GraphConvLayer(reader.tensor(), reader.tensor(), reader.tensor()))
    head = Head(reader.tensor(), reader.tensor(), reader.tensor(), reader.tensor())
    if not reader.done():
        raise TruncatedPayloadError(
            f"{len(reader.data) - reader.offset} unexpected trailing bytes"
        )

    params = ModelParams(tuple(layers), head)
    if params.d != d or params.n_labels != n_labels or params.cheb_k != k:
        raise TruncatedPayloadError(
            "checkpoint header disagrees with stored tensor shapes"
        )
    return params
