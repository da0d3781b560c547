"""Layer/model weight containers, seeded initialization, and the binary blob format.

Blob layout (little-endian, documented byte-exact in the README):

    bytes 0..3    magic ``MFW1``
    bytes 4..27   six uint32 fields: version, hidden, layer_count, head_count,
                  vocab, max_sequence
    then float32 arrays, row-major, in this order:
      token_embedding [vocab, hidden]
      position_embedding [max_sequence, hidden]
      per layer: ln1_scale[h], ln1_shift[h], wq[h,h], wk[h,h], wv[h,h],
                 wo[h,h], ln2_scale[h], ln2_shift[h], w1[h,4h], w2[4h,h]
      final_scale[h], final_shift[h]
      output_head [hidden, vocab]
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import FLOAT, ModelConfig, make_tensor, validate_config

MAGIC = b"MFW1"
VERSION = 1
_HEADER = struct.Struct("<6I")


@dataclass
class LayerWeights:
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray
    w1: np.ndarray  # [h, 4h]
    w2: np.ndarray  # [4h, h]

    def arrays(self) -> list[np.ndarray]:
        return [
            self.ln1_scale, self.ln1_shift, self.wq, self.wk, self.wv,
            self.wo, self.ln2_scale, self.ln2_shift, self.w1, self.w2,
        ]

    def element_count(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass
class ModelWeights:
    hidden_size: int
    head_count: int
    vocab: int
    max_sequence: int
    token_embedding: np.ndarray  # [vocab, h]
    position_embedding: np.ndarray  # [max_sequence, h]
    layers: list[LayerWeights]
    final_scale: np.ndarray
    final_shift: np.ndarray
    output_head: np.ndarray  # [h, vocab]

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def arrays(self) -> list[np.ndarray]:
        out = [self.token_embedding, self.position_embedding]
        for lw in self.layers:
            out.extend(lw.arrays())
        out.extend([self.final_scale, self.final_shift, self.output_head])
        return out

    def element_count(self) -> int:
        return sum(a.size for a in self.arrays())

    def nbytes(self) -> int:
        return self.element_count() * FLOAT().itemsize


def weight_elements(cfg: ModelConfig, vocab: int) -> int:
    """Element count of a full weight set, computed without allocating it."""
    h, l = cfg.hidden_size, cfg.layer_count
    per_layer = 12 * h * h + 4 * h
    return vocab * h + cfg.max_sequence * h + l * per_layer + 2 * h + h * vocab


def _layer_shapes(h: int) -> list[tuple[int, ...]]:
    return [
        (h,), (h,), (h, h), (h, h), (h, h), (h, h),
        (h,), (h,), (h, 4 * h), (4 * h, h),
    ]


def random_weights(
    cfg: ModelConfig, vocab: int, seed: int, scale: float = 0.02
) -> ModelWeights:
    """Seeded random weight set; layer-norm scales start at 1, shifts at 0."""
    validate_config(cfg)
    if vocab < 2:
        raise ValueError(f"vocab must be >= 2, got {vocab}")
    rng = np.random.default_rng(seed)
    h = cfg.hidden_size

    def normal(shape):
        return rng.normal(0.0, scale, size=shape).astype(FLOAT)

    layers = []
    for _ in range(cfg.layer_count):
        layers.append(
            LayerWeights(
                ln1_scale=np.ones(h, dtype=FLOAT),
                ln1_shift=np.zeros(h, dtype=FLOAT),
                wq=normal((h, h)),
                wk=normal((h, h)),
                wv=normal((h, h)),
                wo=normal((h, h)),
                ln2_scale=np.ones(h, dtype=FLOAT),
                ln2_shift=np.zeros(h, dtype=FLOAT),
                w1=normal((h, 4 * h)),
                w2=normal((4 * h, h)),
            )
        )
    return ModelWeights(
        hidden_size=h,
        head_count=cfg.head_count,
        vocab=vocab,
        max_sequence=cfg.max_sequence,
        token_embedding=normal((vocab, h)),
        position_embedding=normal((cfg.max_sequence, h)),
        layers=layers,
        final_scale=np.ones(h, dtype=FLOAT),
        final_shift=np.zeros(h, dtype=FLOAT),
        output_head=normal((h, vocab)),
    )


def save_weights(weights: ModelWeights, path) -> None:
    header = _HEADER.pack(
        VERSION,
        weights.hidden_size,
        weights.layer_count,
        weights.head_count,
        weights.vocab,
        weights.max_sequence,
    )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for arr in weights.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, h, layer_count, head_count, vocab, max_seq = _HEADER.unpack(
            fh.read(_HEADER.size)
        )
        if version != VERSION:
            raise ValueError(f"unsupported blob version {version}")
        payload = np.frombuffer(fh.read(), dtype="<f4")

    offset = 0

    def take(shape):
        nonlocal offset
        count = int(np.prod(shape))
        if offset + count > payload.size:
            raise ValueError("weight blob truncated")
        arr = make_tensor(shape, payload[offset : offset + count])
        offset += count
        return arr

    token_embedding = take((vocab, h))
    position_embedding = take((max_seq, h))
    layers = []
    for _ in range(layer_count):
        arrays = [take(shape) for shape in _layer_shapes(h)]
        layers.append(LayerWeights(*arrays))
    final_scale = take((h,))
    final_shift = take((h,))
    output_head = take((h, vocab))
    if offset != payload.size:
        raise ValueError(f"{payload.size - offset} trailing floats in weight blob")

    return ModelWeights(
        hidden_size=h,
        head_count=head_count,
        vocab=vocab,
        max_sequence=max_seq,
        token_embedding=token_embedding,
        position_embedding=position_embedding,
        layers=layers,
        final_scale=final_scale,
        final_shift=final_shift,
        output_head=output_head,
    )
