"""Neural building blocks: embeddings, GRU, attention, fusion, classifier.

All parameters are Tensors with requires_grad=True; forward functions build
their computation on the active ComputationRecord. Single-example semantics:
text is a token-index sequence, image input is a stack of region vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autograd import ops
from .autograd.tensor import Tensor
from .errors import (
    ContractError,
    DegenerateSliceError,
    DimensionError,
    EmptyPremiseError,
    VocabularyError,
)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


def init_uniform(rng: np.random.Generator, shape, fan_in: int,
                 dtype=np.float32) -> Tensor:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initializer."""
    if fan_in <= 0:
        raise ContractError(f"fan_in must be positive, got {fan_in}")
    bound = 1.0 / float(np.sqrt(fan_in))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def _vec_as_row(x: Tensor) -> Tensor:
    if len(x.shape) != 1:
        raise DimensionError(f"expected a rank-1 tensor, got shape {x.shape}")
    return ops.reshape(x, (1, x.shape[0]))


def affine_vec(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """(x @ weight) + bias for a rank-1 x; returns rank-1."""
    out = ops.matmul(_vec_as_row(x), weight)
    if bias is not None:
        out = ops.add(out, bias)
    return ops.reshape(out, (out.shape[1],))


class EmbeddingTable:
    """Token vocabulary with a dense vector per row.

    Row 0 is the padding row (all zeros, excluded from gradient updates);
    row 1 is the unknown-token row. Every token maps to a unique row >= 2.
    """

    pad_index = 0
    unk_index = 1

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray,
                 dtype=np.float32):
        tokens = list(tokens)
        if len(set(tokens)) != len(tokens):
            raise ContractError("vocabulary tokens must be unique")
        if PAD_TOKEN in tokens or UNK_TOKEN in tokens:
            raise ContractError(
                f"{PAD_TOKEN!r} and {UNK_TOKEN!r} rows are implicit; "
                "do not list them as vocabulary tokens")
        vectors = np.asarray(vectors, dtype=dtype)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens) + 2:
            raise DimensionError(
                f"vectors must have shape ({len(tokens) + 2}, dim) covering the "
                f"pad and unk rows, got {vectors.shape}")
        if np.any(vectors[self.pad_index] != 0.0):
            raise ContractError("padding row must be all zeros")
        self.vocabulary = {tok: i + 2 for i, tok in enumerate(tokens)}
        self.vectors = Tensor(vectors, requires_grad=True)

    @classmethod
    def random_init(cls, tokens: Sequence[str], dim: int = 300,
                    seed: int = 0, dtype=np.float32) -> "EmbeddingTable":
        rng = np.random.default_rng(seed)
        n = len(tokens) + 2
        bound = 1.0 / float(np.sqrt(dim))
        vectors = rng.uniform(-bound, bound, size=(n, dim)).astype(dtype)
        vectors[cls.pad_index] = 0.0
        return cls(tokens, vectors, dtype=dtype)

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, token: str) -> int:
        return self.vocabulary.get(token, self.unk_index)

    def lookup(self, tokens: Sequence[str]) -> list:
        return [self.index_of(t) for t in tokens]


def embed(tokens: Sequence[int], table: EmbeddingTable) -> Tensor:
    """Row lookup; pad positions yield zero vectors. Shape [L x dim]."""
    indices = [int(t) for t in tokens]
    for t in indices:
        if t < 0 or t >= table.size:
            raise VocabularyError(
                f"token index {t} out of range for vocabulary of {table.size} rows")
    if not indices:
        return Tensor(np.zeros((0, table.dim), dtype=table.vectors.data.dtype))
    return ops.gather_rows(table.vectors, indices,
                           frozen_rows=(table.pad_index,))


@dataclass
class GRUParams:
    """Update gate z, reset gate r, candidate state weights and biases."""

    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_z.shape[0]

    def __post_init__(self):
        d, h = self.w_z.shape
        for name in ("w_z", "w_r", "w_h"):
            if getattr(self, name).shape != (d, h):
                raise DimensionError(f"{name} must have shape ({d}, {h})")
        for name in ("u_z", "u_r", "u_h"):
            if getattr(self, name).shape != (h, h):
                raise DimensionError(f"{name} must have shape ({h}, {h})")
        for name in ("b_z", "b_r", "b_h"):
            if getattr(self, name).shape != (h,):
                raise DimensionError(f"{name} must have shape ({h},)")

    @classmethod
    def create(cls, input_size: int, hidden_size: int,
               rng: np.random.Generator, dtype=np.float32) -> "GRUParams":
        def w():
            return init_uniform(rng, (input_size, hidden_size), input_size,
                                dtype=dtype)

        def u():
            return init_uniform(rng, (hidden_size, hidden_size), hidden_size,
                                dtype=dtype)

        def b():
            return Tensor(np.zeros(hidden_size, dtype=dtype),
                          requires_grad=True)

        return cls(w_z=w(), u_z=u(), b_z=b(), w_r=w(), u_r=u(), b_r=b(),
                   w_h=w(), u_h=u(), b_h=b())

    def tensors(self) -> dict:
        return {"w_z": self.w_z, "u_z": self.u_z, "b_z": self.b_z,
                "w_r": self.w_r, "u_r": self.u_r, "b_r": self.b_r,
                "w_h": self.w_h, "u_h": self.u_h, "b_h": self.b_h}


def gru_forward(seq: Tensor, params: GRUParams,
                h0: Optional[Tensor] = None,
                length: Optional[int] = None):
    """Gated recurrent unit over seq rows.

    Returns (states [L x hidden], final [hidden]) where final is the state
    after step `length` (the last non-pad token); trailing steps past
    `length` still appear in states but do not affect final.
    """
    if len(seq.shape) != 2:
        raise DimensionError(f"seq must be rank-2 [L x input], got {seq.shape}")
    n_steps, input_size = seq.shape
    if input_size != params.input_size:
        raise DimensionError(
            f"seq width {input_size} does not match GRU input size "
            f"{params.input_size}")
    hidden = params.hidden_size
    if length is None:
        length = n_steps
    if not 0 <= length <= n_steps:
        raise ContractError(
            f"length must be in [0, {n_steps}], got {length}")
    dtype = seq.data.dtype
    if h0 is None:
        h0 = Tensor(np.zeros(hidden, dtype=dtype))
    if h0.shape != (hidden,):
        raise DimensionError(f"h0 must have shape ({hidden},), got {h0.shape}")

    one = Tensor(np.ones((1, hidden), dtype=dtype))
    h = _vec_as_row(h0)
    rows = []
    for t in range(n_steps):
        x = ops.gather_rows(seq, [t])
        z = ops.sigmoid(ops.add(ops.add(ops.matmul(x, params.w_z),
                                        ops.matmul(h, params.u_z)), params.b_z))
        r = ops.sigmoid(ops.add(ops.add(ops.matmul(x, params.w_r),
                                        ops.matmul(h, params.u_r)), params.b_r))
        cand = ops.tanh(ops.add(ops.add(ops.matmul(x, params.w_h),
                                        ops.matmul(ops.mul(r, h), params.u_h)),
                                params.b_h))
        h = ops.add(ops.mul(ops.sub(one, z), h), ops.mul(z, cand))
        rows.append(h)
    if not rows:
        return Tensor(np.zeros((0, hidden), dtype=dtype)), h0
    states = ops.concat(rows, axis=0)
    if length == 0:
        return states, h0
    final = ops.reshape(ops.gather_rows(states, [length - 1]), (hidden,))
    return states, final


@dataclass
class AttentionParams:
    """Projections for one attention application.

    Self-attention scores queries against keys with a scaled dot product;
    text-image attention scores each (text, region) pair through the `score`
    vector applied to tanh(query + key).
    """

    w_query: Tensor
    w_key: Tensor
    w_value: Tensor
    scale: float
    score: Optional[Tensor] = None

    def __post_init__(self):
        if self.w_query.shape[1] != self.w_key.shape[1]:
            raise DimensionError(
                "query and key must project to the same dimension, got "
                f"{self.w_query.shape[1]} and {self.w_key.shape[1]}")

    @property
    def attn_dim(self) -> int:
        return self.w_query.shape[1]

    @property
    def value_dim(self) -> int:
        return self.w_value.shape[1]

    @classmethod
    def for_self(cls, dim: int, attn_dim: int, value_dim: int,
                 rng: np.random.Generator, dtype=np.float32) -> "AttentionParams":
        return cls(
            w_query=init_uniform(rng, (dim, attn_dim), dim, dtype=dtype),
            w_key=init_uniform(rng, (dim, attn_dim), dim, dtype=dtype),
            w_value=init_uniform(rng, (dim, value_dim), dim, dtype=dtype),
            scale=1.0 / float(np.sqrt(attn_dim)),
        )

    @classmethod
    def for_cross(cls, text_dim: int, region_dim: int, attn_dim: int,
                  value_dim: int, rng: np.random.Generator,
                  dtype=np.float32) -> "AttentionParams":
        return cls(
            w_query=init_uniform(rng, (text_dim, attn_dim), text_dim,
                                 dtype=dtype),
            w_key=init_uniform(rng, (region_dim, attn_dim), region_dim,
                               dtype=dtype),
            w_value=init_uniform(rng, (region_dim, value_dim), region_dim,
                                 dtype=dtype),
            scale=1.0 / float(np.sqrt(attn_dim)),
            score=init_uniform(rng, (attn_dim, 1), attn_dim, dtype=dtype),
        )

    def tensors(self) -> dict:
        out = {"w_query": self.w_query, "w_key": self.w_key,
               "w_value": self.w_value}
        if self.score is not None:
            out["score"] = self.score
        return out


def self_attention(x: Tensor, params: AttentionParams,
                   mask: Optional[np.ndarray] = None):
    """Scaled dot-product attention of x against itself.

    mask (length-L bool, True = pad) removes positions from the key side;
    every weights row sums to 1 over the kept keys. Returns (y, weights).
    """
    if len(x.shape) != 2:
        raise DimensionError(f"x must be rank-2 [L x D], got {x.shape}")
    n = x.shape[0]
    if n == 0:
        raise DegenerateSliceError("cannot attend over an empty sequence")
    q = ops.matmul(x, params.w_query)
    k = ops.matmul(x, params.w_key)
    v = ops.matmul(x, params.w_value)
    scores = ops.matmul(q, ops.transpose(k))
    if params.scale != 1.0:
        scores = scores * params.scale
    mask2d = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n,):
            raise DimensionError(
                f"mask must have shape ({n},), got {mask.shape}")
        mask2d = np.broadcast_to(mask, (n, n))
    weights = ops.softmax(scores, axis=1, mask=mask2d)
    return ops.matmul(weights, v), weights


def cross_attention(text: Tensor, regions: Tensor, params: AttentionParams):
    """Text-conditioned attention over region vectors.

    score_i = score . tanh(W_q text + W_k region_i), weights = softmax of the
    scaled scores, attended = sum_i weight_i * (W_v region_i).
    Returns (attended [value_dim], weights [N]).
    """
    if params.score is None:
        raise ContractError(
            "text-image attention requires AttentionParams with a score "
            "projection (use AttentionParams.for_cross)")
    if len(regions.shape) != 2:
        raise DimensionError(
            f"regions must be rank-2 [N x D], got {regions.shape}")
    n = regions.shape[0]
    if n == 0:
        raise EmptyPremiseError("cross_attention requires at least one region")
    q = ops.matmul(_vec_as_row(text), params.w_query)
    k = ops.matmul(regions, params.w_key)
    hidden = ops.tanh(ops.add(k, q))
    scores = ops.reshape(ops.matmul(hidden, params.score), (n,))
    if params.scale != 1.0:
        scores = scores * params.scale
    weights = ops.softmax(scores, axis=0)
    v = ops.matmul(regions, params.w_value)
    attended = ops.reshape(ops.matmul(ops.reshape(weights, (1, n)), v),
                           (params.value_dim,))
    return attended, weights


def fuse(text_feat: Tensor, image_feat: Tensor, proj_t: Tensor,
         proj_i: Tensor) -> Tensor:
    """Elementwise product of the two projections onto a common width."""
    if proj_t.shape[1] != proj_i.shape[1]:
        raise DimensionError(
            f"projections must share output width, got {proj_t.shape[1]} "
            f"and {proj_i.shape[1]}")
    return ops.mul(affine_vec(text_feat, proj_t), affine_vec(image_feat, proj_i))


@dataclass
class MLPParams:
    """Affine layers with relu between consecutive layers (none after last)."""

    layers: list = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ContractError("MLP needs at least one layer")
        for i, (w, b) in enumerate(self.layers):
            if len(w.shape) != 2 or b.shape != (w.shape[1],):
                raise DimensionError(
                    f"layer {i}: weight {w.shape} and bias {b.shape} mismatch")
            if i > 0 and self.layers[i - 1][0].shape[1] != w.shape[0]:
                raise DimensionError(
                    f"layer {i} input width {w.shape[0]} does not chain with "
                    f"previous output width {self.layers[i - 1][0].shape[1]}")

    @property
    def in_width(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_width(self) -> int:
        return self.layers[-1][0].shape[1]

    @classmethod
    def create(cls, widths: Sequence[int], rng: np.random.Generator,
               dtype=np.float32) -> "MLPParams":
        if len(widths) < 2:
            raise ContractError("widths must list input and output at least")
        layers = []
        for d_in, d_out in zip(widths[:-1], widths[1:]):
            w = init_uniform(rng, (d_in, d_out), d_in, dtype=dtype)
            b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)
            layers.append((w, b))
        return cls(layers=layers)

    def tensors(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(self.layers):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out


def mlp_forward(x: Tensor, params: MLPParams) -> Tensor:
    """Affine-relu chain; relu is not applied after the final layer."""
    h = _vec_as_row(x)
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        h = ops.add(ops.matmul(h, w), b)
        if i != last:
            h = ops.relu(h)
    return ops.reshape(h, (h.shape[1],))


def mlp_classify(fused: Tensor, params: MLPParams) -> Tensor:
    """Classifier head; logits ordered (contradiction, neutral, entailment)."""
    if params.out_width != 3:
        raise ContractError(
            f"classifier must end in 3 logits, got width {params.out_width}")
    return mlp_forward(fused, params)
