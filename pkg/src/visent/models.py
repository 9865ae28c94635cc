"""Model assembly: EVE (image/ROI), hypothesis-only, attention baselines, RN.

One VEModel class hosts every variant; the variant decides which parameter
groups exist and which forward path runs. All variants share the text
branch (embedding (+ self-attention) -> GRU final state) and the 3-way
classifier ordered (contradiction, neutral, entailment).
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .autograd import ops
from .autograd.tensor import Tensor
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    EmptyHypothesisError,
    EmptyPremiseError,
)
from . import layers
from .layers import (
    AttentionParams,
    EmbeddingTable,
    GRUParams,
    MLPParams,
)


class Label(enum.IntEnum):
    """Fixed integer encoding, in Table-column order."""

    CONTRADICTION = 0
    NEUTRAL = 1
    ENTAILMENT = 2

    @classmethod
    def from_name(cls, name: str) -> "Label":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ContractError(f"unknown label {name!r}") from None


class Variant(str, enum.Enum):
    EVE_IMAGE = "eve-image"
    EVE_ROI = "eve-roi"
    HYPOTHESIS_ONLY = "hypothesis-only"
    TOP_DOWN = "top-down"
    BOTTOM_UP = "bottom-up"
    RELATIONAL = "relational"

    @classmethod
    def from_string(cls, s: str) -> "Variant":
        key = s.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ConfigError(
            f"unknown variant {s!r}; expected one of "
            f"{', '.join(v.value for v in cls)}")


EVE_VARIANTS = (Variant.EVE_IMAGE, Variant.EVE_ROI)
BASELINE_ATTENTION_VARIANTS = (Variant.TOP_DOWN, Variant.BOTTOM_UP)


@dataclass(frozen=True)
class ModelConfig:
    variant: Variant
    embed_dim: int = 300
    hidden_size: int = 256
    attn_dim: int = 256
    fusion_width: int = 512
    classifier_hidden: int = 512
    region_dim: Optional[int] = None
    use_text_self_attention: bool = True
    use_image_self_attention: bool = True
    residual: bool = True
    rn_g_hidden: int = 256
    rn_g_out: int = 256
    seed: int = 0

    @classmethod
    def for_variant(cls, variant, **overrides) -> "ModelConfig":
        """Variant defaults: EVE keeps self-attention on, baselines force it off."""
        if isinstance(variant, str):
            variant = Variant.from_string(variant)
        cfg = cls(variant=variant, **overrides)
        if variant not in EVE_VARIANTS:
            forced = {}
            if "use_text_self_attention" not in overrides:
                forced["use_text_self_attention"] = False
            if "use_image_self_attention" not in overrides:
                forced["use_image_self_attention"] = False
            if forced:
                cfg = replace(cfg, **forced)
        cfg.validate()
        return cfg

    @property
    def needs_regions(self) -> bool:
        return self.variant != Variant.HYPOTHESIS_ONLY

    def validate(self, require_region_dim: bool = False) -> None:
        """region_dim may stay None in a stored config; it is resolved from
        the feature store before a model is built."""
        if not isinstance(self.variant, Variant):
            raise ConfigError(f"unknown variant {self.variant!r}")
        sizes = ("embed_dim", "hidden_size", "attn_dim", "fusion_width",
                 "classifier_hidden", "rn_g_hidden", "rn_g_out")
        # Field values arrive from config files, so bad types are user input.
        for name in sizes + ("seed",):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        for name in ("use_text_self_attention", "use_image_self_attention",
                     "residual"):
            value = getattr(self, name)
            if not isinstance(value, bool):
                raise ConfigError(f"{name} must be true or false, "
                                  f"got {value!r}")
        for name in sizes:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.needs_regions:
            if self.region_dim is not None and (
                    isinstance(self.region_dim, bool)
                    or not isinstance(self.region_dim, int)
                    or self.region_dim <= 0):
                raise ConfigError(
                    f"region_dim must be a positive integer, "
                    f"got {self.region_dim!r}")
            if self.region_dim is None and require_region_dim:
                raise ConfigError(
                    f"variant {self.variant.value} consumes image regions and "
                    "requires a region_dim")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        if "variant" not in d:
            raise ConfigError("model config requires a variant")
        d["variant"] = Variant.from_string(d["variant"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


class VEModel:
    """Visual entailment classifier over (hypothesis tokens, region stack)."""

    def __init__(self, config: ModelConfig, embedding: EmbeddingTable):
        config.validate(require_region_dim=True)
        if embedding.dim != config.embed_dim:
            raise DimensionError(
                f"embedding table dim {embedding.dim} does not match config "
                f"embed_dim {config.embed_dim}")
        self.config = config
        self.embedding = embedding
        self.dtype = embedding.vectors.data.dtype
        rng = np.random.default_rng(config.seed)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._params["embedding.vectors"] = embedding.vectors

        self.text_attn = None
        if config.use_text_self_attention:
            self.text_attn = AttentionParams.for_self(
                config.embed_dim, config.attn_dim, config.embed_dim, rng,
                dtype=self.dtype)
            self._register("text_attn", self.text_attn.tensors())

        self.gru = GRUParams.create(config.embed_dim, config.hidden_size, rng,
                                    dtype=self.dtype)
        self._register("gru", self.gru.tensors())

        self.image_attn = None
        self.cross_attn = None
        self.proj_text = None
        self.proj_image = None
        self.rn_g = None
        self.rn_f = None

        variant = config.variant
        if variant in EVE_VARIANTS or variant in BASELINE_ATTENTION_VARIANTS:
            if config.use_image_self_attention:
                self.image_attn = AttentionParams.for_self(
                    config.region_dim, config.attn_dim, config.region_dim,
                    rng, dtype=self.dtype)
                self._register("image_attn", self.image_attn.tensors())
            self.cross_attn = AttentionParams.for_cross(
                config.hidden_size, config.region_dim, config.attn_dim,
                config.region_dim, rng, dtype=self.dtype)
            self._register("cross_attn", self.cross_attn.tensors())
            self.proj_text = layers.init_uniform(
                rng, (config.hidden_size, config.fusion_width),
                config.hidden_size, dtype=self.dtype)
            self.proj_image = layers.init_uniform(
                rng, (config.region_dim, config.fusion_width),
                config.region_dim, dtype=self.dtype)
            self._params["fusion.proj_text"] = self.proj_text
            self._params["fusion.proj_image"] = self.proj_image
            classifier_in = config.fusion_width
        elif variant == Variant.HYPOTHESIS_ONLY:
            classifier_in = config.hidden_size
        elif variant == Variant.RELATIONAL:
            g_in = 2 * config.region_dim + config.hidden_size
            self.rn_g = MLPParams.create(
                [g_in, config.rn_g_hidden, config.rn_g_out], rng,
                dtype=self.dtype)
            self._register("rn_g", self.rn_g.tensors())
            classifier_in = config.rn_g_out
        else:  # pragma: no cover - validate() rejects unknown variants
            raise ConfigError(f"unhandled variant {variant!r}")

        self.classifier = MLPParams.create(
            [classifier_in, config.classifier_hidden, 3], rng,
            dtype=self.dtype)
        self._register("classifier", self.classifier.tensors())
        if variant == Variant.RELATIONAL:
            self.rn_f = self.classifier

        self.last_g_eval_count = 0

    def _register(self, prefix: str, tensors: dict) -> None:
        for name, t in tensors.items():
            self._params[f"{prefix}.{name}"] = t

    def parameters(self) -> "OrderedDict[str, Tensor]":
        """Name -> Tensor, in fixed construction order."""
        return self._params

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self._params.items())

    def load_state(self, arrays) -> None:
        missing = [k for k in self._params if k not in arrays]
        extra = [k for k in arrays if k not in self._params]
        if missing or extra:
            raise ContractError(
                f"parameter names do not match: missing {missing}, "
                f"unexpected {extra}")
        for name, tensor in self._params.items():
            arr = np.asarray(arrays[name])
            if arr.shape != tensor.shape:
                raise DimensionError(
                    f"checkpoint tensor {name} has shape {arr.shape}, "
                    f"expected {tensor.shape}")
            tensor.assign_values(arr.astype(tensor.data.dtype, copy=False))

    def _text_feature(self, tokens: Sequence[int]) -> Tensor:
        indices = [int(t) for t in tokens]
        pad = self.embedding.pad_index
        non_pad = [i for i, t in enumerate(indices) if t != pad]
        if not non_pad:
            raise EmptyHypothesisError(
                "hypothesis must contain at least one non-pad token")
        length = non_pad[-1] + 1
        emb = layers.embed(indices, self.embedding)
        x = emb
        if self.text_attn is not None:
            mask = np.array([t == pad for t in indices], dtype=bool)
            y, _ = layers.self_attention(
                x, self.text_attn, mask=mask if mask.any() else None)
            x = ops.add(y, x) if self.config.residual else y
        _, final = layers.gru_forward(x, self.gru, length=length)
        return final

    def _region_tensor(self, regions) -> Tensor:
        if regions is None:
            raise EmptyPremiseError(
                f"variant {self.config.variant.value} requires image regions")
        if not isinstance(regions, Tensor):
            regions = Tensor(np.asarray(regions, dtype=self.dtype))
        elif regions.data.dtype != self.dtype:
            regions = Tensor(regions.data.astype(self.dtype))
        if len(regions.shape) != 2:
            raise DimensionError(
                f"regions must be rank-2 [N x D], got {regions.shape}")
        if regions.shape[0] == 0:
            raise EmptyPremiseError("image premise has no regions")
        if regions.shape[1] != self.config.region_dim:
            raise DimensionError(
                f"region width {regions.shape[1]} does not match config "
                f"region_dim {self.config.region_dim}")
        return regions

    def forward(self, tokens: Sequence[int], regions=None) -> Tensor:
        """Logits Tensor[3] for one (hypothesis, premise) pair."""
        variant = self.config.variant
        if variant == Variant.HYPOTHESIS_ONLY:
            if regions is not None:
                raise ContractError(
                    "hypothesis-only model does not accept image regions")
            return layers.mlp_classify(self._text_feature(tokens),
                                       self.classifier)

        text = self._text_feature(tokens)
        r = self._region_tensor(regions)
        if variant == Variant.RELATIONAL:
            return self._rn_head(text, r)

        if self.image_attn is not None:
            y, _ = layers.self_attention(r, self.image_attn)
            r = ops.add(y, r) if self.config.residual else y
        attended, _ = layers.cross_attention(text, r, self.cross_attn)
        fused = layers.fuse(text, attended, self.proj_text, self.proj_image)
        return layers.mlp_classify(fused, self.classifier)

    def _rn_head(self, text: Tensor, regions: Tensor) -> Tensor:
        n = regions.shape[0]
        d = regions.shape[1]
        # All ordered pairs (i, j), self-pairs included: N^2 rows.
        data = regions.data
        left = np.repeat(data, n, axis=0)
        right = np.tile(data, (n, 1))
        pairs = Tensor(np.concatenate([left, right], axis=1))
        ones = Tensor(np.ones((n * n, 1), dtype=self.dtype))
        text_rows = ops.matmul(ones, ops.reshape(text, (1, text.shape[0])))
        h = ops.concat([pairs, text_rows], axis=1)
        for w, b in self.rn_g.layers:
            h = ops.relu(ops.add(ops.matmul(h, w), b))
        self.last_g_eval_count = n * n
        pooled = ops.reduce_sum(h, axis=0)
        return layers.mlp_classify(pooled, self.rn_f)


def cross_entropy(logits: Tensor, label) -> Tensor:
    """-log softmax(logits)[label], computed with max-shifted logits."""
    if logits.shape != (3,):
        raise ContractError(f"logits must have shape (3,), got {logits.shape}")
    idx = int(label)
    if not 0 <= idx <= 2:
        raise ContractError(f"label must be 0, 1 or 2, got {label!r}")
    m = ops.reduce_max(logits)
    shifted = ops.sub(logits, m)
    lse = ops.log(ops.reduce_sum(ops.exp(shifted)))
    picked = ops.reshape(
        ops.gather_rows(ops.reshape(shifted, (3, 1)), [idx]), ())
    return ops.sub(lse, picked)


def _expect_variant(model: VEModel, allowed, op_name: str) -> None:
    if model.config.variant not in allowed:
        raise ContractError(
            f"{op_name} expects variant in "
            f"{[v.value for v in allowed]}, got {model.config.variant.value}")


def eve_forward(model: VEModel, tokens: Sequence[int], regions) -> Tensor:
    _expect_variant(model, EVE_VARIANTS, "eve_forward")
    return model.forward(tokens, regions)


def hypothesis_only_forward(model: VEModel, tokens: Sequence[int]) -> Tensor:
    _expect_variant(model, (Variant.HYPOTHESIS_ONLY,),
                    "hypothesis_only_forward")
    return model.forward(tokens)


def attention_baseline_forward(model: VEModel, tokens: Sequence[int],
                               regions) -> Tensor:
    _expect_variant(model, BASELINE_ATTENTION_VARIANTS,
                    "attention_baseline_forward")
    return model.forward(tokens, regions)


def rn_forward(model: VEModel, tokens: Sequence[int], regions) -> Tensor:
    _expect_variant(model, (Variant.RELATIONAL,), "rn_forward")
    return model.forward(tokens, regions)
