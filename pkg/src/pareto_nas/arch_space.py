"""Architecture configurations, search spaces and the random sampler."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np


class EmptyFeasibleSet(ValueError):
    """No architecture in the search space satisfies the structural rules."""


class BackboneTag(str, Enum):
    GPT2 = "Gpt2"
    TRANSFORMER_XL = "TransformerXl"
    OPT_STYLE = "OptStyle"


class BiasConvention(str, Enum):
    ATTN_BIASED = "AttnBiased"
    ATTN_UNBIASED = "AttnUnbiased"


_BACKBONE_DEFAULTS: dict[BackboneTag, dict[str, Any]] = {
    BackboneTag.GPT2: dict(
        include_final_layernorm=True,
        include_positional_embedding=False,
        max_positions=1024,
        bias_convention=BiasConvention.ATTN_BIASED,
    ),
    BackboneTag.OPT_STYLE: dict(
        include_final_layernorm=True,
        include_positional_embedding=True,
        max_positions=2048,
        bias_convention=BiasConvention.ATTN_BIASED,
    ),
    BackboneTag.TRANSFORMER_XL: dict(
        include_final_layernorm=False,
        include_positional_embedding=False,
        max_positions=1024,
        bias_convention=BiasConvention.ATTN_UNBIASED,
    ),
}

DEFAULT_VOCAB = {
    BackboneTag.GPT2: 50257,
    BackboneTag.OPT_STYLE: 50257,
    BackboneTag.TRANSFORMER_XL: 267735,
}


@dataclass(frozen=True)
class Backbone:
    tag: BackboneTag
    include_final_layernorm: bool
    include_positional_embedding: bool
    max_positions: int
    bias_convention: BiasConvention

    def __post_init__(self):
        object.__setattr__(self, "tag", BackboneTag(self.tag))
        object.__setattr__(self, "bias_convention", BiasConvention(self.bias_convention))
        if self.max_positions < 1:
            raise ValueError("max_positions must be >= 1")

    @classmethod
    def of(cls, tag: BackboneTag | str, **overrides: Any) -> "Backbone":
        """Backbone with the per-tag defaults, optionally overridden."""
        tag = BackboneTag(tag)
        kwargs = dict(_BACKBONE_DEFAULTS[tag])
        kwargs.update(overrides)
        return cls(tag=tag, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "tag": self.tag.value,
            "include_final_layernorm": self.include_final_layernorm,
            "include_positional_embedding": self.include_positional_embedding,
            "max_positions": self.max_positions,
            "bias_convention": self.bias_convention.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any] | str) -> "Backbone":
        # a bare tag string means "defaults for that tag"
        if isinstance(data, str):
            return cls.of(data)
        data = dict(data)
        tag = data.pop("tag")
        return cls.of(tag, **data)


@dataclass(frozen=True)
class ArchConfig:
    """One candidate decoder-only Transformer.

    Per-layer genes are always stored as explicit tuples, even for
    homogeneous models. Construction only checks structure (lengths and
    positivity); search-space rules are reported by :func:`validate`.
    """

    backbone: Backbone
    n_layer: int
    d_model: int
    d_embed: int
    k_factor: int
    n_head: tuple[int, ...]
    d_inner: tuple[int, ...]
    vocab_size: int

    def __post_init__(self):
        object.__setattr__(self, "n_head", tuple(int(h) for h in self.n_head))
        object.__setattr__(self, "d_inner", tuple(int(d) for d in self.d_inner))
        for name in ("n_layer", "d_model", "d_embed", "k_factor", "vocab_size"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if len(self.n_head) != self.n_layer or len(self.d_inner) != self.n_layer:
            raise ValueError(
                f"n_head and d_inner must have n_layer={self.n_layer} entries, "
                f"got {len(self.n_head)} and {len(self.d_inner)}"
            )
        if any(h < 1 for h in self.n_head) or any(d < 1 for d in self.d_inner):
            raise ValueError("per-layer genes must be positive")

    @classmethod
    def build(
        cls,
        backbone: Backbone | BackboneTag | str,
        n_layer: int,
        d_model: int,
        n_head: int | Sequence[int],
        d_inner: int | Sequence[int],
        *,
        d_embed: int | None = None,
        k_factor: int = 1,
        vocab_size: int | None = None,
    ) -> "ArchConfig":
        """Convenience constructor: scalars are replicated across layers,
        ``d_embed`` defaults to ``d_model`` and ``vocab_size`` to the
        backbone's usual vocabulary."""
        if not isinstance(backbone, Backbone):
            backbone = Backbone.of(backbone)
        if isinstance(n_head, int):
            n_head = [n_head] * n_layer
        if isinstance(d_inner, int):
            d_inner = [d_inner] * n_layer
        return cls(
            backbone=backbone,
            n_layer=n_layer,
            d_model=d_model,
            d_embed=d_model if d_embed is None else d_embed,
            k_factor=k_factor,
            n_head=tuple(n_head),
            d_inner=tuple(d_inner),
            vocab_size=DEFAULT_VOCAB[backbone.tag] if vocab_size is None else vocab_size,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "backbone": self.backbone.to_dict(),
            "n_layer": self.n_layer,
            "d_model": self.d_model,
            "d_embed": self.d_embed,
            "k_factor": self.k_factor,
            "n_head": list(self.n_head),
            "d_inner": list(self.d_inner),
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ArchConfig":
        backbone = Backbone.from_dict(data["backbone"])
        n_layer = int(data["n_layer"])
        d_model = int(data["d_model"])
        return cls(
            backbone=backbone,
            n_layer=n_layer,
            d_model=d_model,
            d_embed=int(data.get("d_embed", d_model)),
            k_factor=int(data.get("k_factor", 1)),
            n_head=tuple(data["n_head"]),
            d_inner=tuple(data["d_inner"]),
            vocab_size=int(data.get("vocab_size", DEFAULT_VOCAB[backbone.tag])),
        )

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, no whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchConfig":
        return cls.from_dict(json.loads(text))

    @cached_property
    def key(self) -> str:
        return config_key(self)


def config_key(config: ArchConfig) -> str:
    """SHA-256 hex digest of the canonical JSON serialization."""
    return hashlib.sha256(config.to_json().encode("utf-8")).hexdigest()


def aspect_ratio(config: ArchConfig) -> Fraction:
    """Width-to-depth ratio ``d_model / n_layer`` as an exact fraction."""
    return Fraction(config.d_model, config.n_layer)


@dataclass(frozen=True)
class IntRange:
    """Inclusive integer grid ``{min, min+step, ..., <= max}``."""

    min: int
    max: int
    step: int = 1

    def __post_init__(self):
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if self.min > self.max:
            raise ValueError(f"min {self.min} > max {self.max}")

    def values(self, lower: int | None = None) -> list[int]:
        """Grid points, optionally only those >= ``lower``."""
        start = self.min
        if lower is not None and lower > self.min:
            start = self.min + -(-(lower - self.min) // self.step) * self.step
        return list(range(start, self.max + 1, self.step))

    def contains(self, value: int) -> bool:
        return self.min <= value <= self.max and (value - self.min) % self.step == 0

    def to_list(self) -> list[int]:
        return [self.min, self.max, self.step]

    @classmethod
    def coerce(cls, value: "IntRange | Sequence[int] | Mapping[str, int]") -> "IntRange":
        if isinstance(value, IntRange):
            return value
        if isinstance(value, Mapping):
            return cls(int(value["min"]), int(value["max"]), int(value.get("step", 1)))
        return cls(*(int(v) for v in value))


@dataclass(frozen=True)
class SearchSpace:
    """Legal values for every architectural gene.

    An empty ``d_embed_choices`` ties ``d_embed`` to ``d_model``; ``fixed_k``
    overrides ``k_choices``.
    """

    n_layer_range: IntRange = IntRange(2, 16, 1)
    d_model_range: IntRange = IntRange(128, 1024, 64)
    d_inner_range: IntRange = IntRange(256, 4096, 64)
    n_head_choices: tuple[int, ...] = (2, 4, 8)
    d_embed_choices: tuple[int, ...] = (128, 256, 512)
    k_choices: tuple[int, ...] = (1, 2, 4)
    homogeneous: bool = False
    fixed_k: int | None = None
    backbone: Backbone = field(default_factory=lambda: Backbone.of(BackboneTag.GPT2))
    vocab_size: int | None = None

    def __post_init__(self):
        for name in ("n_layer_range", "d_model_range", "d_inner_range"):
            object.__setattr__(self, name, IntRange.coerce(getattr(self, name)))
        for name in ("n_head_choices", "d_embed_choices", "k_choices"):
            object.__setattr__(self, name, tuple(sorted({int(v) for v in getattr(self, name)})))
        if not isinstance(self.backbone, Backbone):
            object.__setattr__(self, "backbone", Backbone.from_dict(self.backbone))
        if not self.n_head_choices:
            raise ValueError("n_head_choices must not be empty")
        if self.fixed_k is None and not self.k_choices:
            raise ValueError("either k_choices or fixed_k is required")
        if self.n_layer_range.min < 1 or self.d_model_range.min < 1 or self.d_inner_range.min < 1:
            raise ValueError("range minimums must be positive")

    @property
    def resolved_vocab(self) -> int:
        return DEFAULT_VOCAB[self.backbone.tag] if self.vocab_size is None else self.vocab_size

    @property
    def k_values(self) -> tuple[int, ...]:
        return (self.fixed_k,) if self.fixed_k is not None else self.k_choices

    def heads_for(self, d_model: int) -> list[int]:
        return [h for h in self.n_head_choices if d_model % h == 0]

    def inner_values(self, d_model: int) -> list[int]:
        """d_inner grid points respecting the ``2 * d_model`` floor."""
        return self.d_inner_range.values(lower=max(2 * d_model, self.d_inner_range.min))

    def feasible_d_models(self) -> list[int]:
        """d_model grid points with at least one dividing head count and a
        non-empty d_inner range."""
        if 2 * self.d_model_range.min > self.d_inner_range.max:
            raise EmptyFeasibleSet(
                f"2*d_model_min={2 * self.d_model_range.min} exceeds d_inner_max={self.d_inner_range.max}"
            )
        feasible = [d for d in self.d_model_range.values() if self.heads_for(d) and self.inner_values(d)]
        if not feasible:
            raise EmptyFeasibleSet("no n_head choice divides any feasible d_model grid point")
        return feasible

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_layer_range": self.n_layer_range.to_list(),
            "d_model_range": self.d_model_range.to_list(),
            "d_inner_range": self.d_inner_range.to_list(),
            "n_head_choices": list(self.n_head_choices),
            "d_embed_choices": list(self.d_embed_choices),
            "k_choices": list(self.k_choices),
            "homogeneous": self.homogeneous,
            "fixed_k": self.fixed_k,
            "backbone": self.backbone.to_dict(),
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchSpace":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown search space fields: {sorted(unknown)}")
        return cls(**dict(data))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SearchSpace":
        return cls.from_dict(json.loads(text))


def default_space(backbone: BackboneTag | str = BackboneTag.GPT2, *, homogeneous: bool = False) -> SearchSpace:
    """The heterogeneous space used for the GPT-2 / Transformer-XL studies."""
    return SearchSpace(backbone=Backbone.of(backbone), homogeneous=homogeneous)


def opt_space() -> SearchSpace:
    """Search space sized around OPT-350M: non-adaptive embedding,
    ``d_embed == d_model``, no k factor."""
    return SearchSpace(
        n_layer_range=IntRange(3, 29, 1),
        d_model_range=IntRange(512, 1472, 64),
        d_inner_range=IntRange(512, 6080, 64),
        n_head_choices=(2, 4, 8, 16),
        d_embed_choices=(),
        k_choices=(),
        fixed_k=1,
        backbone=Backbone.of(BackboneTag.OPT_STYLE),
    )


PRESET_SPACES = {"default": default_space, "opt": opt_space}


def _choice(rng: np.random.Generator, values: Sequence[int]) -> int:
    return int(values[int(rng.integers(len(values)))])


def sample_layer_genes(
    space: SearchSpace, d_model: int, n: int, rng: np.random.Generator
) -> tuple[list[int], list[int]]:
    """Draw ``n`` (n_head, d_inner) pairs for a fixed d_model; heads first."""
    heads = space.heads_for(d_model)
    inners = space.inner_values(d_model)
    n_head = [_choice(rng, heads) for _ in range(n)]
    d_inner = [_choice(rng, inners) for _ in range(n)]
    return n_head, d_inner


def sample_from(space: SearchSpace, rng: np.random.Generator) -> ArchConfig:
    """Draw one config using a caller-owned generator."""
    d_models = space.feasible_d_models()
    n_layer = _choice(rng, space.n_layer_range.values())
    d_model = _choice(rng, d_models)
    if space.homogeneous:
        heads, inners = sample_layer_genes(space, d_model, 1, rng)
        n_head, d_inner = heads * n_layer, inners * n_layer
    else:
        n_head, d_inner = sample_layer_genes(space, d_model, n_layer, rng)
    d_embed = _choice(rng, space.d_embed_choices) if space.d_embed_choices else d_model
    k_factor = _choice(rng, space.k_values)
    return ArchConfig(
        backbone=space.backbone,
        n_layer=n_layer,
        d_model=d_model,
        d_embed=d_embed,
        k_factor=k_factor,
        n_head=tuple(n_head),
        d_inner=tuple(d_inner),
        vocab_size=space.resolved_vocab,
    )


def sample(space: SearchSpace, rng_seed: int) -> ArchConfig:
    """Sample one config; a pure function of ``(space, rng_seed)``."""
    return sample_from(space, np.random.default_rng(rng_seed))


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def validate(config: ArchConfig, space: SearchSpace | None = None) -> list[Violation]:
    """Every rule the config breaks; empty when it is a legal member of
    ``space`` (or merely structurally sound when ``space`` is None)."""
    out: list[Violation] = []
    if len(config.n_head) != config.n_layer:
        out.append(Violation("n_head", "length differs from n_layer"))
    if len(config.d_inner) != config.n_layer:
        out.append(Violation("d_inner", "length differs from n_layer"))
    for i, h in enumerate(config.n_head):
        if config.d_model % h:
            out.append(Violation(f"n_head[{i}]", f"d_model={config.d_model} not divisible by n_head={h}"))
    for i, d in enumerate(config.d_inner):
        if d < 2 * config.d_model:
            out.append(Violation(f"d_inner[{i}]", f"{d} below lower bound 2*d_model={2 * config.d_model}"))
    if (
        config.backbone.include_positional_embedding
        and config.backbone.max_positions < 1
    ):
        out.append(Violation("backbone.max_positions", "must be >= 1 with positional embeddings"))
    if space is None:
        return out

    if not space.n_layer_range.contains(config.n_layer):
        out.append(Violation("n_layer", f"{config.n_layer} not on grid {space.n_layer_range.to_list()}"))
    if not space.d_model_range.contains(config.d_model):
        out.append(Violation("d_model", f"{config.d_model} not on grid {space.d_model_range.to_list()}"))
    for i, h in enumerate(config.n_head):
        if h not in space.n_head_choices:
            out.append(Violation(f"n_head[{i}]", f"{h} not in {list(space.n_head_choices)}"))
    for i, d in enumerate(config.d_inner):
        if not space.d_inner_range.contains(d):
            out.append(Violation(f"d_inner[{i}]", f"{d} not on grid {space.d_inner_range.to_list()}"))
    if space.d_embed_choices:
        if config.d_embed not in space.d_embed_choices:
            out.append(Violation("d_embed", f"{config.d_embed} not in {list(space.d_embed_choices)}"))
    elif config.d_embed != config.d_model:
        out.append(Violation("d_embed", "must equal d_model in this space"))
    if config.k_factor not in space.k_values:
        out.append(Violation("k_factor", f"{config.k_factor} not in {list(space.k_values)}"))
    if space.homogeneous and (len(set(config.n_head)) > 1 or len(set(config.d_inner)) > 1):
        out.append(Violation("n_head/d_inner", "per-layer genes must be constant in a homogeneous space"))
    if config.backbone != space.backbone:
        out.append(Violation("backbone", "differs from the search space backbone"))
    if config.vocab_size != space.resolved_vocab:
        out.append(Violation("vocab_size", f"expected {space.resolved_vocab}"))
    return out
