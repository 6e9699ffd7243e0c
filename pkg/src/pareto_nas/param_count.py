"""Exact integer parameter accounting for decoder-only Transformers.

Decoder parameters are everything inside the stack of decoder blocks, plus
the backbone-dependent final LayerNorm and learned positional table.
Embedding parameters are the input token embedding and the output softmax
projection. All arithmetic is on Python ints.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

from .arch_space import ArchConfig, Backbone, BiasConvention


class DivisibilityError(ValueError):
    """d_model is not a multiple of the layer's head count."""


class CutoffError(ValueError):
    """Adaptive-embedding cutoffs do not partition the vocabulary."""


@dataclass(frozen=True)
class ParamBreakdown:
    per_layer: tuple[int, ...]
    decoder_total: int
    embedding_total: int
    grand_total: int
    final_norm: int = 0
    positional: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_layer"] = list(self.per_layer)
        return d


@dataclass(frozen=True)
class AdaptiveEmbeddingSpec:
    cutoffs: tuple[int, ...]
    d_embed: int
    k_factor: int
    tied_softmax: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", tuple(int(c) for c in self.cutoffs))

    def band_widths(self) -> list[int]:
        return [max(1, self.d_embed // self.k_factor**j) for j in range(len(self.cutoffs))]

    def band_sizes(self) -> list[int]:
        edges = (0,) + self.cutoffs
        return [hi - lo for lo, hi in zip(edges, edges[1:])]

    def check(self, vocab_size: int | None = None) -> None:
        c = self.cutoffs
        if not c:
            raise CutoffError("cutoffs must not be empty")
        if c[0] <= 0:
            raise CutoffError(f"first cutoff must be positive, got {c[0]}")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise CutoffError(f"cutoffs must be strictly increasing: {list(c)}")
        if vocab_size is not None and c[-1] != vocab_size:
            raise CutoffError(f"last cutoff {c[-1]} must equal vocab_size {vocab_size}")
        if self.d_embed < 1 or self.k_factor < 1:
            raise CutoffError("d_embed and k_factor must be positive")

    @classmethod
    def default_for(cls, config: ArchConfig, tied_softmax: bool = True) -> "AdaptiveEmbeddingSpec":
        """Cutoffs ``[20000, 40000, vocab]``, dropping any at or above the vocab."""
        cutoffs = [c for c in (20000, 40000) if c < config.vocab_size] + [config.vocab_size]
        return cls(tuple(cutoffs), config.d_embed, config.k_factor, tied_softmax)

    @classmethod
    def from_dict(cls, data: dict) -> "AdaptiveEmbeddingSpec":
        return cls(
            cutoffs=tuple(data["cutoffs"]),
            d_embed=int(data["d_embed"]),
            k_factor=int(data["k_factor"]),
            tied_softmax=bool(data.get("tied_softmax", True)),
        )


def count_layer(backbone: Backbone, d_model: int, n_head_i: int, d_inner_i: int) -> int:
    """Parameters in one decoder block.

    Biased attention (GPT-2/OPT): fused qkv and output projections with
    biases. Unbiased attention (Transformer-XL): qkv, output and relative
    position projections without biases, plus the per-layer r_w/r_r bias
    vectors (n_head * d_head each). Both add the two-matrix FFN with biases
    and two LayerNorms.
    """
    if d_model < 1 or n_head_i < 1 or d_inner_i < 1:
        raise ValueError("dimensions must be positive")
    if d_model % n_head_i:
        raise DivisibilityError(f"d_model={d_model} is not divisible by n_head={n_head_i}")
    ffn = 2 * d_model * d_inner_i + d_inner_i + d_model
    norms = 4 * d_model
    if backbone.bias_convention is BiasConvention.ATTN_BIASED:
        attn = 4 * (d_model * d_model + d_model)
    else:
        attn = 5 * d_model * d_model + 2 * d_model
    return attn + ffn + norms


def count_decoder(config: ArchConfig) -> ParamBreakdown:
    bb = config.backbone
    per_layer = tuple(
        count_layer(bb, config.d_model, h, d) for h, d in zip(config.n_head, config.d_inner)
    )
    final_norm = 2 * config.d_model if bb.include_final_layernorm else 0
    positional = bb.max_positions * config.d_model if bb.include_positional_embedding else 0
    total = sum(per_layer) + final_norm + positional
    return ParamBreakdown(
        per_layer=per_layer,
        decoder_total=total,
        embedding_total=0,
        grand_total=total,
        final_norm=final_norm,
        positional=positional,
    )


def count_embedding(config: ArchConfig, spec: AdaptiveEmbeddingSpec | None = None) -> int:
    """Input embedding plus softmax projection parameters.

    With ``k == 1`` the table is a single ``vocab x d_embed`` matrix with
    one projection only when ``d_embed != d_model``. With ``k > 1`` band j
    holds ``band_size * (d_embed // k**j)`` weights plus its own projection
    to d_model. An untied softmax doubles the count.
    """
    if spec is None:
        spec = AdaptiveEmbeddingSpec.default_for(config)
    spec.check(config.vocab_size)
    if spec.k_factor == 1:
        total = config.vocab_size * spec.d_embed
        if spec.d_embed != config.d_model:
            total += spec.d_embed * config.d_model
    else:
        total = sum(
            size * width + width * config.d_model
            for size, width in zip(spec.band_sizes(), spec.band_widths())
        )
    return total if spec.tied_softmax else 2 * total


def count_total(config: ArchConfig, spec: AdaptiveEmbeddingSpec | None = None) -> ParamBreakdown:
    dec = count_decoder(config)
    emb = count_embedding(config, spec)
    return ParamBreakdown(
        per_layer=dec.per_layer,
        decoder_total=dec.decoder_total,
        embedding_total=emb,
        grand_total=dec.decoder_total + emb,
        final_norm=dec.final_norm,
        positional=dec.positional,
    )


def decoder_params(configs: Sequence[ArchConfig]) -> list[int]:
    return [count_decoder(c).decoder_total for c in configs]
