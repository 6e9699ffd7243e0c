import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pareto_nas.arch_space import (
    ArchConfig,
    Backbone,
    BackboneTag,
    EmptyFeasibleSet,
    IntRange,
    SearchSpace,
    aspect_ratio,
    config_key,
    default_space,
    opt_space,
    sample,
    sample_from,
    validate,
)


def test_backbone_defaults():
    gpt = Backbone.of("Gpt2")
    assert gpt.include_final_layernorm and not gpt.include_positional_embedding
    opt = Backbone.of(BackboneTag.OPT_STYLE)
    assert opt.include_final_layernorm and opt.include_positional_embedding and opt.max_positions == 2048
    txl = Backbone.of("TransformerXl")
    assert not txl.include_final_layernorm and not txl.include_positional_embedding


def test_config_json_round_trip():
    c = ArchConfig.build("TransformerXl", 2, 512, [2, 4], [1216, 1280], d_embed=256, k_factor=4)
    assert ArchConfig.from_json(c.to_json()) == c
    doc = json.loads(c.to_json())
    assert doc["n_head"] == [2, 4] and doc["d_inner"] == [1216, 1280]
    assert doc["vocab_size"] == 267735


def test_config_key_is_sha256_of_canonical_json():
    import hashlib

    c = ArchConfig.build("Gpt2", 2, 128, 2, 256)
    text = json.dumps(c.to_dict(), sort_keys=True, separators=(",", ":"))
    assert config_key(c) == hashlib.sha256(text.encode()).hexdigest() == c.key
    assert " " not in c.to_json()


def test_structural_checks():
    with pytest.raises(ValueError):
        ArchConfig.build("Gpt2", 2, 128, [2], [256, 256])
    with pytest.raises(ValueError):
        ArchConfig.build("Gpt2", 0, 128, [], [])


def test_collapsed_space_yields_exactly_that_config():
    space = SearchSpace(
        n_layer_range=IntRange(2, 2), d_model_range=IntRange(512, 512), d_inner_range=IntRange(2048, 2048),
        n_head_choices=(8,), d_embed_choices=(512,), k_choices=(1,),
    )
    for seed in range(5):
        c = sample(space, seed)
        assert (c.n_layer, c.d_model, c.n_head, c.d_inner, c.d_embed, c.k_factor) == (
            2, 512, (8, 8), (2048, 2048), 512, 1
        )


def test_sampling_is_a_pure_function_of_seed():
    assert sample(default_space(), 123) == sample(default_space(), 123)
    assert sample(default_space(), 123) != sample(default_space(), 124)


@pytest.mark.parametrize("space", [default_space(), default_space(homogeneous=True), opt_space(),
                                   default_space("TransformerXl")])
def test_sampled_configs_are_valid(space):
    rng = np.random.default_rng(0)
    for _ in range(500):
        c = sample_from(space, rng)
        assert validate(c, space) == []
        assert space.n_layer_range.min <= c.n_layer <= space.n_layer_range.max
        assert all(d >= 2 * c.d_model for d in c.d_inner)
        if space.homogeneous:
            assert len(set(c.n_head)) == 1 and len(set(c.d_inner)) == 1


def test_fuzz_ten_thousand_seeds_validate_clean():
    space = default_space()
    bad = [s for s in range(10_000) if validate(sample(space, s), space)]
    assert bad == []


def test_d_model_marginal_covers_every_grid_point():
    space = default_space()
    rng = np.random.default_rng(2024)
    seen = {sample_from(space, rng).d_model for _ in range(10_000)}
    assert seen == set(range(128, 1025, 64))


def test_validate_names_the_offending_field():
    c = ArchConfig.build("Gpt2", 2, 256, [2, 2], [256, 512])
    v = validate(c)
    assert [x.field for x in v] == ["d_inner[0]"]
    assert "lower bound" in v[0].message

    c = ArchConfig.build("Gpt2", 2, 256, [2, 3], [512, 512])
    v = validate(c)
    assert [x.field for x in v] == ["n_head[1]"]
    assert "divisible" in v[0].message


def test_validate_against_space_grids():
    space = default_space()
    c = ArchConfig.build("Gpt2", 17, 200, 3, 4100, d_embed=100, k_factor=3)
    fields = {v.field.split("[")[0] for v in validate(c, space)}
    assert {"n_layer", "d_model", "d_inner", "d_embed", "k_factor", "n_head"} <= fields


def test_aspect_ratio_examples():
    assert aspect_ratio(ArchConfig.build("Gpt2", 3, 1024, 2, 2048)) == Fraction(1024, 3)
    assert float(aspect_ratio(ArchConfig.build("Gpt2", 3, 1024, 2, 2048))) == pytest.approx(341.333333)
    assert float(aspect_ratio(ArchConfig.build("Gpt2", 35, 128, 2, 256))) == pytest.approx(3.657142857)
    assert aspect_ratio(ArchConfig.build("Gpt2", 64, 64, 2, 128)) == 1


def test_empty_feasible_set():
    space = SearchSpace(d_model_range=IntRange(1024, 1024), d_inner_range=IntRange(256, 1024, 64))
    with pytest.raises(EmptyFeasibleSet):
        space.feasible_d_models()
    space = SearchSpace(d_model_range=IntRange(130, 130), n_head_choices=(3, 4), d_inner_range=IntRange(256, 512))
    with pytest.raises(EmptyFeasibleSet):
        sample(space, 0)


def test_heads_filtered_per_d_model():
    space = SearchSpace(d_model_range=IntRange(192, 192), n_head_choices=(2, 4, 8, 16))
    # 192 = 64 * 3 is divisible by 16 too
    assert space.heads_for(192) == [2, 4, 8, 16]
    assert space.heads_for(200) == [2, 4, 8]


def test_intrange_grid_lower_bound_rounds_up():
    r = IntRange(256, 4096, 64)
    vals = r.values(lower=300)
    assert vals[0] == 320 and vals[-1] == 4096
    assert r.contains(4096) and not r.contains(4100)


def test_search_space_json_round_trip():
    for space in (default_space(), opt_space(), default_space("TransformerXl", homogeneous=True)):
        assert SearchSpace.from_json(space.to_json()) == space


@given(st.integers(min_value=0, max_value=2**63 - 1))
def test_property_sample_valid_and_deterministic(seed):
    space = default_space()
    c = sample(space, seed)
    assert c == sample(space, seed)
    assert validate(c, space) == []
