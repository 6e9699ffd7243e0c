import numpy as np
import pytest

from pareto_nas.arch_space import ArchConfig, default_space, sample_from
from pareto_nas.costs import (
    DEVICE_PROFILES,
    AnalyticCost,
    CostQuery,
    CostSample,
    CostSource,
    CostTable,
    MeasuredCost,
    MeasurementFailure,
    MissingEntry,
    TabularCost,
    analytic_flops,
    estimate,
    lookup,
    measure,
)
from pareto_nas.param_count import count_decoder


def flops_oracle(n_layer, d, di, s):
    """Multiply-adds counted as two FLOPs, one matmul at a time."""
    per_layer = 0
    per_layer += 2 * s * d * (3 * d)  # q, k, v projections
    per_layer += 2 * s * s * d  # scores = q k^T
    per_layer += 2 * s * s * d  # weights @ v
    per_layer += 2 * s * d * d  # output projection
    per_layer += 2 * s * d * di  # FFN up
    per_layer += 2 * s * di * d  # FFN down
    return n_layer * per_layer


def test_unit_flops():
    c = ArchConfig.build("Gpt2", 1, 1, 1, 2)
    assert analytic_flops(c, 1) == 20


def test_gpt2_small_against_oracle():
    c = ArchConfig.build("Gpt2", 12, 768, 12, 3072)
    assert analytic_flops(c, 192) == flops_oracle(12, 768, 3072, 192)
    sample = estimate(CostQuery(c, seq_len=192))
    assert sample.latency_ms == flops_oracle(12, 768, 3072, 192) / 1e9
    assert sample.source is CostSource.ANALYTIC


def test_seq_doubling_more_than_doubles():
    c = ArchConfig.build("Gpt2", 1, 64, 2, 256)
    assert analytic_flops(c, 64) > 2 * analytic_flops(c, 32)


def test_memory_formula():
    c = ArchConfig.build("Gpt2", 2, 128, [2, 4], [256, 512])
    q = CostQuery(c, seq_len=16, batch=2, bytes_per_param=2)
    expected = count_decoder(c).decoder_total * 2 + 2 * 16 * (4 * 128 + 512 + 4 * 16) * 4
    assert estimate(q).peak_memory_bytes == expected
    gpu = DEVICE_PROFILES["synthetic-gpu"]
    assert estimate(q, gpu).peak_memory_bytes == round(expected * 1.2)


def test_analytic_is_pure_and_monotone():
    base = dict(n_layer=3, d_model=256, n_head=4, d_inner=1024)
    cost = AnalyticCost()
    c = ArchConfig.build("Gpt2", **base)
    assert cost(c) == cost(c)
    lat = cost(c).latency_ms
    for field, bump in (("n_layer", 1), ("d_model", 64), ("d_inner", 64)):
        args = dict(base)
        args[field] += bump
        assert cost(ArchConfig.build("Gpt2", **args)).latency_ms > lat
    assert AnalyticCost(seq_len=193)(c).latency_ms > lat


def test_same_params_different_costs():
    # equal decoder params, different topologies
    a = ArchConfig.build("Gpt2", 2, 256, 4, [512, 1536])
    b = ArchConfig.build("Gpt2", 2, 256, 4, [1024, 1024])
    assert count_decoder(a).decoder_total == count_decoder(b).decoder_total
    assert AnalyticCost()(a).peak_memory_bytes != AnalyticCost()(b).peak_memory_bytes


def test_seq_len_limited_by_positions():
    c = ArchConfig.build("OptStyle", 2, 256, 4, 512)
    with pytest.raises(ValueError):
        CostQuery(c, seq_len=4096)
    CostQuery(ArchConfig.build("Gpt2", 2, 256, 4, 512), seq_len=4096)


def test_measure_stub(stub_cmd):
    c = ArchConfig.build("Gpt2", 2, 256, 4, 512)
    s = measure(CostQuery(c, seq_len=64), stub_cmd("fixed_measure.py"))
    assert (s.latency_ms, s.peak_memory_bytes, s.repeats, s.source) == (12.5, 4096, 3, CostSource.MEASURED)


def test_measure_failure(stub_cmd):
    c = ArchConfig.build("Gpt2", 2, 256, 4, 512)
    with pytest.raises(MeasurementFailure):
        measure(CostQuery(c), stub_cmd("fail_proxy.py"))
    with pytest.raises(MeasurementFailure):
        measure(CostQuery(c), stub_cmd("echo_proxy.py"))  # wrong fields


def test_measured_latency_orders_like_params(stub_cmd):
    rng = np.random.default_rng(3)
    space = default_space()
    configs = []
    while len(configs) < 10:
        c = sample_from(space, rng)
        if all(abs(count_decoder(c).decoder_total - count_decoder(o).decoder_total) > 8_000_000 for o in configs):
            configs.append(c)
    provider = MeasuredCost(stub_cmd("sleep_measure.py"))
    assert not provider.parallel_safe
    lat = [provider(c).latency_ms for c in configs]
    params = [count_decoder(c).decoder_total for c in configs]
    assert list(np.argsort(lat)) == list(np.argsort(params))


def test_table_lookup_and_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    configs = [sample_from(default_space(), rng) for _ in range(50)]
    analytic = AnalyticCost()
    table = CostTable()
    for i, c in enumerate(configs):
        table.add(c, analytic(c), None if i % 5 == 0 else 10.0 + i / 7)
    path = tmp_path / "costs.csv"
    table.save(path)
    assert path.read_bytes().startswith(b"config_key,latency_ms,peak_memory_bytes,true_ppl\r\n")
    loaded = CostTable.load(path)
    provider = TabularCost(path)
    for i, c in enumerate(configs):
        hit = lookup(CostQuery(c), loaded)
        assert (hit.latency_ms, hit.peak_memory_bytes) == (analytic(c).latency_ms, analytic(c).peak_memory_bytes)
        assert hit.source is CostSource.TABULAR
        assert provider(c) == hit
        assert loaded.true_ppl(c) == table.true_ppl(c)
    with pytest.raises(MissingEntry):
        lookup(CostQuery(ArchConfig.build("Gpt2", 2, 128, 2, 256)), loaded)


def test_cost_sample_validation():
    with pytest.raises(ValueError):
        CostSample(-1.0, 0)
    with pytest.raises(ValueError):
        CostSample(float("inf"), 0)
