import hashlib
from decimal import Decimal

import numpy as np
import pytest
from scipy.stats import spearmanr

from pareto_nas.costs import AnalyticCost
from pareto_nas.fixtures import (
    ALLOWLIST,
    GOLDEN_SHA256,
    ParseError,
    TabularBenchmark,
    calibrate_noise,
    golden_bytes,
    load_golden,
    parse_golden,
    replay,
    round_millions,
    synth_benchmark,
    verify_tables,
)
from pareto_nas.param_count import count_decoder

ANCHORS = {
    ("archs_opt", "baseline"): ("304.4", 304_408_576),
    ("archs_opt", "M1"): ("261.4", 261_410_304),
    ("archs_gpt", "TITAN Xp/M1"): ("6.3", 6_309_632),
    ("archs_gpt", "TITAN Xp/M10"): ("21.9", 21_899_392),
    ("archs_transxl", "ARM/M1"): ("5.2", 5_187_008),
    ("archs_transxl", "Corei7/M1"): ("4.3", 4_334_464),
}

HEADER = "table_id,row_id,backbone,n_layer,d_model,n_head_list,d_inner_list,paper_decoder_params_M\n"


def test_golden_file_is_pinned():
    assert hashlib.sha256(golden_bytes()).hexdigest() == GOLDEN_SHA256
    rows = load_golden()
    assert len(rows) == 257
    assert len({(r.table_id, r.model_id) for r in rows}) == 257


def test_every_row_matches():
    report = verify_tables()
    assert report.passed and report.n_match == report.n_rows == 257
    assert report.worst_delta_M == 0
    assert ALLOWLIST == {}


def test_anchor_rows():
    checks = {(c.row.table_id, c.row.model_id): c for c in verify_tables().checks}
    for key, (published, exact) in ANCHORS.items():
        c = checks[key]
        assert c.row.paper_decoder_params_M == Decimal(published)
        assert c.decoder_total == exact and c.match


def test_round_half_up():
    assert round_millions(6_350_000) == Decimal("6.4")
    assert round_millions(6_349_999) == Decimal("6.3")


def test_report_fails_on_wrong_value():
    rows = parse_golden(HEADER + 'x,r,Gpt2,1,64,"[2]","[256]",9.9\n')
    report = verify_tables(rows)
    assert not report.passed and report.to_dict()["deviations"][0]["row_id"] == "r"


@pytest.mark.parametrize("text", [
    "a,b\n1,2\n",
    HEADER + 'x,r,Gpt2,2,64,"[2]","[256,256]",1.0\n',
    HEADER + 'x,r,Bert,1,64,"[2]","[256]",1.0\n',
    HEADER + 'x,r,Gpt2,1,64,"[2","[256]",1.0\n',
    HEADER + 'x,r,Gpt2,1,64,"[2]","[256]",abc\n',
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_golden(text)


def test_noise_free_benchmark_is_perfect():
    bench = synth_benchmark(300, 0.0, seed=1)
    result = replay(bench)
    assert result.src == 1.0 and result.d_avg == 0.0
    assert set(result.proxy_frontier.payloads()) == set(result.truth_frontier.payloads())


def test_benchmark_rows_and_src_oracle():
    bench = synth_benchmark(400, 0.01, seed=2)
    assert len({c.key for c in bench.configs}) == 400
    analytic = AnalyticCost()
    for c in bench.configs[:50]:
        row = bench.table.rows[c.key]
        assert (row.latency_ms, row.peak_memory_bytes) == (analytic(c).latency_ms, analytic(c).peak_memory_bytes)
    params = [count_decoder(c).decoder_total for c in bench.configs]
    ppl = [bench.true_ppl(c) for c in bench.configs]
    expected = spearmanr(params, [-p for p in ppl]).statistic
    assert replay(bench).src == pytest.approx(expected, abs=1e-12)
    assert 0.5 < replay(bench).src < 1.0


def test_noise_draws_are_log_normal():
    bench = synth_benchmark(2000, 0.05, seed=3, scale=100.0, alpha=0.1)
    eps = [np.log(bench.true_ppl(c) / (100.0 * count_decoder(c).decoder_total ** -0.1)) for c in bench.configs]
    assert abs(np.mean(eps)) < 0.005 and np.std(eps) == pytest.approx(0.05, rel=0.05)


def test_save_load_round_trip(tmp_path):
    bench = synth_benchmark(20, 0.01, seed=4)
    csv_path, side = bench.save(tmp_path / "bench.csv")
    assert side.name == "bench.configs.jsonl"
    loaded = TabularBenchmark.load(csv_path)
    assert [c.key for c in loaded.configs] == [c.key for c in bench.configs]
    for c in bench.configs:
        assert loaded.true_ppl(c) == bench.true_ppl(c)


def test_synth_rejects_tiny_n():
    with pytest.raises(ValueError):
        synth_benchmark(1, 0.0, seed=0)


def test_calibrate_noise_hits_target():
    noise = calibrate_noise(500, seed=5, target_src=0.95)
    assert noise > 0
    assert replay(synth_benchmark(500, noise, seed=5)).src == pytest.approx(0.95, abs=1e-3)
