import math
import random

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from pareto_nas.metrics import (
    DegenerateSeries,
    IdMismatch,
    LengthMismatch,
    average_ranks,
    common_ratio,
    perplexity,
    spearman,
    top_count,
)


def brute_ranks(xs):
    # rank = 1 + #smaller + (#equal - 1) / 2, counted pair by pair
    out = []
    for a in xs:
        smaller = sum(1 for b in xs if b < a)
        equal = sum(1 for b in xs if b == a)
        out.append(smaller + (equal + 1) / 2)
    return out


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    n = len(x)
    mx, my = math.fsum(rx) / n, math.fsum(ry) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.fsum((a - mx) ** 2 for a in rx)
    vy = math.fsum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def brute_common_ratio(truth, proxy, pct):
    n = len(truth)
    m = max(1, -(-int(round(pct * 1000)) * n // 100000))  # ceil(pct/100*n) on a 0.001 grid
    pos = {i: k for k, (i, _) in enumerate(truth)}
    # selection sort with explicit tie-breaks by position in truth
    def top(pairs, better):
        remaining = list(pairs)
        chosen = []
        for _ in range(m):
            best = remaining[0]
            for cand in remaining[1:]:
                if better(cand, best):
                    best = cand
            chosen.append(best[0])
            remaining.remove(best)
        return set(chosen)

    t = top(truth, lambda a, b: a[1] < b[1] or (a[1] == b[1] and pos[a[0]] < pos[b[0]]))
    p = top(proxy, lambda a, b: a[1] > b[1] or (a[1] == b[1] and pos[a[0]] < pos[b[0]]))
    return len(t & p) / m


def random_series(rng, n, ties):
    if ties:
        return [float(rng.randint(0, max(1, n // 3))) for _ in range(n)]
    return [rng.uniform(-1e3, 1e3) for _ in range(n)]


def test_hand_cases_exact():
    assert spearman([1, 2, 3], [3, 1, 2]) == -0.5
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0


def test_average_ranks_ties():
    assert list(average_ranks([10, 20, 20, 30])) == [1.0, 2.5, 2.5, 4.0]
    r = average_ranks([3, 3, 3, 1, 2, 2])
    assert sum(r) == 6 * 7 / 2


def test_spearman_errors():
    with pytest.raises(LengthMismatch):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(DegenerateSeries):
        spearman([1, 1, 1], [1, 2, 3])


def test_spearman_matches_brute_force():
    rng = random.Random(11)
    done = 0
    while done < 1000:
        n = rng.randint(2, 50)
        x, y = random_series(rng, n, rng.random() < 0.5), random_series(rng, n, rng.random() < 0.5)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert abs(spearman(x, y) - brute_spearman(x, y)) <= 1e-12
        done += 1


def test_common_ratio_hand_cases():
    ids = list(range(10))
    truth = [(i, float(i)) for i in ids]  # id 0 best
    assert common_ratio(truth, [(i, -float(i)) for i in ids], 30) == 1.0
    assert common_ratio(truth, [(i, float(i)) for i in ids], 100) == 1.0
    # proxy puts 0, 1 and 5 on top: two of the true top three
    scores = {0: 10, 1: 9, 5: 8}
    proxy = [(i, float(scores.get(i, -i))) for i in ids]
    assert common_ratio(truth, proxy, 30) == pytest.approx(2 / 3)
    assert common_ratio(truth, proxy, 30) == 2 / 3


def test_common_ratio_errors():
    with pytest.raises(IdMismatch):
        common_ratio([(1, 1.0), (2, 2.0)], [(1, 1.0), (3, 2.0)], 50)
    with pytest.raises(IdMismatch):
        common_ratio([(1, 1.0), (1, 2.0)], [(1, 1.0), (1, 2.0)], 50)
    with pytest.raises(ValueError):
        common_ratio([(1, 1.0)], [(1, 1.0)], 0)


def test_top_count_avoids_float_artifacts():
    assert top_count(10, 30) == 3  # 0.1 * 30 is 3.0000000000000004 in floats
    assert top_count(30, 10) == 3
    assert top_count(0.1, 10) == 1
    assert top_count(100, 7) == 7


def test_common_ratio_matches_brute_force():
    rng = random.Random(12)
    for _ in range(1000):
        n = rng.randint(1, 50)
        ids = rng.sample(range(1000), n)
        truth = list(zip(ids, random_series(rng, n, rng.random() < 0.5)))
        proxy_ids = list(ids)
        rng.shuffle(proxy_ids)
        proxy = list(zip(proxy_ids, random_series(rng, n, rng.random() < 0.5)))
        pct = rng.choice([1, 5, 10, 12.5, 30, 33.3, 50, 100])
        assert abs(common_ratio(truth, proxy, pct) - brute_common_ratio(truth, proxy, pct)) <= 1e-12


def test_perplexity():
    assert perplexity(0) == 1.0
    assert perplexity(1) == 2.0
    assert perplexity(math.log2(50257)) == pytest.approx(50257, rel=1e-12)


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40))
def test_property_symmetry(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    r = spearman(x, y)
    assert -1.0 <= r <= 1.0
    assert spearman(y, x) == pytest.approx(r, abs=1e-12)


@given(st.lists(st.tuples(st.integers(-10**6, 10**6), st.integers(-50, 50)), min_size=2, max_size=40))
def test_property_monotone_transform_invariance(pairs):
    x = [a for a, _ in pairs]
    y = [b for _, b in pairs]
    assume(len(set(x)) > 1 and len(set(y)) > 1)
    # exact integer arithmetic keeps the transform strictly increasing
    assert spearman([v**3 + 5 * v for v in x], y) == spearman(x, y)


@given(st.lists(finite, min_size=1, max_size=40, unique=True), st.randoms(use_true_random=False))
def test_property_full_overlap_at_100_percent(values, rnd):
    ids = list(range(len(values)))
    scores = list(values)
    rnd.shuffle(scores)
    assert common_ratio(list(zip(ids, values)), list(zip(ids, scores)), 100) == 1.0


@given(st.floats(-50, 50), st.floats(1e-9, 50))
def test_property_perplexity_increasing(a, gap):
    b = a + gap
    assert perplexity(a) < perplexity(b)
