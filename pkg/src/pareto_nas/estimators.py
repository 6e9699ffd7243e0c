"""scikit-learn style wrappers over the functional core.

Inputs are sequences of architectures rather than numeric matrices, so
``check_configs`` plays the role of ``check_array``: it accepts
:class:`ArchConfig` objects, plain dicts or JSON strings.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .arch_space import PRESET_SPACES, ArchConfig, SearchSpace
from .costs import AnalyticCost, CostTable, MeasuredCost, TabularCost
from .evolution import SearchSettings, run_search
from .metrics import common_ratio, spearman
from .param_count import AdaptiveEmbeddingSpec, count_decoder, count_total
from .pareto import ObjectivePoint, dominates
from .proxies import get_proxy


def check_configs(X: Any, *, allow_empty: bool = False) -> list[ArchConfig]:
    """Coerce ``X`` into a list of configs, raising ``ValueError`` on bad
    entries and ``TypeError`` on a bare scalar."""
    if isinstance(X, (ArchConfig, Mapping, str, bytes)):
        raise TypeError("expected a sequence of configs, got a single item; wrap it in a list")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of configs, got {type(X).__name__}") from None
    out = []
    for i, item in enumerate(items):
        try:
            if isinstance(item, ArchConfig):
                out.append(item)
            elif isinstance(item, Mapping):
                out.append(ArchConfig.from_dict(item))
            elif isinstance(item, str):
                out.append(ArchConfig.from_json(item))
            else:
                raise TypeError(f"unsupported type {type(item).__name__}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"entry {i} is not a valid config: {exc}") from exc
    if not out and not allow_empty:
        raise ValueError("found 0 configs while at least 1 is required")
    return out


def _check_target(y: Any, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} entries for {n} configs")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    return y


class ParamCounter(TransformerMixin, BaseEstimator):
    """Maps configs to ``[decoder, embedding, grand]`` parameter counts.

    ``embedding_spec`` may be an :class:`AdaptiveEmbeddingSpec`, its dict
    form, ``"default"`` (per-config default bands) or None (decoder only,
    embedding column zero).
    """

    def __init__(self, embedding_spec: Any = None):
        self.embedding_spec = embedding_spec

    def fit(self, X, y=None):
        check_configs(X)
        spec = self.embedding_spec
        if isinstance(spec, Mapping):
            spec = AdaptiveEmbeddingSpec.from_dict(spec)
        elif spec is not None and spec != "default" and not isinstance(spec, AdaptiveEmbeddingSpec):
            raise ValueError(f"embedding_spec must be a spec, a dict, 'default' or None; got {spec!r}")
        self.spec_ = spec
        self.n_features_out_ = 3
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "spec_")
        configs = check_configs(X)
        rows = []
        for c in configs:
            if self.spec_ is None:
                b = count_decoder(c)
            elif self.spec_ == "default":
                b = count_total(c)
            else:
                b = count_total(c, self.spec_)
            rows.append((b.decoder_total, b.embedding_total, b.grand_total))
        return np.asarray(rows, dtype=np.int64).reshape(len(rows), 3)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.asarray(["decoder_params", "embedding_params", "total_params"], dtype=object)


class ProxyRanker(BaseEstimator):
    """Scores configs with a proxy; ``score`` is SRC against perplexity.

    ``y`` is a quality where lower is better (perplexity), so a perfect
    proxy reaches ``score == 1``.
    """

    def __init__(self, proxy: Any = "decoder_params", top_percent: Sequence[float] = (10, 30, 50, 100)):
        self.proxy = proxy
        self.top_percent = top_percent

    def fit(self, X, y):
        configs = check_configs(X)
        y = _check_target(y, len(configs))
        self.proxy_ = get_proxy(self.proxy) if not callable(self.proxy) else self.proxy
        scores = self._scores(configs)
        self.src_ = spearman(scores, -y)
        ids = list(range(len(configs)))
        self.common_ratio_ = {
            float(k): common_ratio(list(zip(ids, y)), list(zip(ids, scores)), k) for k in self.top_percent
        }
        return self

    def _scores(self, configs: Sequence[ArchConfig]) -> np.ndarray:
        return np.asarray([self.proxy_(c).value for c in configs], dtype=float)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "proxy_")
        return self._scores(check_configs(X))

    def score(self, X, y) -> float:
        configs = check_configs(X)
        y = _check_target(y, len(configs))
        return spearman(self.predict(configs), -y)


class ParetoSearch(BaseEstimator):
    """Evolutionary frontier search as an estimator.

    ``fit(X=None)`` runs the search; passing ``X`` restricts random draws to
    that pool of configs. ``transform`` maps configs to their objective
    vectors ``[score, latency_ms, peak_memory_bytes]`` and ``predict``
    flags configs no fitted frontier point dominates.
    """

    def __init__(
        self,
        space: Any = "default",
        proxy: Any = "decoder_params",
        cost: Any = "analytic",
        device_profile: str = "synthetic",
        seq_len: int = 192,
        n_iter: int = 30,
        population: int = 100,
        parents: int = 20,
        mutated_per_iter: int = 40,
        crossover_per_iter: int = 40,
        mutation_prob: float = 0.3,
        latency_cap_ms: float | None = None,
        memory_cap_bytes: int | None = None,
        frontier_mode: str = "nd",
        n_jobs: int = 1,
        random_state: int | None = 0,
    ):
        self.space = space
        self.proxy = proxy
        self.cost = cost
        self.device_profile = device_profile
        self.seq_len = seq_len
        self.n_iter = n_iter
        self.population = population
        self.parents = parents
        self.mutated_per_iter = mutated_per_iter
        self.crossover_per_iter = crossover_per_iter
        self.mutation_prob = mutation_prob
        self.latency_cap_ms = latency_cap_ms
        self.memory_cap_bytes = memory_cap_bytes
        self.frontier_mode = frontier_mode
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _space(self) -> SearchSpace:
        if isinstance(self.space, SearchSpace):
            return self.space
        if isinstance(self.space, str):
            return PRESET_SPACES[self.space]()
        return SearchSpace.from_dict(self.space)

    def _cost(self):
        if callable(self.cost):
            return self.cost
        if isinstance(self.cost, CostTable):
            return TabularCost(self.cost, seq_len=self.seq_len)
        if self.cost == "analytic":
            return AnalyticCost(self.device_profile, seq_len=self.seq_len)
        if isinstance(self.cost, Mapping) and "measure" in self.cost:
            return MeasuredCost(self.cost["measure"], seq_len=self.seq_len)
        raise ValueError(f"unsupported cost {self.cost!r}")

    def _seed(self) -> int:
        if self.random_state is None:
            return int(np.random.SeedSequence().entropy % 2**63)
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        raise ValueError("random_state must be an int or None")

    def fit(self, X=None, y=None):
        pool = check_configs(X) if X is not None else None
        settings = SearchSettings(
            n_iter=self.n_iter,
            population=self.population,
            parents=self.parents,
            mutated_per_iter=self.mutated_per_iter,
            crossover_per_iter=self.crossover_per_iter,
            mutation_prob=self.mutation_prob,
            latency_cap_ms=self.latency_cap_ms,
            memory_cap_bytes=self.memory_cap_bytes,
            rng_seed=self._seed(),
            frontier_mode=self.frontier_mode,
            jobs=self.n_jobs,
        )
        self.proxy_ = get_proxy(self.proxy) if not callable(self.proxy) else self.proxy
        self.cost_ = self._cost()
        frontier, state = run_search(self._space(), settings, self.proxy_, self.cost_, pool=pool)
        self.frontier_ = frontier
        self.state_ = state
        self.archive_ = state.archive
        self.history_ = list(state.log)
        self.frontier_configs_ = [p.config for p in state.frontier_points()]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "frontier_")
        rows = []
        for c in check_configs(X):
            hit = self.archive_.get(c.key)
            if hit is not None:
                s, lat, mem = hit.score.value, hit.cost.latency_ms, hit.cost.peak_memory_bytes
            else:
                sample = self.cost_(c)
                s, lat, mem = self.proxy_(c).value, sample.latency_ms, sample.peak_memory_bytes
            rows.append((float(s), float(lat), float(mem)))
        return np.asarray(rows, dtype=float).reshape(len(rows), 3)

    def predict(self, X) -> np.ndarray:
        objectives = self.transform(X)
        front = [p for p in self.frontier_.points]
        out = []
        for s, lat, mem in objectives:
            q = ObjectivePoint(s, lat, mem)
            out.append(not any(dominates(p, q) for p in front))
        return np.asarray(out, dtype=bool)

    def frontier_table(self) -> list[dict[str, Any]]:
        """Frontier rows with embedded configs, best score first."""
        check_is_fitted(self, "frontier_")
        pts = sorted(self.state_.frontier_points(), key=lambda p: (-p.score.value, p.cost.latency_ms, p.key))
        return [
            {
                "config_key": p.key,
                "score": p.score.value,
                "latency_ms": p.cost.latency_ms,
                "peak_memory_bytes": p.cost.peak_memory_bytes,
                "config": json.loads(p.config.to_json()),
            }
            for p in pts
        ]
