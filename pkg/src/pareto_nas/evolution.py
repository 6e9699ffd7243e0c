"""Evolutionary Pareto-frontier search over a :class:`SearchSpace`."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

from .arch_space import ArchConfig, SearchSpace, _choice, sample_from
from .costs import CostSample, MeasurementFailure, MissingEntry
from .metrics import spearman
from .pareto import (
    Frontier,
    FrontierMode,
    ObjectivePoint,
    extract_frontier,
    hypervolume,
    non_dominated,
)
from .param_count import count_decoder
from .proxies import PluginFailure, ProxyScore

logger = logging.getLogger(__name__)

CostProvider = Callable[[ArchConfig], CostSample]
Proxy = Callable[[ArchConfig], ProxyScore]


class ExhaustedSpace(RuntimeError):
    """Deduplication left no new candidate for a whole iteration."""


class EmptyBin(ValueError):
    pass


@dataclass(frozen=True)
class SearchSettings:
    n_iter: int = 30
    population: int = 100
    parents: int = 20
    mutated_per_iter: int = 40
    crossover_per_iter: int = 40
    mutation_prob: float = 0.3
    latency_cap_ms: float | None = None
    memory_cap_bytes: int | None = None
    rng_seed: int = 0
    frontier_mode: FrontierMode = FrontierMode.NON_DOMINATED
    jobs: int = 1
    # (score, latency_ms, peak_memory_bytes); derived from iteration 0 when None
    hv_reference: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "frontier_mode", FrontierMode.parse(self.frontier_mode))
        if self.hv_reference is not None:
            object.__setattr__(self, "hv_reference", tuple(float(v) for v in self.hv_reference))
        for name in ("n_iter", "population"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("parents", "mutated_per_iter", "crossover_per_iter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mutated_per_iter + self.crossover_per_iter + self.parents > self.population:
            raise ValueError("mutated_per_iter + crossover_per_iter + parents must not exceed population")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must lie in [0, 1]")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def new_per_iter(self) -> int:
        """Fresh evaluations per iteration after the seeding round."""
        return self.population - self.parents

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SearchSettings":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown settings fields: {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict[str, Any]:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["frontier_mode"] = self.frontier_mode.value
        if self.hv_reference is not None:
            d["hv_reference"] = list(self.hv_reference)
        return d


@dataclass(frozen=True)
class EvaluatedPoint:
    config: ArchConfig
    score: ProxyScore
    cost: CostSample
    true_ppl: float | None = None

    @property
    def key(self) -> str:
        return self.config.key

    def objective(self) -> ObjectivePoint:
        return ObjectivePoint(self.score.value, self.cost.latency_ms, float(self.cost.peak_memory_bytes), self.key)


@dataclass
class SearchState:
    iteration: int = 0
    archive: dict[str, EvaluatedPoint] = field(default_factory=dict)
    frontier: Frontier = field(default_factory=lambda: Frontier(()))
    rng: np.random.Generator | None = None
    discarded: int = 0
    unevaluable: int = 0
    exhausted: bool = False
    hv_reference: tuple[float, float, float] | None = None
    log: list[dict[str, Any]] = field(default_factory=list)

    def frontier_points(self) -> list[EvaluatedPoint]:
        return [self.archive[p.payload] for p in self.frontier.points]


# -- variation operators ----------------------------------------------------


def _floor_inner(space: SearchSpace, d_model: int, value: int) -> int:
    """Raise ``value`` to the lowest legal d_inner if it is under the floor."""
    legal = space.inner_values(d_model)
    if value in legal:
        return value
    return next((v for v in legal if v >= value), legal[-1])


def repair(config: ArchConfig, space: SearchSpace, rng: np.random.Generator) -> ArchConfig:
    """Make a config legal again after its genes were recombined.

    d_inner values under ``2 * d_model`` are raised to the lowest legal grid
    point; head counts that no longer divide d_model are redrawn from the
    dividing choices. Homogeneous spaces keep one repeated block.
    """
    d_model = config.d_model
    heads = space.heads_for(d_model)
    n_head = [h if h in heads else _choice(rng, heads) for h in config.n_head]
    d_inner = [_floor_inner(space, d_model, d) for d in config.d_inner]
    if space.homogeneous:
        n_head = [n_head[0]] * config.n_layer
        d_inner = [d_inner[0]] * config.n_layer
    return replace(config, n_head=tuple(n_head), d_inner=tuple(d_inner))


def mutate(config: ArchConfig, space: SearchSpace, prob: float, rng: np.random.Generator) -> ArchConfig:
    """Resample each gene independently with probability ``prob``.

    Gene order: n_layer, d_model, per-layer n_head, per-layer d_inner,
    d_embed, k. A longer n_layer extends the per-layer lists with freshly
    drawn genes; a shorter one drops the tail.
    """
    def flip() -> bool:
        return bool(rng.random() < prob)

    n_layer = _choice(rng, space.n_layer_range.values()) if flip() else config.n_layer
    d_model = _choice(rng, space.feasible_d_models()) if flip() else config.d_model
    heads = space.heads_for(d_model)
    inners = space.inner_values(d_model)

    n_head = list(config.n_head)
    d_inner = list(config.d_inner)
    if space.homogeneous:
        h = _choice(rng, heads) if flip() else n_head[0]
        d = _choice(rng, inners) if flip() else d_inner[0]
        n_head, d_inner = [h] * n_layer, [d] * n_layer
    else:
        n_head = [_choice(rng, heads) if flip() else h for h in n_head]
        d_inner = [_choice(rng, inners) if flip() else d for d in d_inner]
        if n_layer < config.n_layer:
            n_head, d_inner = n_head[:n_layer], d_inner[:n_layer]
        else:
            extra = n_layer - config.n_layer
            n_head += [_choice(rng, heads) for _ in range(extra)]
            d_inner += [_choice(rng, inners) for _ in range(extra)]

    if space.d_embed_choices:
        d_embed = _choice(rng, space.d_embed_choices) if flip() else config.d_embed
    else:
        d_embed = d_model
    k_factor = _choice(rng, space.k_values) if flip() else config.k_factor
    child = replace(
        config,
        n_layer=n_layer,
        d_model=d_model,
        d_embed=d_embed,
        k_factor=k_factor,
        n_head=tuple(n_head),
        d_inner=tuple(d_inner),
    )
    return repair(child, space, rng)


def crossover(
    parent_a: ArchConfig, parent_b: ArchConfig, rng: np.random.Generator, space: SearchSpace
) -> ArchConfig:
    """Uniform per-gene crossover followed by :func:`repair`.

    Per-layer genes come index-wise from a random parent where both have the
    layer, otherwise from the deeper parent.
    """
    parents = (parent_a, parent_b)

    def pick(name: str):
        return getattr(parents[int(rng.integers(2))], name)

    n_layer = pick("n_layer")
    d_model = pick("d_model")
    d_embed = pick("d_embed") if space.d_embed_choices else d_model
    k_factor = pick("k_factor")
    longer = parent_a if parent_a.n_layer >= parent_b.n_layer else parent_b
    shared = min(parent_a.n_layer, parent_b.n_layer)
    n_head, d_inner = [], []
    for i in range(n_layer):
        if i < shared:
            n_head.append(parents[int(rng.integers(2))].n_head[i])
            d_inner.append(parents[int(rng.integers(2))].d_inner[i])
        else:
            n_head.append(longer.n_head[i])
            d_inner.append(longer.d_inner[i])
    child = replace(
        parent_a,
        n_layer=n_layer,
        d_model=d_model,
        d_embed=d_embed,
        k_factor=k_factor,
        n_head=tuple(n_head),
        d_inner=tuple(d_inner),
    )
    return repair(child, space, rng)


# -- search loop --------------------------------------------------------------


def _evaluate(config: ArchConfig, proxy: Proxy, cost: CostProvider):
    try:
        return proxy(config), cost(config)
    except (PluginFailure, MeasurementFailure, MissingEntry) as exc:
        return exc


def _default_reference(points: Sequence[EvaluatedPoint], settings: SearchSettings) -> tuple[float, float, float]:
    lat = settings.latency_cap_ms
    mem = settings.memory_cap_bytes
    if lat is None:
        lat = 2.0 * max(p.cost.latency_ms for p in points)
    if mem is None:
        mem = 2.0 * max(p.cost.peak_memory_bytes for p in points)
    return (0.0, float(lat), float(mem))


def archive_hypervolume(state: SearchState) -> float:
    """Hypervolume of the archive's non-dominated set, counting only points
    inside the fixed reference box."""
    if state.hv_reference is None or not state.archive:
        return 0.0
    ref_s, ref_l, ref_m = state.hv_reference
    inside = [
        p.objective() for p in state.archive.values()
        if p.score.value >= ref_s and p.cost.latency_ms <= ref_l and p.cost.peak_memory_bytes <= ref_m
    ]
    return hypervolume(non_dominated(inside).points, state.hv_reference)


def _within_caps(sample: CostSample, settings: SearchSettings) -> bool:
    if settings.latency_cap_ms is not None and sample.latency_ms > settings.latency_cap_ms:
        return False
    if settings.memory_cap_bytes is not None and sample.peak_memory_bytes > settings.memory_cap_bytes:
        return False
    return True


def run_search(
    space: SearchSpace,
    settings: SearchSettings,
    proxy: Proxy,
    cost_provider: CostProvider,
    *,
    on_iteration: Callable[[dict[str, Any]], None] | None = None,
    pool: Sequence[ArchConfig] | None = None,
) -> tuple[Frontier, SearchState]:
    """Iteratively grow an archive of evaluated configs and its frontier.

    Iteration 0 evaluates ``population`` random configs. Every later
    iteration subsamples parents from the frontier, breeds mutated and
    crossover children, tops up with random configs so that
    ``population - parents`` fresh configs are proposed, and recomputes the
    frontier over the whole archive. Deterministic for a fixed seed when the
    providers are.

    ``pool`` replaces random sampling with uniform draws from a finite set of
    configs, e.g. the rows of a tabular benchmark; children outside the pool
    are dropped before the random fill.
    """
    rng = np.random.default_rng(settings.rng_seed)
    state = SearchState(rng=rng, hv_reference=settings.hv_reference)
    rejected: set[str] = set()
    pool_keys = {c.key for c in pool} if pool else None
    parallel = settings.jobs > 1 and getattr(cost_provider, "parallel_safe", True)
    executor = ThreadPoolExecutor(max_workers=settings.jobs) if parallel else None

    def fresh(batch: dict[str, ArchConfig], budget: int) -> None:
        if pool:
            # draw from the unseen remainder so exhaustion is detected exactly
            seen = state.archive.keys() | rejected | batch.keys()
            remaining = [c for c in pool if c.key not in seen]
            need = min(budget - len(batch), len(remaining))
            if need > 0:
                for i in rng.choice(len(remaining), size=need, replace=False):
                    batch[remaining[int(i)].key] = remaining[int(i)]
            return
        # random fill with a bounded number of attempts so tiny spaces terminate
        attempts = 0
        while len(batch) < budget and attempts < 20 * budget + 100:
            attempts += 1
            c = sample_from(space, rng)
            if c.key not in state.archive and c.key not in rejected and c.key not in batch:
                batch[c.key] = c

    try:
        for it in range(settings.n_iter):
            state.iteration = it
            batch: dict[str, ArchConfig] = {}
            if it == 0 or not state.frontier.points:
                budget = settings.population
            else:
                budget = settings.new_per_iter
                frontier_cfgs = [state.archive[p.payload].config for p in state.frontier.points]
                n_par = min(settings.parents, len(frontier_cfgs))
                idx = rng.choice(len(frontier_cfgs), size=n_par, replace=False) if n_par else []
                parents = [frontier_cfgs[int(i)] for i in idx]
                children: list[ArchConfig] = []
                if parents:
                    for _ in range(settings.mutated_per_iter):
                        p = parents[int(rng.integers(len(parents)))]
                        children.append(mutate(p, space, settings.mutation_prob, rng))
                    for _ in range(settings.crossover_per_iter):
                        a, b = (int(i) for i in rng.choice(len(parents), size=2, replace=len(parents) < 2))
                        children.append(crossover(parents[a], parents[b], rng, space))
                for c in children:
                    k = c.key
                    if pool_keys is not None and k not in pool_keys:
                        continue
                    if k not in state.archive and k not in rejected and k not in batch:
                        batch[k] = c
            fresh(batch, budget)

            if not batch:
                state.exhausted = True
                logger.warning("search space exhausted at iteration %d; stopping early", it)
                break

            cfgs = list(batch.values())
            if executor is not None:
                results = list(executor.map(lambda c: _evaluate(c, proxy, cost_provider), cfgs))
            else:
                results = [_evaluate(c, proxy, cost_provider) for c in cfgs]

            evaluated = discarded = unevaluable = 0
            new_points = []
            for c, res in zip(cfgs, results):
                if isinstance(res, Exception):
                    unevaluable += 1
                    discarded += 1
                    rejected.add(c.key)
                    # table misses are routine when breeding over a finite pool
                    level = logging.DEBUG if isinstance(res, MissingEntry) else logging.WARNING
                    logger.log(level, "discarding unevaluable candidate %s: %r", c.key[:12], res)
                    continue
                score, sample = res
                if not _within_caps(sample, settings):
                    discarded += 1
                    rejected.add(c.key)
                    continue
                pt = EvaluatedPoint(c, score, sample)
                state.archive[c.key] = pt
                new_points.append(pt)
                evaluated += 1
            state.discarded += discarded
            state.unevaluable += unevaluable

            if state.hv_reference is None and state.archive:
                state.hv_reference = _default_reference(list(state.archive.values()), settings)
            state.frontier = extract_frontier((p.objective() for p in state.archive.values()),
                                              settings.frontier_mode)
            record = {
                "iteration": it,
                "evaluated": evaluated,
                "discarded": discarded,
                "unevaluable": unevaluable,
                "frontier_size": len(state.frontier),
                "hypervolume": archive_hypervolume(state),
            }
            state.log.append(record)
            if on_iteration is not None:
                on_iteration(record)
    finally:
        if executor is not None:
            executor.shutdown()
    return state.frontier, state


# -- proxy quality by model size -------------------------------------------


def src_by_bins(
    points: Sequence[tuple[ArchConfig, float]],
    proxy: Proxy,
    bin_edges: Sequence[int],
) -> list[tuple[tuple[int, int], float]]:
    """Spearman correlation of proxy score against true quality within each
    decoder-parameter bin.

    ``points`` are (config, true quality) pairs with lower quality better,
    so a perfect proxy scores 1.0. Bins are ``[lo, hi)``, the last one
    closed.
    """
    edges = list(bin_edges)
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("bin_edges must be strictly increasing with at least two entries")
    params = [count_decoder(c).decoder_total for c, _ in points]
    out = []
    for j, (lo, hi) in enumerate(zip(edges, edges[1:])):
        last = j == len(edges) - 2
        members = [
            i for i, p in enumerate(params)
            if lo <= p < hi or (last and p == hi)
        ]
        if len(members) < 2:
            raise EmptyBin(f"bin [{lo}, {hi}) holds {len(members)} point(s); need at least two")
        scores = [proxy(points[i][0]).value for i in members]
        quality = [-points[i][1] for i in members]
        out.append(((lo, hi), spearman(scores, quality)))
    return out


def payload_set(frontier: Frontier) -> set[Hashable]:
    return set(frontier.payloads())
