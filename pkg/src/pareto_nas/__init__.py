"""Hardware-aware Pareto search over decoder-only Transformer architectures,
ranked by a training-free parameter-count proxy."""

__version__ = "0.1.0"

from .arch_space import (  # noqa: E402
    ArchConfig,
    Backbone,
    BackboneTag,
    IntRange,
    SearchSpace,
    config_key,
    default_space,
    opt_space,
    sample,
    validate,
)
from .costs import AnalyticCost, CostSample, CostTable, MeasuredCost, TabularCost  # noqa: E402
from .evolution import SearchSettings, crossover, mutate, run_search  # noqa: E402
from .metrics import common_ratio, perplexity, spearman  # noqa: E402
from .param_count import AdaptiveEmbeddingSpec, count_decoder, count_embedding, count_total  # noqa: E402
from .pareto import (  # noqa: E402
    Frontier,
    FrontierMode,
    ObjectivePoint,
    d_avg,
    extract_frontier,
    hypervolume,
    lower_convex_hull,
    non_dominated,
)
from .proxies import ProxyScore, get_proxy, score_decoder_params  # noqa: E402

__all__ = [
    "AdaptiveEmbeddingSpec", "AnalyticCost", "ArchConfig", "Backbone", "BackboneTag", "CostSample",
    "CostTable", "Frontier", "FrontierMode", "IntRange", "MeasuredCost", "ObjectivePoint", "ProxyScore",
    "SearchSettings", "SearchSpace", "TabularCost", "common_ratio", "config_key", "count_decoder",
    "count_embedding", "count_total", "crossover", "d_avg", "default_space", "extract_frontier",
    "get_proxy", "hypervolume", "lower_convex_hull", "mutate", "non_dominated", "opt_space",
    "perplexity", "run_search", "sample", "score_decoder_params", "spearman", "validate",
]
