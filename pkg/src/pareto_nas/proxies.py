"""Architecture-quality proxies. Every proxy scores "higher is better"."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from ._stdio import Command, StdioCallError
from .arch_space import ArchConfig
from .param_count import AdaptiveEmbeddingSpec, count_decoder, count_total


class PluginFailure(RuntimeError):
    """An external proxy could not score a candidate."""


@dataclass(frozen=True)
class ProxyScore:
    value: float
    cost_flops: int
    proxy_name: str


Proxy = Callable[[ArchConfig], ProxyScore]


def score_decoder_params(config: ArchConfig) -> ProxyScore:
    """Decoder parameter count; costs no compute."""
    return ProxyScore(count_decoder(config).decoder_total, 0, "decoder_params")


def score_total_params(config: ArchConfig, spec: AdaptiveEmbeddingSpec | None = None) -> ProxyScore:
    return ProxyScore(count_total(config, spec).grand_total, 0, "total_params")


def score_external(config: ArchConfig, plugin: Command | str | Sequence[str]) -> ProxyScore:
    """Score through an external command.

    The command receives the canonical config JSON plus a newline on stdin
    and must print ``{"value": <float>, "cost_flops": <int>}`` and exit 0.
    """
    cmd = Command.coerce(plugin)
    try:
        obj = cmd.call(config.to_json())
    except StdioCallError as exc:
        raise PluginFailure(str(exc)) from exc
    value, cost = obj.get("value"), obj.get("cost_flops", 0)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise PluginFailure(f"plugin returned a non-numeric value: {value!r}")
    if isinstance(cost, bool) or not isinstance(cost, int) or cost < 0:
        raise PluginFailure(f"plugin returned an invalid cost_flops: {cost!r}")
    return ProxyScore(float(value), cost, f"external:{cmd.argv[0]}")


class ExternalProxy:
    """Callable wrapper so a plugin command can be used wherever a proxy is."""

    def __init__(self, plugin: Command | str | Sequence[str]):
        self.command = Command.coerce(plugin)

    def __call__(self, config: ArchConfig) -> ProxyScore:
        return score_external(config, self.command)

    def __repr__(self) -> str:
        return f"ExternalProxy({' '.join(self.command.argv)!r})"


def score_many(
    configs: Sequence[ArchConfig], proxy: Proxy, jobs: int = 1
) -> dict[str, ProxyScore | PluginFailure]:
    """Score configs concurrently, keyed by config key. Failures are
    returned in place of scores rather than raised."""

    def one(c: ArchConfig):
        try:
            return proxy(c)
        except PluginFailure as exc:
            return exc

    unique = {c.key: c for c in configs}
    if jobs <= 1:
        return {k: one(c) for k, c in unique.items()}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        results = pool.map(one, unique.values())
        return dict(zip(unique.keys(), results))


BUILTIN_PROXIES: Mapping[str, Proxy] = {
    "decoder_params": score_decoder_params,
    "total_params": score_total_params,
}


def get_proxy(name_or_plugin: str | Sequence[str] | Mapping) -> Proxy:
    """Resolve a builtin name, ``{"name": ...}`` or ``{"plugin": cmd}``."""
    if isinstance(name_or_plugin, Mapping):
        if "plugin" in name_or_plugin:
            return ExternalProxy(name_or_plugin["plugin"])
        name_or_plugin = name_or_plugin["name"]
    if isinstance(name_or_plugin, str) and name_or_plugin in BUILTIN_PROXIES:
        return BUILTIN_PROXIES[name_or_plugin]
    if isinstance(name_or_plugin, str):
        raise KeyError(f"unknown proxy {name_or_plugin!r}; builtins: {sorted(BUILTIN_PROXIES)}")
    return ExternalProxy(name_or_plugin)
