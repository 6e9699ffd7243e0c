"""Latency and peak-memory providers: analytic, measured and tabular."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from ._stdio import Command, StdioCallError
from .arch_space import ArchConfig
from .param_count import count_decoder

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("config_key", "latency_ms", "peak_memory_bytes", "true_ppl")


class MeasurementFailure(RuntimeError):
    pass


class MissingEntry(KeyError):
    pass


class CostSource(str, Enum):
    ANALYTIC = "Analytic"
    MEASURED = "Measured"
    TABULAR = "Tabular"


@dataclass(frozen=True)
class CostSample:
    latency_ms: float
    peak_memory_bytes: int
    repeats: int = 1
    source: CostSource = CostSource.ANALYTIC

    def __post_init__(self):
        if not (self.latency_ms >= 0 and math.isfinite(self.latency_ms)):
            raise ValueError(f"latency_ms must be finite and >= 0, got {self.latency_ms}")
        if self.peak_memory_bytes < 0:
            raise ValueError("peak_memory_bytes must be >= 0")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class CostQuery:
    config: ArchConfig
    seq_len: int = 192
    batch: int = 1
    bytes_per_param: int = 4

    def __post_init__(self):
        if self.seq_len < 1 or self.batch < 1 or self.bytes_per_param < 1:
            raise ValueError("seq_len, batch and bytes_per_param must be positive")
        bb = self.config.backbone
        if bb.include_positional_embedding and self.seq_len > bb.max_positions:
            raise ValueError(f"seq_len {self.seq_len} exceeds max_positions {bb.max_positions}")


@dataclass(frozen=True)
class DeviceProfile:
    """Synthetic device: these numbers are not calibrated to real hardware."""

    name: str = "synthetic"
    throughput_flops_per_ms: float = 1e9
    memory_overhead: float = 1.0
    bytes_per_activation: int = 4


DEVICE_PROFILES: dict[str, DeviceProfile] = {
    "synthetic": DeviceProfile(),
    "synthetic-cpu": DeviceProfile("synthetic-cpu", 1e8, 1.0),
    "synthetic-gpu": DeviceProfile("synthetic-gpu", 1e10, 1.2),
}


def analytic_flops(config: ArchConfig, seq_len: int) -> int:
    s, d = seq_len, config.d_model
    return sum(8 * s * d * d + 4 * s * s * d + 4 * s * d * di for di in config.d_inner)


def estimate(query: CostQuery, profile: DeviceProfile = DEVICE_PROFILES["synthetic"]) -> CostSample:
    """Deterministic closed-form cost model.

    Latency is the attention + FFN FLOP count divided by the profile's
    throughput. Memory is the weights plus one layer's widest activations.
    """
    cfg = query.config
    flops = analytic_flops(cfg, query.seq_len)
    act = query.batch * query.seq_len * (
        4 * cfg.d_model + max(cfg.d_inner) + max(cfg.n_head) * query.seq_len
    )
    memory = count_decoder(cfg).decoder_total * query.bytes_per_param + act * profile.bytes_per_activation
    if profile.memory_overhead != 1.0:
        memory = int(round(memory * profile.memory_overhead))
    return CostSample(flops / profile.throughput_flops_per_ms, memory, 1, CostSource.ANALYTIC)


def measure(query: CostQuery, command: Command | str) -> CostSample:
    """Run an external benchmark command.

    stdin carries the canonical config JSON; the sequence length, batch and
    bytes per parameter are passed in ``PARETO_NAS_SEQ_LEN``,
    ``PARETO_NAS_BATCH`` and ``PARETO_NAS_BYTES_PER_PARAM``. The command
    averages its own runs and prints
    ``{"latency_ms": ..., "peak_memory_bytes": ..., "repeats": ...}``.
    """
    cmd = Command.coerce(command)
    env = {
        "PARETO_NAS_SEQ_LEN": str(query.seq_len),
        "PARETO_NAS_BATCH": str(query.batch),
        "PARETO_NAS_BYTES_PER_PARAM": str(query.bytes_per_param),
    }
    try:
        obj = cmd.call(query.config.to_json(), extra_env=env)
        return CostSample(
            float(obj["latency_ms"]),
            int(obj["peak_memory_bytes"]),
            int(obj.get("repeats", 10)),
            CostSource.MEASURED,
        )
    except (StdioCallError, KeyError, TypeError, ValueError) as exc:
        logger.warning("measurement failed for %s: %s", query.config.key[:12], exc)
        raise MeasurementFailure(str(exc)) from exc


@dataclass
class TableRow:
    latency_ms: float
    peak_memory_bytes: int
    true_ppl: float | None = None


@dataclass
class CostTable:
    """Precomputed costs keyed by canonical config key."""

    rows: dict[str, TableRow] = field(default_factory=dict)

    def lookup(self, query: CostQuery) -> CostSample:
        key = query.config.key
        try:
            row = self.rows[key]
        except KeyError:
            raise MissingEntry(key) from None
        return CostSample(row.latency_ms, row.peak_memory_bytes, 1, CostSource.TABULAR)

    def true_ppl(self, config: ArchConfig) -> float | None:
        row = self.rows.get(config.key)
        return None if row is None else row.true_ppl

    def add(self, config: ArchConfig, sample: CostSample, true_ppl: float | None = None) -> None:
        self.rows[config.key] = TableRow(sample.latency_ms, sample.peak_memory_bytes, true_ppl)

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, key: str) -> bool:
        return key in self.rows

    @classmethod
    def load(cls, path: str | Path) -> "CostTable":
        with open(path, newline="", encoding="utf-8") as f:
            return cls.from_rows(csv.DictReader(f))

    @classmethod
    def from_rows(cls, records: Iterable[Mapping[str, str]]) -> "CostTable":
        rows = {}
        for rec in records:
            ppl = rec.get("true_ppl")
            rows[rec["config_key"]] = TableRow(
                float(rec["latency_ms"]),
                int(rec["peak_memory_bytes"]),
                float(ppl) if ppl not in (None, "") else None,
            )
        return cls(rows)

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\r\n")
            w.writerow(TABLE_COLUMNS)
            for key, row in self.rows.items():
                w.writerow([
                    key,
                    repr(row.latency_ms),
                    row.peak_memory_bytes,
                    "" if row.true_ppl is None else repr(row.true_ppl),
                ])


def lookup(query: CostQuery, table: CostTable) -> CostSample:
    return table.lookup(query)


class AnalyticCost:
    """Cost provider callable: config -> CostSample."""

    source = CostSource.ANALYTIC
    parallel_safe = True

    def __init__(self, profile: DeviceProfile | str = "synthetic", seq_len: int = 192, batch: int = 1,
                 bytes_per_param: int = 4):
        self.profile = DEVICE_PROFILES[profile] if isinstance(profile, str) else profile
        self.seq_len, self.batch, self.bytes_per_param = seq_len, batch, bytes_per_param

    def __call__(self, config: ArchConfig) -> CostSample:
        return estimate(CostQuery(config, self.seq_len, self.batch, self.bytes_per_param), self.profile)


class MeasuredCost:
    source = CostSource.MEASURED

    def __init__(self, command: Command | str, seq_len: int = 192, batch: int = 1, bytes_per_param: int = 4,
                 allow_parallel: bool = False):
        self.command = Command.coerce(command)
        self.seq_len, self.batch, self.bytes_per_param = seq_len, batch, bytes_per_param
        # concurrent runs perturb each other's timings
        self.parallel_safe = allow_parallel

    def __call__(self, config: ArchConfig) -> CostSample:
        return measure(CostQuery(config, self.seq_len, self.batch, self.bytes_per_param), self.command)


class TabularCost:
    source = CostSource.TABULAR
    parallel_safe = True

    def __init__(self, table: CostTable | str | Path, seq_len: int = 192, batch: int = 1):
        self.table = table if isinstance(table, CostTable) else CostTable.load(table)
        self.seq_len, self.batch = seq_len, batch

    def __call__(self, config: ArchConfig) -> CostSample:
        return self.table.lookup(CostQuery(config, self.seq_len, self.batch))
