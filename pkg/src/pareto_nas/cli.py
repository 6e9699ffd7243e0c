"""``pareto-nas`` command line: count, search, rank, pareto, verify-tables, synth.

Exit codes: 0 success, 1 a check failed (verify-tables), 2 bad input,
3 the search space was exhausted before the last iteration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .arch_space import PRESET_SPACES, ArchConfig, SearchSpace, validate
from .costs import DEVICE_PROFILES, AnalyticCost, CostTable, MeasuredCost, TabularCost
from .evolution import SearchSettings, SearchState, run_search
from .fixtures import TabularBenchmark, calibrate_noise, load_configs, synth_benchmark, verify_tables
from .metrics import DegenerateSeries, IdMismatch, LengthMismatch, common_ratio, spearman
from .param_count import AdaptiveEmbeddingSpec, CutoffError, count_decoder, count_total
from .pareto import EmptyFrontier, Frontier, FrontierMode, ObjectivePoint, d_avg, extract_frontier
from .proxies import PluginFailure, get_proxy

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_EXHAUSTED = 0, 1, 2, 3

logger = logging.getLogger("pareto_nas")


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 2."""


# -- small IO helpers --------------------------------------------------------


def _read_json(path: str | Path) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON: {exc}") from exc


def _read_csv(path: str | Path) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if not reader.fieldnames:
                raise InputError(f"{path}: missing header row")
            return list(reader)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _pick(row: Mapping[str, str], names: Sequence[str], path: Any) -> str:
    for n in names:
        if n in row and row[n] != "":
            return row[n]
    raise InputError(f"{path}: expected one of the columns {list(names)}")


def _float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{what}: not a number: {text!r}") from None


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(value: float | int) -> str:
    # repr round-trips floats exactly; integral values print without ".0"
    if isinstance(value, float) and value.is_integer() and abs(value) < 2**53:
        return str(int(value))
    return repr(value)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _build_id() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _emit(obj: Any) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- count -------------------------------------------------------------------


def cmd_count(args: argparse.Namespace) -> int:
    data = _read_json(args.config)
    try:
        config = ArchConfig.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.config}: invalid config: {exc!r}") from exc
    violations = validate(config)
    fatal = [v for v in violations if args.strict or not v.field.startswith("d_inner")]
    for v in violations:
        print(f"{'error' if v in fatal else 'warning'}: {v}", file=sys.stderr)
    if fatal:
        return EXIT_INPUT
    if args.embedding_spec:
        try:
            spec = AdaptiveEmbeddingSpec.from_dict(_read_json(args.embedding_spec))
            breakdown = count_total(config, spec)
        except (KeyError, TypeError, ValueError, CutoffError) as exc:
            raise InputError(f"{args.embedding_spec}: {exc}") from exc
    else:
        breakdown = count_decoder(config)
    out = breakdown.to_dict()
    out["config_key"] = config.key
    _emit(out)
    return EXIT_OK


# -- search ------------------------------------------------------------------


def _resolve(base: Path, value: str) -> str:
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def _space_from(spec: Any) -> SearchSpace:
    if spec is None:
        return PRESET_SPACES["default"]()
    if isinstance(spec, str):
        if spec not in PRESET_SPACES:
            raise InputError(f"unknown space preset {spec!r}; choose from {sorted(PRESET_SPACES)}")
        return PRESET_SPACES[spec]()
    spec = dict(spec)
    if "preset" in spec:
        name = spec.pop("preset")
        if name == "default":
            return PRESET_SPACES["default"](**spec)
        if spec:
            raise InputError(f"preset {name!r} takes no options")
        return _space_from(name)
    return SearchSpace.from_dict(spec)


def _cost_from(spec: Mapping[str, Any] | None, base: Path, profile: str | None):
    """Returns (provider, benchmark or None)."""
    spec = {"analytic": {}} if not spec else dict(spec)
    if len(spec) != 1:
        raise InputError("cost must name exactly one of analytic, measure, tabular")
    kind, opts = next(iter(spec.items()))
    opts = dict(opts or {})
    common = {k: int(opts[k]) for k in ("seq_len", "batch", "bytes_per_param") if k in opts}
    if kind == "analytic":
        name = profile or opts.get("profile", "synthetic")
        if name not in DEVICE_PROFILES:
            raise InputError(f"unknown device profile {name!r}; choose from {sorted(DEVICE_PROFILES)}")
        return AnalyticCost(name, **common), None
    if kind == "measure":
        return MeasuredCost(opts["command"], allow_parallel=bool(opts.get("allow_parallel", False)), **common), None
    if kind == "tabular":
        path = _resolve(base, opts["path"])
        configs = opts.get("configs")
        side = Path(_resolve(base, configs)) if configs else TabularBenchmark.sidecar(path)
        bench = TabularBenchmark.load(path, side) if side.exists() else None
        table = bench.table if bench else CostTable.load(path)
        common.pop("bytes_per_param", None)
        return TabularCost(table, **common), bench
    raise InputError(f"unknown cost provider {kind!r}")


def _frontier_rows(state: SearchState) -> list[list[str]]:
    pts = sorted(state.frontier_points(), key=lambda p: (-p.score.value, p.cost.latency_ms, p.key))
    return [[p.key, _num(p.score.value), _num(p.cost.latency_ms), str(p.cost.peak_memory_bytes)] for p in pts]


def _tabular_d_avg(state: SearchState, bench: TabularBenchmark, mode: FrontierMode) -> float | None:
    """Gap between the proxy and true-perplexity frontiers of the archive,
    both taken over (quality, latency) with memory dropped; None when the
    table carries no perplexities."""
    rows = bench.table.rows
    if any(rows[k].true_ppl is None for k in state.archive):
        return None
    proxy = extract_frontier(
        (ObjectivePoint(p.score.value, p.cost.latency_ms, 0.0, k) for k, p in state.archive.items()), mode
    )
    truth = extract_frontier(
        (ObjectivePoint(-rows[k].true_ppl, p.cost.latency_ms, 0.0, k) for k, p in state.archive.items()), mode
    )

    def pairs(fr: Frontier):
        return [(rows[k].latency_ms, rows[k].true_ppl) for k in fr.payloads()]

    return d_avg(pairs(proxy), pairs(truth))


def cmd_search(args: argparse.Namespace) -> int:
    started = time.time()
    cfg_path = Path(args.run_config)
    run = _read_json(cfg_path)
    if not isinstance(run, dict):
        raise InputError(f"{cfg_path}: run config must be a JSON object")
    base = cfg_path.resolve().parent
    try:
        space = _space_from(run.get("space"))
        settings = dict(run.get("settings", {}))
        overrides = {
            "rng_seed": args.seed,
            "jobs": args.jobs,
            "latency_cap_ms": args.latency_cap_ms,
            "memory_cap_bytes": args.memory_cap_bytes,
            "frontier_mode": args.frontier_mode,
        }
        settings.update({k: v for k, v in overrides.items() if v is not None})
        settings = SearchSettings.from_dict(settings)
        proxy = get_proxy(run.get("proxy", "decoder_params"))
        cost, bench = _cost_from(run.get("cost"), base, args.device_profile)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{cfg_path}: {exc}") from exc

    out_dir = Path(args.output_dir or _resolve(base, run.get("output_dir", "search_out")))
    out_dir.mkdir(parents=True, exist_ok=True)
    log_lines: list[str] = []

    def on_iteration(record: dict) -> None:
        log_lines.append(json.dumps(record, sort_keys=True))
        logger.info("iteration %(iteration)d: frontier %(frontier_size)d, hypervolume %(hypervolume).6g", record)

    pool = bench.configs if bench is not None else None
    frontier, state = run_search(space, settings, proxy, cost, on_iteration=on_iteration, pool=pool)

    on_front = set(frontier.payloads())
    archive_rows = [
        [k, _num(p.score.value), str(p.score.cost_flops), _num(p.cost.latency_ms),
         str(p.cost.peak_memory_bytes), "1" if k in on_front else "0"]
        for k, p in sorted(state.archive.items())
    ]
    frontier_json = {
        "mode": frontier.mode.value,
        "points": [
            {
                "config_key": p.key,
                "score": p.score.value,
                "latency_ms": p.cost.latency_ms,
                "peak_memory_bytes": p.cost.peak_memory_bytes,
                "config": p.config.to_dict(),
            }
            for p in sorted(state.frontier_points(), key=lambda p: (-p.score.value, p.cost.latency_ms, p.key))
        ],
    }
    files = {
        "frontier.csv": _csv_text(("config_key", "score", "latency_ms", "peak_memory_bytes"), _frontier_rows(state)),
        "frontier.json": json.dumps(frontier_json, indent=2, sort_keys=True) + "\n",
        "archive.csv": _csv_text(
            ("config_key", "score", "cost_flops", "latency_ms", "peak_memory_bytes", "on_frontier"), archive_rows
        ),
        "search_log.jsonl": "".join(line + "\n" for line in log_lines),
    }
    for name, text in files.items():
        _write_atomic(out_dir / name, text)

    summary: dict[str, Any] = {
        "output_dir": str(out_dir),
        "iterations": len(state.log),
        "archive_size": len(state.archive),
        "frontier_size": len(frontier),
        "hypervolume": state.log[-1]["hypervolume"] if state.log else 0.0,
        "exhausted": state.exhausted,
    }
    if bench is not None and state.frontier.points:
        gap = _tabular_d_avg(state, bench, settings.frontier_mode)
        if gap is not None:
            summary["d_avg"] = f"{gap:.4f}"

    manifest = {
        "command": ["pareto-nas", *args.argv],
        "config_path": str(cfg_path),
        "seed": settings.rng_seed,
        "build": _build_id(),
        "settings": settings.to_dict(),
        "space": space.to_dict(),
        "wall_time_s": round(time.time() - started, 3),
        "exit_code": EXIT_EXHAUSTED if state.exhausted else EXIT_OK,
        "outputs": {name: _sha256(out_dir / name) for name in files},
    }
    _write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _emit(summary)
    if state.exhausted:
        print("search space exhausted before the last iteration; outputs written", file=sys.stderr)
        return EXIT_EXHAUSTED
    return EXIT_OK


# -- rank --------------------------------------------------------------------


def _topk(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--topk expects comma-separated percentages, got {text!r}") from None
    if not values or any(not 0 < v <= 100 for v in values):
        raise argparse.ArgumentTypeError("--topk percentages must lie in (0, 100]")
    return values


def rank_report(ids: Sequence[str], truth: Sequence[float], scores: Sequence[float],
                topk: Sequence[float]) -> dict[str, Any]:
    """SRC between proxy scores and negated truth, plus CR at each top-k%."""
    truth_pairs = list(zip(ids, truth))
    proxy_pairs = list(zip(ids, scores))
    return {
        "n": len(ids),
        "src": spearman(scores, [-t for t in truth]),
        "common_ratio": [
            {"top_percent": k, "cr": common_ratio(truth_pairs, proxy_pairs, k)} for k in topk
        ],
    }


def cmd_rank(args: argparse.Namespace) -> int:
    rows = _read_csv(args.table)
    ids = [_pick(r, ("id", "config_key"), args.table) for r in rows]
    truth = [_float(_pick(r, ("truth_quality", "true_ppl"), args.table), "truth") for r in rows]
    if args.proxy:
        if not args.configs:
            raise InputError("--proxy needs --configs with the architectures behind each id")
        configs = load_configs(args.configs)
        missing = [i for i in ids if i not in configs]
        if missing:
            raise InputError(f"{len(missing)} id(s) have no config, e.g. {missing[0]}")
        proxy = get_proxy(_proxy_arg(args.proxy))
        try:
            scores = [float(proxy(configs[i]).value) for i in ids]
        except PluginFailure as exc:
            raise InputError(f"proxy failed: {exc}") from exc
    else:
        scores = [_float(_pick(r, ("proxy_score",), args.table), "proxy_score") for r in rows]
    try:
        report = rank_report(ids, truth, scores, args.topk)
    except (DegenerateSeries, LengthMismatch, IdMismatch) as exc:
        raise InputError(str(exc)) from exc
    if args.report:
        _write_atomic(Path(args.report), json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.format == "json":
        _emit(report)
    else:
        lines = [f"n    {report['n']}", f"SRC  {report['src']:.4f}", "", "top-k%   CR"]
        lines += [f"{_num(r['top_percent']):>6}   {r['cr'] * 100:.1f}%" for r in report["common_ratio"]]
        print("\n".join(lines))
    return EXIT_OK


def _proxy_arg(text: str) -> Any:
    # builtin name, or a command line for an external plugin
    return text if text in ("decoder_params", "total_params") else {"plugin": text}


# -- pareto ------------------------------------------------------------------


def _read_points(path: str, ignore_memory: bool) -> list[ObjectivePoint]:
    pts = []
    for r in _read_csv(path):
        pid = _pick(r, ("id", "config_key"), path)
        mem = 0.0 if ignore_memory else _float(r.get("peak_memory_bytes") or "0", "peak_memory_bytes")
        try:
            pts.append(ObjectivePoint(
                _float(_pick(r, ("score",), path), "score"),
                _float(_pick(r, ("latency_ms",), path), "latency_ms"),
                mem,
                pid,
            ))
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from exc
    if not pts:
        raise InputError(f"{path}: no points")
    return pts


def cmd_pareto(args: argparse.Namespace) -> int:
    points = _read_points(args.points, args.ignore_memory)
    mode = FrontierMode.parse(args.mode)
    frontier = extract_frontier(points, mode)
    out = Path(args.output) if args.output else Path(args.points).with_suffix(".frontier.csv")
    rows = [[p.payload, _num(p.score), _num(p.latency_ms), _num(p.peak_memory_bytes)]
            for p in sorted(frontier.points, key=lambda p: (-p.score, p.latency_ms, str(p.payload)))]
    _write_atomic(out, _csv_text(("id", "score", "latency_ms", "peak_memory_bytes"), rows))
    report: dict[str, Any] = {"mode": mode.value, "points": len(points), "frontier_size": len(frontier),
                              "output": str(out)}
    if args.truth:
        truth_rows = _read_csv(args.truth)
        ppl = {_pick(r, ("id", "config_key"), args.truth):
               _float(_pick(r, ("true_ppl", "truth_quality"), args.truth), "true_ppl") for r in truth_rows}
        missing = [p.payload for p in points if p.payload not in ppl]
        if missing:
            raise InputError(f"{args.truth}: no perplexity for {len(missing)} point(s), e.g. {missing[0]}")
        truth_front = extract_frontier(
            [ObjectivePoint(-ppl[p.payload], p.latency_ms, p.peak_memory_bytes, p.payload) for p in points], mode
        )
        try:
            gap = d_avg([(p.latency_ms, ppl[p.payload]) for p in frontier.points],
                        [(p.latency_ms, ppl[p.payload]) for p in truth_front.points])
            src = spearman([p.score for p in points], [-ppl[p.payload] for p in points])
        except (EmptyFrontier, DegenerateSeries, ValueError) as exc:
            raise InputError(str(exc)) from exc
        report.update({"truth_frontier_size": len(truth_front), "d_avg": gap, "src": src})
    _emit(report)
    return EXIT_OK


# -- verify-tables / synth ---------------------------------------------------------


def cmd_verify_tables(args: argparse.Namespace) -> int:
    report = verify_tables()
    _emit(report.to_dict())
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_synth(args: argparse.Namespace) -> int:
    space = _space_from(args.space)
    noise = args.noise
    if args.target_src is not None:
        noise = calibrate_noise(args.n, args.seed, args.target_src, alpha=args.alpha, space=space)
    bench = synth_benchmark(args.n, noise, args.seed, space, alpha=args.alpha,
                            profile=args.device_profile, seq_len=args.seq_len)
    table_path, side = bench.save(args.output)
    _emit({"rows": len(bench.configs), "noise": noise, "alpha": args.alpha,
           "table": str(table_path), "configs": str(side)})
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pareto-nas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("count", help="parameter breakdown of one config")
    p.add_argument("config")
    p.add_argument("--embedding-spec", help="JSON adaptive-embedding spec; adds embedding counts")
    p.add_argument("--strict", action="store_true", help="also reject d_inner below 2*d_model")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("search", help="evolutionary frontier search from a run config")
    p.add_argument("run_config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--device-profile", choices=sorted(DEVICE_PROFILES))
    p.add_argument("--latency-cap-ms", type=float)
    p.add_argument("--memory-cap-bytes", type=int)
    p.add_argument("--frontier-mode", choices=["nd", "hull"])
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rank", help="SRC and common ratio of a proxy against ground truth")
    p.add_argument("table", help="CSV with id, truth_quality and (without --proxy) proxy_score")
    p.add_argument("--proxy", help="builtin proxy name or plugin command")
    p.add_argument("--configs", help="JSONL mapping ids to configs, needed with --proxy")
    p.add_argument("--topk", type=_topk, default=[10.0, 30.0, 50.0, 100.0])
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("--report", help="also write the JSON report here")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("pareto", help="frontier of a points CSV")
    p.add_argument("points", help="CSV with id, score, latency_ms[, peak_memory_bytes]")
    p.add_argument("--mode", choices=["nd", "hull"], default="nd")
    p.add_argument("--truth", help="CSV with id, true_ppl; reports d_avg and SRC")
    p.add_argument("--ignore-memory", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("verify-tables", help="recount the embedded golden architectures")
    p.set_defaults(func=cmd_verify_tables)

    p = sub.add_parser("synth", help="write a synthetic tabular benchmark")
    p.add_argument("output", help="cost table CSV; configs go to <stem>.configs.jsonl")
    p.add_argument("--n", type=int, default=1200)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--target-src", type=float, help="calibrate noise to this global SRC instead")
    p.add_argument("--alpha", type=float, default=0.015)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--space", default="default")
    p.add_argument("--device-profile", choices=sorted(DEVICE_PROFILES), default="synthetic")
    p.add_argument("--seq-len", type=int, default=192)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
