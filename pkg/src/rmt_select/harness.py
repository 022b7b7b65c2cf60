"""Monte Carlo experiment driver, runtime benchmark and CSV output.

Seeds: every random stream is drawn from ``numpy.random.SeedSequence``
with ``entropy=master_seed`` and ``spawn_key=(sweep_index, stream, realization)``.
Stream 0 is the channel draw (shared by every algorithm, so comparisons are
paired); each algorithm owns the stream given by ``ALGORITHM_STREAMS``.
This mapping is part of the output format: changing it changes results.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import CorrelationMatrix, ErrorMetric, ProblemDims, SelectionError
from .exact import exact_measure, sample_channel
from .scenarios import MimoScenario, preset
from .selectors import (
    AwareOracle,
    BlindOracle,
    SelectionResult,
    convex_relax_select,
    exhaustive_select,
    greedy_select,
    random_select,
)

ALGORITHM_STREAMS = {
    "greedy-blind": 1,
    "greedy-aware": 2,
    "convex-blind": 3,
    "convex-aware": 4,
    "random": 5,
    "exhaustive": 6,
}
ALGORITHMS = tuple(ALGORITHM_STREAMS)
BLIND_ALGORITHMS = ("greedy-blind", "convex-blind")
CHANNEL_STREAM = 0

CSV_HEADER = (
    "scenario",
    "algorithm",
    "metric",
    "sweep_param",
    "sweep_value",
    "realization",
    "value",
    "wall_seconds",
    "oracle_evals",
    "seed",
)
EXTRAPOLATED_COLUMN = "extrapolated_seconds"
THREADS_ENV = "RMT_SELECT_THREADS"


class ConfigError(SelectionError, ValueError):
    pass


def derive_seed(master_seed: int, *keys: int) -> int:
    """Deterministic 63-bit seed for the stream identified by ``keys``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class RunRecord:
    """One experiment data point. Failed evaluations carry ``value = nan``."""

    scenario: str
    algorithm: str
    metric: str
    sweep_param: str
    sweep_value: float
    realization: int
    value: float
    wall_seconds: float
    oracle_evals: int
    seed: int
    extrapolated_seconds: float | None = None

    @property
    def key(self):
        return (self.scenario, self.algorithm, self.metric, self.sweep_value, self.realization)

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.value)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "mimo-d2"
    metric: ErrorMetric = ErrorMetric.MSE
    algorithms: tuple[str, ...] = ("greedy-blind", "random")
    realizations: int = 100
    sweep_param: str = "k"
    sweep_values: tuple[float, ...] = ()
    K: int = 2
    master_seed: int = 0
    snr_db: float | None = None
    db: bool = False
    threads: int | None = None
    n: int | None = None
    m: int | None = None
    k: int | None = None
    d: float | None = None
    decay_rho: float | None = None
    record_timing: bool = False
    n_changes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "metric", ErrorMetric.parse(self.metric))
        algos = tuple(self.algorithms)
        unknown = [a for a in algos if a not in ALGORITHM_STREAMS]
        if unknown or not algos:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGORITHMS)}")
        object.__setattr__(self, "algorithms", algos)
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if self.K < 1:
            raise ConfigError("K must be at least 1")
        if self.n_changes < 1:
            raise ConfigError("n_changes must be at least 1")
        try:
            base = preset(self.scenario)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        allowed = {"k"} | ({"d"} if isinstance(base, MimoScenario) else {"decay_rho"})
        if self.sweep_param not in allowed:
            raise ConfigError(f"sweep parameter {self.sweep_param!r} not valid for {self.scenario}; use {sorted(allowed)}")
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        for v in self.points():
            try:
                self.scenario_at(v).dims
            except (SelectionError, ValueError) as exc:
                raise ConfigError(f"sweep value {self.sweep_param}={v}: {exc}") from None

    def points(self) -> tuple[float, ...]:
        if self.sweep_values:
            return self.sweep_values
        return (float(getattr(self.scenario_at(None), self.sweep_param)),)

    def scenario_at(self, value):
        over = {"n": self.n, "m": self.m, "k": self.k}
        if isinstance(preset(self.scenario), MimoScenario):
            over["d"] = self.d
        else:
            over["decay_rho"] = self.decay_rho
        if value is not None:
            over[self.sweep_param] = int(value) if self.sweep_param == "k" else float(value)
        return preset(self.scenario, **over)


def _transform(cfg: ExperimentConfig, sc, value: float) -> float:
    if cfg.metric is ErrorMetric.MSE and cfg.snr_db is not None:
        return value / 10.0 ** (cfg.snr_db / 10.0)
    if cfg.metric is ErrorMetric.WEV and cfg.db:
        return 10.0 * math.log10(value)
    return value


def _run_selector(algo: str, source, dims: ProblemDims, metric: ErrorMetric, K: int, seed: int) -> SelectionResult:
    if algo.startswith("greedy"):
        oracle = BlindOracle(source, dims, metric) if algo == "greedy-blind" else AwareOracle(source, dims, metric)
        return greedy_select(oracle, dims, K=K, seed=seed)
    if algo.startswith("convex"):
        return convex_relax_select(source, dims, metric)
    if algo == "exhaustive":
        return exhaustive_select(AwareOracle(source, dims, metric), dims)
    sel = random_select(dims, seed)
    return SelectionResult(selection=sel, objective=float("nan"), trajectory=[], sweeps=0, evals=0)


@dataclass
class _PointContext:
    index: int
    value: float
    scenario: object
    R: CorrelationMatrix
    dims: ProblemDims
    blind: dict


def _prepare_point(cfg: ExperimentConfig, index: int, value: float) -> _PointContext:
    sc = cfg.scenario_at(value)
    R = sc.correlation()
    dims = sc.dims
    blind = {}
    for algo in cfg.algorithms:
        if algo not in BLIND_ALGORITHMS:
            continue
        seed = derive_seed(cfg.master_seed, index, ALGORITHM_STREAMS[algo], 0)
        t0 = time.perf_counter()
        try:
            res = _run_selector(algo, R, dims, cfg.metric, cfg.K, seed)
            blind[algo] = (res, time.perf_counter() - t0, seed)
        except SelectionError:
            blind[algo] = (None, time.perf_counter() - t0, seed)
    return _PointContext(index, value, sc, R, dims, blind)


def _realization_records(cfg: ExperimentConfig, ctx: _PointContext, r: int) -> list[RunRecord]:
    ch_seed = derive_seed(cfg.master_seed, ctx.index, CHANNEL_STREAM, r)
    H = sample_channel(ctx.R, ctx.dims.m, ch_seed)
    out = []
    for algo in cfg.algorithms:
        wall, evals = 0.0, 0
        if algo in ctx.blind:
            res, wall, seed = ctx.blind[algo]
            evals = res.evals if res is not None else 0
            if r != 0:
                wall, evals = 0.0, 0
        else:
            seed = derive_seed(cfg.master_seed, ctx.index, ALGORITHM_STREAMS[algo], r)
            t0 = time.perf_counter()
            try:
                res = _run_selector(algo, H, ctx.dims, cfg.metric, cfg.K, seed)
                evals = res.evals
            except SelectionError:
                res = None
            wall = time.perf_counter() - t0
        value = float("nan")
        if res is not None:
            try:
                value = _transform(cfg, ctx.scenario, exact_measure(cfg.metric, H, res.selection, ctx.dims))
            except SelectionError:
                value = float("nan")
        out.append(
            RunRecord(
                scenario=cfg.scenario,
                algorithm=algo,
                metric=cfg.metric.value,
                sweep_param=cfg.sweep_param,
                sweep_value=ctx.value,
                realization=r,
                value=value,
                wall_seconds=wall if cfg.record_timing else 0.0,
                oracle_evals=int(evals),
                seed=int(seed),
            )
        )
    return out


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """All records of a sweep, sorted by (algorithm order, sweep value, realization).

    Blind selections are computed once per sweep point and scored on every
    channel draw; channel-aware and random selections are redone per draw.
    A selector or measure failure becomes a ``nan`` row, never a gap.
    """
    records: list[RunRecord] = []
    workers = resolve_threads(cfg.threads)
    for index, value in enumerate(cfg.points()):
        ctx = _prepare_point(cfg, index, value)
        if workers == 1:
            chunks = [_realization_records(cfg, ctx, r) for r in range(cfg.realizations)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                chunks = list(pool.map(lambda r: _realization_records(cfg, ctx, r), range(cfg.realizations)))
        for chunk in chunks:
            records.extend(chunk)
    order = {a: i for i, a in enumerate(cfg.algorithms)}
    records.sort(key=lambda rec: (order[rec.algorithm], rec.sweep_value, rec.realization))
    return records


def bench_runtime(cfg: ExperimentConfig) -> list[RunRecord]:
    """One timing row per (algorithm, sweep value).

    Blind algorithms select once; the others select on every one of the
    ``realizations`` channel draws. ``value`` is the mean achieved metric,
    ``wall_seconds`` and ``oracle_evals`` are totals, and
    ``extrapolated_seconds`` multiplies per-draw algorithms by
    ``cfg.n_changes`` (the number of channel changes they must track).
    """
    rows = []
    for index, value in enumerate(cfg.points()):
        ctx = _prepare_point(cfg, index, value)
        limit = ctx.dims.k * (ctx.dims.n - ctx.dims.k)
        for algo in cfg.algorithms:
            wall, evals, vals = 0.0, 0, []
            results = []
            if algo in ctx.blind:
                res, wall, seed = ctx.blind[algo]
                if res is not None:
                    results.append(res)
                    evals = res.evals
            seed = derive_seed(cfg.master_seed, index, ALGORITHM_STREAMS[algo], 0)
            for r in range(cfg.realizations):
                H = sample_channel(ctx.R, ctx.dims.m, derive_seed(cfg.master_seed, index, CHANNEL_STREAM, r))
                if algo in ctx.blind:
                    res = ctx.blind[algo][0]
                else:
                    t0 = time.perf_counter()
                    try:
                        res = _run_selector(
                            algo, H, ctx.dims, cfg.metric, cfg.K,
                            derive_seed(cfg.master_seed, index, ALGORITHM_STREAMS[algo], r),
                        )
                        results.append(res)
                        evals += res.evals
                    except SelectionError:
                        res = None
                    wall += time.perf_counter() - t0
                if res is not None:
                    try:
                        vals.append(_transform(cfg, ctx.scenario, exact_measure(cfg.metric, H, res.selection, ctx.dims)))
                    except SelectionError:
                        pass
            for res in results:
                if algo.startswith("greedy") and any(e > limit for e in res.sweep_evals):
                    raise AssertionError(f"greedy sweep used more than k(n-k) = {limit} oracle calls")
            per_draw = algo not in ctx.blind
            rows.append(
                RunRecord(
                    scenario=cfg.scenario,
                    algorithm=algo,
                    metric=cfg.metric.value,
                    sweep_param=cfg.sweep_param,
                    sweep_value=ctx.value,
                    realization=0,
                    value=float(np.mean(vals)) if vals else float("nan"),
                    wall_seconds=wall,
                    oracle_evals=int(evals),
                    seed=int(seed),
                    extrapolated_seconds=wall * cfg.n_changes if per_draw else wall,
                )
            )
    return rows


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".12g")


def emit_csv(records, path) -> None:
    """Write records as UTF-8 CSV with 12 significant digits.

    ``path`` may be a filesystem path or an open text stream. The
    ``extrapolated_seconds`` column is appended only when some record
    carries it.
    """
    records = list(records)
    extra = any(r.extrapolated_seconds is not None for r in records)
    header = list(CSV_HEADER) + ([EXTRAPOLATED_COLUMN] if extra else [])

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [
                r.scenario,
                r.algorithm,
                r.metric,
                r.sweep_param,
                _fmt(r.sweep_value),
                _fmt(r.realization),
                _fmt(r.value),
                _fmt(r.wall_seconds),
                _fmt(r.oracle_evals),
                _fmt(r.seed),
            ]
            if extra:
                row.append("" if r.extrapolated_seconds is None else _fmt(r.extrapolated_seconds))
            w.writerow(row)

    if hasattr(path, "write"):
        write(path)
        return
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        write(fh)


def read_csv(path) -> list[RunRecord]:
    with open(Path(path), encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        extra = row.get(EXTRAPOLATED_COLUMN)
        out.append(
            RunRecord(
                scenario=row["scenario"],
                algorithm=row["algorithm"],
                metric=row["metric"],
                sweep_param=row["sweep_param"],
                sweep_value=float(row["sweep_value"]),
                realization=int(row["realization"]),
                value=float(row["value"]),
                wall_seconds=float(row["wall_seconds"]),
                oracle_evals=int(row["oracle_evals"]),
                seed=int(row["seed"]),
                extrapolated_seconds=float(extra) if extra else None,
            )
        )
    return out


def parse_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use the CLI flag names."""
    out = {}
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out

