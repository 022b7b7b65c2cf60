"""Command line entry point: ``rmt-select {detequiv,select,experiment,bench}``.

Exit status is 0 on success, 2 when any failure rows were written and 1 on
configuration errors. Every flag may also be given in a ``--config`` file as
``flag-name = value``; flags on the command line win.
"""

from __future__ import annotations

import argparse
import sys

from . import detequiv as de
from .core import SelectionError, SelectionVector
from .exact import sample_channel
from .harness import (
    ConfigError,
    ExperimentConfig,
    bench_runtime,
    emit_csv,
    parse_config_file,
    run_experiment,
)
from .selectors import AwareOracle, BlindOracle, convex_relax_select, exhaustive_select, greedy_select, random_select

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 1, 2

# flag name -> (type, default); shared by the parser and the config-file loader
OPTIONS = {
    "scenario": (str, "mimo-d2"),
    "metric": (str, "MSE"),
    "algo": (str, None),
    "k": (int, None),
    "n": (int, None),
    "m": (int, None),
    "d": (float, None),
    "decay-rho": (float, None),
    "sweep": (str, None),
    "realizations": (int, 100),
    "seed": (int, 0),
    "out": (str, None),
    "threads": (int, None),
    "K": (int, 2),
    "snr-db": (float, None),
    "indices": (str, None),
    "changes": (int, 1),
}
FLAGS = ("db", "timing")


class _ConfigArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ConfigArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmt-select", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "detequiv": "print the deterministic equivalents for a scenario and selection",
        "select": "run one selector and print the chosen indices",
        "experiment": "Monte Carlo sweep written as CSV",
        "bench": "runtime and oracle-call accounting written as CSV",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", help="key = value file mirroring these flags")
        for opt, (typ, _) in OPTIONS.items():
            p.add_argument(f"--{opt}", type=typ, default=None, dest=opt.replace("-", "_"))
        for flag in FLAGS:
            p.add_argument(f"--{flag}", action="store_true", default=None)
    return parser


def _merge(args) -> dict:
    """Defaults < config file < command line."""
    values = {opt.replace("-", "_"): default for opt, (_, default) in OPTIONS.items()}
    values.update({f: False for f in FLAGS})
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            if key in OPTIONS:
                try:
                    values[key.replace("-", "_")] = OPTIONS[key][0](raw)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from None
            elif key in FLAGS:
                values[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "config"):
            values[key] = val
    return values


def _parse_sweep(text: str | None):
    if not text:
        return "k", ()
    if "=" not in text:
        raise ConfigError("--sweep expects PARAM=v1,v2,... (PARAM is k, d or decay_rho)")
    param, vals = text.split("=", 1)
    param = param.strip().replace("-", "_")
    try:
        return param, tuple(float(v) for v in vals.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad sweep values {vals!r}") from None


def _config(v: dict, default_algos) -> ExperimentConfig:
    param, values = _parse_sweep(v["sweep"])
    algos = tuple(a.strip() for a in v["algo"].split(",")) if v["algo"] else default_algos
    return ExperimentConfig(
        scenario=v["scenario"],
        metric=v["metric"],
        algorithms=algos,
        realizations=v["realizations"],
        sweep_param=param,
        sweep_values=values,
        K=v["K"],
        master_seed=v["seed"],
        snr_db=v["snr_db"],
        db=v["db"],
        threads=v["threads"],
        n=v["n"],
        m=v["m"],
        k=v["k"],
        d=v["d"],
        decay_rho=v["decay_rho"],
        record_timing=v["timing"],
        n_changes=v["changes"],
    )


def _cmd_detequiv(v: dict, out) -> int:
    cfg = _config(v, ("greedy-blind",))
    sc = cfg.scenario_at(cfg.points()[0] if cfg.sweep_values else None)
    R, dims = sc.correlation(), sc.dims
    if v["indices"]:
        s = SelectionVector.from_indices(dims.n, [int(i) for i in v["indices"].split(",")])
        if s.budget != dims.k:
            dims = dims.with_k(s.budget)
    else:
        s = random_select(dims, v["seed"])
    delta = de.solve_delta(R, s, dims)
    lce = de.lce_bar(R, s, dims)
    wev = de.wev_bar(R, s, dims)
    print(f"scenario = {cfg.scenario}", file=out)
    print(f"n = {dims.n}\nm = {dims.m}\nk = {dims.k}", file=out)
    print("indices = " + ",".join(str(i) for i in s.indices()), file=out)
    print(f"delta = {delta.scalar:.12g}", file=out)
    print(f"MSE = {delta.value:.12g}", file=out)
    print(f"LCE = {lce.value:.12g}", file=out)
    print(f"eta = {wev.scalar:.12g}", file=out)
    print(f"lambda_min = {wev.edge:.12g}", file=out)
    print(f"WEV = {wev.value:.12g}", file=out)
    return EXIT_OK


def _cmd_select(v: dict, out) -> int:
    cfg = _config(v, ("greedy-blind",))
    if len(cfg.algorithms) != 1:
        raise ConfigError("select runs exactly one --algo")
    algo = cfg.algorithms[0]
    sc = cfg.scenario_at(cfg.points()[0] if cfg.sweep_values else None)
    R, dims = sc.correlation(), sc.dims
    metric = cfg.metric
    source = R
    if algo in ("greedy-aware", "convex-aware", "exhaustive"):
        source = sample_channel(R, dims.m, cfg.master_seed)
    if algo.startswith("greedy"):
        oracle = BlindOracle(R, dims, metric) if algo == "greedy-blind" else AwareOracle(source, dims, metric)
        res = greedy_select(oracle, dims, K=cfg.K, seed=cfg.master_seed)
        sel, obj, evals = res.selection, res.objective, res.evals
    elif algo.startswith("convex"):
        res = convex_relax_select(source, dims, metric)
        sel, obj, evals = res.selection, res.objective, res.evals
    elif algo == "exhaustive":
        res = exhaustive_select(AwareOracle(source, dims, metric), dims)
        sel, obj, evals = res.selection, res.objective, res.evals
    else:
        sel = random_select(dims, cfg.master_seed)
        obj, evals = de.equivalent(metric, R, sel, dims).value, 0
    print(",".join(str(i) for i in sel.indices()), file=out)
    print(f"# algorithm={algo} metric={metric.value} objective={obj:.12g} evals={evals}", file=out)
    return EXIT_OK


def _write(records, v: dict, out) -> int:
    if v["out"]:
        emit_csv(records, v["out"])
    else:
        emit_csv(records, out)
    return EXIT_FAILURES if any(r.failed for r in records) else EXIT_OK


def _cmd_experiment(v: dict, out) -> int:
    return _write(run_experiment(_config(v, ("greedy-blind", "random"))), v, out)


def _cmd_bench(v: dict, out) -> int:
    v = dict(v, timing=True)
    return _write(bench_runtime(_config(v, ("greedy-blind", "greedy-aware"))), v, out)


COMMANDS = {
    "detequiv": _cmd_detequiv,
    "select": _cmd_select,
    "experiment": _cmd_experiment,
    "bench": _cmd_bench,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        values = _merge(args)
        return COMMANDS[args.command](values, out)
    except (_ConfigArgumentError, ConfigError, KeyError, ValueError) as exc:
        if isinstance(exc, SelectionError) and not isinstance(exc, ConfigError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURES
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
