"""Command-line driver: ``atoplan <subcommand> [--config FILE] [--seed N] [--threads N] [--out DIR]``.

Exit codes: 0 success, 2 usage error or unknown subcommand, 3 malformed
configuration, 4 solver backend not installed, 5 a solve failed.
"""

from __future__ import annotations

import argparse
import importlib.metadata
import json
import logging
import platform
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import STREAMS, ConfigError, ExperimentConfig
from .demand import History, round_half_away
from .experiment import config_label, history_for, prepare, run_grid, train_value
from .fosva import TrainingStats
from .optimizer import BackendUnavailable, SolverError, available_backends
from .report import read_csv, render_figures, summary_rows, table_rows, write_results, write_tables
from .scenario import build_tree, empirical_month_mean, parse_kind

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_BACKEND = 4
EXIT_SOLVER = 5

log = logging.getLogger("atoplan")


def _versions() -> dict:
    out = {"atoplan": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "matplotlib", "highspy", "pulp"):
        try:
            out[pkg] = importlib.metadata.version(pkg)
        except importlib.metadata.PackageNotFoundError:
            pass
    return out


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, outputs, extra=None) -> Path:
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "streams": {"demand_paths": 0, **STREAMS},
        "solver": {"backend": cfg.solver.backend, "available": available_backends()},
        "versions": _versions(),
        "outputs": sorted(str(Path(p).name) for p in outputs),
        "config": cfg.to_dict(),
    }
    if extra:
        manifest.update(extra)
    path = out / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    cfg = cfg.with_overrides(seed=args.seed, threads=getattr(args, "threads", None),
                             output_dir=getattr(args, "out", None))
    if getattr(args, "instance", None):
        if not Path(args.instance).exists():
            raise ConfigError(f"instance file {args.instance} does not exist")
        cfg = replace(cfg, instance_path=str(args.instance))
    cfg.validate()
    return cfg


def _require_backend(cfg: ExperimentConfig) -> None:
    if cfg.solver.backend not in available_backends():
        raise BackendUnavailable(
            f"solver backend {cfg.solver.backend!r} is not installed (available: {', '.join(available_backends())})"
        )


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands -------------------------------------------------------------


def cmd_generate_instance(args) -> int:
    cfg = _load_config(args)
    out = _out(cfg)
    setting = prepare(cfg)
    setting.instance.save(out / "instance.json")
    setting.demand_model.save(out / "demand_model.json")
    (out / "mean_demand.json").write_text(json.dumps(setting.mean_demand.tolist()))
    files = [out / "instance.json", out / "demand_model.json", out / "mean_demand.json"]
    write_manifest(out, "generate-instance", cfg, files)
    print(f"wrote {out / 'instance.json'}")
    return EXIT_OK


def cmd_generate_history(args) -> int:
    cfg = _load_config(args)
    out = _out(cfg)
    setting = prepare(cfg)
    files = []
    for years in args.years or cfg.years:
        path = out / f"history_{years}y.csv"
        history_for(cfg, setting, years).to_csv(path)
        files.append(path)
    write_manifest(out, "generate-history", cfg, files)
    print("wrote " + ", ".join(str(p) for p in files))
    return EXIT_OK


def cmd_train_fosva(args) -> int:
    cfg = _load_config(args)
    _require_backend(cfg)
    out = _out(cfg)
    setting = prepare(cfg)
    files, solves = [], {}
    years_list = args.years or cfg.years
    gammas = [(gi, g) for gi, g in enumerate(cfg.gammas) if args.gamma is None or abs(g - args.gamma) < 1e-12]
    if not gammas:
        raise ConfigError(f"gamma {args.gamma} is not part of the configured grid")
    for years in years_list:
        hpath = out / f"history_{years}y.csv"
        hist = History.from_csv(hpath) if hpath.exists() else history_for(cfg, setting, years)
        for gi, gamma in gammas:
            label = config_label(years, gamma)
            stats = TrainingStats()
            value = train_value(cfg, setting, setting.instance_for(gamma), hist, years, gi, stats)
            path = out / f"fosva_{label}.json"
            value.save(path)
            files.append(path)
            solves[label] = stats.solves
            print(f"{label}: {stats.solves} two-stage solves -> {path}")
    write_manifest(out, "train-fosva", cfg, files, {"training_solves": solves})
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    _require_backend(cfg)
    out = _out(cfg)
    result = run_grid(cfg, artifacts_dir=out)
    files = write_results(result, out)
    write_manifest(out, "simulate", cfg, files,
                   {"training_solves": {k: v.solves for k, v in result.training.items()}})
    _print_table(summary_rows(result))
    return EXIT_OK


def _print_table(summary: list[dict]) -> None:
    cols, rows = table_rows(summary, "profit_pct", False)
    cols_ss, rows_ss = table_rows(summary, "profit_pct", True)
    for c, rs in ((cols, rows), (cols_ss, rows_ss)):
        if len(c) == 2:
            continue
        print("profit % of perfect information")
        print("  ".join(f"{x:>8}" for x in c))
        for r in rs:
            print("  ".join(f"{r.get(x, float('nan')):>8.1f}" if isinstance(r.get(x), float) and x != "gamma"
                            else f"{r.get(x)!s:>8}" for x in c))


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    if not (out / "summary.csv").exists() or not (out / "periods.csv").exists():
        print(f"error: {out} holds no simulation output (run simulate first)", file=sys.stderr)
        return EXIT_USAGE
    summary = read_csv(out / "summary.csv")
    tables = write_tables(summary, out)
    figs = [] if args.no_figures else render_figures(out)
    _print_table(summary)
    for p in tables + figs:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_dump_tree(args) -> int:
    cfg = _load_config(args)
    try:
        parse_kind(args.kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 <= args.month < 12:
        raise ConfigError("--month must lie in 0..11")
    setting = prepare(cfg)
    years = args.years or cfg.years[0]
    hist = history_for(cfg, setting, years)
    root = round_half_away(empirical_month_mean(hist, args.month))
    tree = build_tree(args.kind, hist, args.month, root, pairing=args.pairing)
    dest = Path(args.file) if args.file else _out(cfg) / f"tree_{args.kind.upper()}_m{args.month}.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    tree.save(dest)
    print(f"{tree.kind}: {tree.num_nodes} nodes, {len(tree.leaves)} leaves -> {dest}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atoplan", description="Assemble-to-order planning experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--version", action="version", version=f"atoplan {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    def common(p, threads=False):
        p.add_argument("--config", help="experiment configuration (JSON)")
        p.add_argument("--seed", type=int, help="master seed, overrides the configuration")
        p.add_argument("--out", help="output directory, overrides the configuration")
        p.add_argument("--instance", help="instance JSON written by generate-instance")
        if threads:
            p.add_argument("--threads", type=int, help="maximum number of concurrent solves")
        return p

    common(sub.add_parser("generate-instance", help="sample an instance and its demand model"))
    p = common(sub.add_parser("generate-history", help="sample in-sample demand histories"))
    p.add_argument("--years", type=int, action="append", help="history length (repeatable)")
    p = common(sub.add_parser("train-fosva", help="train stock value approximations"), threads=True)
    p.add_argument("--years", type=int, action="append", help="history length (repeatable)")
    p.add_argument("--gamma", type=float, help="train only this tightness value")
    common(sub.add_parser("simulate", help="rolling-horizon simulation of all policies"), threads=True)
    p = sub.add_parser("report", help="tables and figures from simulation output")
    p.add_argument("--out", help="directory holding summary.csv and periods.csv")
    p.add_argument("--no-figures", action="store_true")
    p = common(sub.add_parser("dump-tree", help="write one scenario tree as JSON"))
    p.add_argument("--kind", default="MS3", help="TS, TS_NOS, MS3, MP_n, MS3_n or DET_n")
    p.add_argument("--month", type=int, default=0, help="calendar month of the root (0-11)")
    p.add_argument("--years", type=int, help="history length")
    p.add_argument("--pairing", default="cross", choices=["cross", "same-index"])
    p.add_argument("--file", help="destination file")
    return parser


COMMANDS = {
    "generate-instance": cmd_generate_instance,
    "generate-history": cmd_generate_history,
    "train-fosva": cmd_train_fosva,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "dump-tree": cmd_dump_tree,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendUnavailable as exc:
        print(f"solver backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
