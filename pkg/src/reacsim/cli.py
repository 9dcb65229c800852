"""Command-line entry points: ingest, simulate, ablation, report, plot, sample.

Exit codes: 0 success, 1 usage error, 2 data error, 3 simulation failure
(partial results are still written).
"""
from __future__ import annotations

import argparse
import shutil
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .core import Scenario
from .engine import ALL_SETTINGS, Setting, SimResult, run_ablation
from .ingest import IngestError, build_scenarios, load_scenario, parse_map, parse_tracks, save_scenario
from .metrics import aggregate, format_table, report_rows
from .plot import write_result_svg
from .results import load_result, load_results, result_filename, save_result

USAGE_ERROR = 1
DATA_ERROR = 2
SIM_FAILURE = 3


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_ERROR)


def _load_scenario_dir(directory: Path) -> list[Scenario]:
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise IngestError(f"no scenario files in {directory}")
    return [load_scenario(p) for p in paths]


def cmd_ingest(args: argparse.Namespace) -> int:
    records = parse_tracks(args.tracks)
    map_data = parse_map(args.map) if args.map else None
    build = build_scenarios(
        records, args.t_obs, args.t_sim, args.min_track_len, dt=args.dt, map_data=map_data
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for scenario in build.scenarios:
        save_scenario(scenario, out / f"{scenario.id}.json")
    if build.skipped:
        lines = [f"{case},{track},{reason}" for case, track, reason in build.skipped]
        (out / "skipped.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(build.scenarios)} scenarios to {out} ({len(build.skipped)} skipped)")
    return 0


def _run_and_persist(args: argparse.Namespace, settings: tuple[Setting, ...]) -> int:
    run_cfg = load_config(args.config)
    scenarios = _load_scenario_dir(Path(args.scenarios))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def sink(result: SimResult) -> None:
        save_result(result, out / result_filename(result))

    results = run_ablation(
        scenarios,
        {setting: run_cfg.predictor for setting in settings},
        run_cfg.sim,
        seeds=run_cfg.seeds,
        settings=settings,
        sink=sink,
        parallelism=run_cfg.parallelism,
    )
    n_failed = sum(1 for r in results if r.failed)
    print(f"wrote {len(results)} results to {out} ({n_failed} failed)")
    return SIM_FAILURE if n_failed else 0


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        setting = Setting(args.setting)
    except ValueError:
        values = ", ".join(s.value for s in ALL_SETTINGS)
        sys.stderr.write(f"unknown setting {args.setting!r}; choose from: {values}\n")
        return USAGE_ERROR
    return _run_and_persist(args, (setting,))


def cmd_ablation(args: argparse.Namespace) -> int:
    return _run_and_persist(args, ALL_SETTINGS)


def cmd_report(args: argparse.Namespace) -> int:
    run_cfg = load_config(args.config)
    results = load_results(args.results)
    report = aggregate(results, run_cfg.thresholds)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["setting,metric,mean,std"]
    lines += [f"{s},{m},{mean!r},{std!r}" for s, m, mean, std in report_rows(report)]
    out.write_text("\n".join(lines) + "\n")
    table = format_table(report)
    table_path = args.table or out.with_suffix(".txt")
    Path(table_path).write_text(table)
    print(table, end="")
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    result = load_result(args.result)
    map_data = parse_map(args.map) if args.map else None
    write_result_svg(result, args.out, map_data)
    print(f"wrote {args.out}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    paths = sorted(Path(args.scenarios).glob("*.json"))
    if not paths:
        raise IngestError(f"no scenario files in {args.scenarios}")
    if args.n > len(paths):
        raise IngestError(f"requested {args.n} scenarios but only {len(paths)} available")
    rng = np.random.default_rng(args.seed)
    chosen = sorted(rng.choice(len(paths), size=args.n, replace=False).tolist())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in chosen:
        shutil.copy(paths[i], out / paths[i].name)
        print(paths[i].stem)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="reacsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse track CSV (and map) into scenario files")
    p.add_argument("--tracks", required=True)
    p.add_argument("--map", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--t-obs", type=int, default=10, dest="t_obs")
    p.add_argument("--t-sim", type=int, default=50, dest="t_sim")
    p.add_argument("--min-track-len", type=int, default=None, dest="min_track_len")
    p.add_argument("--dt", type=float, default=0.1)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="run one framework setting over a scenario dir")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--setting", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ablation", help="run all six framework settings")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("report", help="aggregate result files into CSV + text table")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", help="render a result file as a 3-panel SVG")
    p.add_argument("--result", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--map", default=None)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sample", help="seeded uniform subset of a scenario dir")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (IngestError, ConfigError, FileNotFoundError, NotADirectoryError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_ERROR
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
