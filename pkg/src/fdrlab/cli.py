"""``fdrlab`` command-line interface.

    fdrlab simulate <config|preset> [--out DIR] [--threads N] [--check]
    fdrlab verify <preset|all> [--paths N] [--seed S] [--threads N]
    fdrlab report <results.json>
    fdrlab presets

Exit codes: 0 success, 1 failed check (``simulate --check``) or failed claim
(``verify``), 2 invalid configuration or unknown preset, 3 failed-path budget
exceeded.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

from . import __version__, presets, svg
from .config import ConfigError, ExperimentConfig
from .runner import ResultRecord, run_config

__all__ = ["main", "write_trajectories", "format_report"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(f"fdrlab: {msg}", file=sys.stderr)


def write_trajectories(path, trajectories: dict, grid) -> int:
    """CSV with columns ``path_index,t,value,observable``; returns the row count."""
    times = grid.times
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_index", "t", "value", "observable"])
        for name in sorted(trajectories):
            for i, values in enumerate(trajectories[name]):
                for t, v in zip(times, values):
                    writer.writerow([i, f"{t:.17g}", f"{v:.17g}", name])
                    rows += 1
    return rows


def _load(target: str) -> ExperimentConfig:
    if target in presets.CONFIGS and not os.path.exists(target):
        return presets.load_preset(target)
    if not os.path.exists(target):
        raise ConfigError(
            f"no such config file or preset (presets: {', '.join(sorted(presets.CONFIGS))})", target
        )
    return ExperimentConfig.from_file(target)


def _plot(plot: dict, record: ResultRecord) -> str:
    stats = plot["stats"]
    mean = [s.mean for s in stats]
    half = [3.0 * s.standard_error if s.n >= 2 else math.nan for s in stats]
    ref = None
    for check in record.checks:
        if check.get("observable", "").startswith(plot["name"] + "@"):
            ref = check.get("target", check.get("bound"))
    return svg.band_plot(
        plot["times"],
        mean,
        [m - h for m, h in zip(mean, half)],
        [m + h for m, h in zip(mean, half)],
        title=f"{record.experiment_id}: mean {plot['name']} (band: 3 SE, n={record.n_paths})",
        ylabel=plot["name"],
        reference=ref,
    )


def cmd_simulate(args) -> int:
    try:
        cfg = _load(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"cannot read {args.config}: {exc}")
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = run_config(cfg, threads=args.threads)
    record = run.record
    (out / "results.json").write_text(record.to_json(), encoding="utf-8")
    written = ["results.json"]
    if run.result.trajectories:
        write_trajectories(out / "trajectories.csv", run.result.trajectories, cfg.build_experiment().grid)
        written.append("trajectories.csv")
    if run.plot:
        (out / "plot.svg").write_text(_plot(run.plot, record), encoding="utf-8")
        written.append("plot.svg")
    print(format_report(record))
    print(f"wrote {', '.join(written)} to {out}")
    if not record.budget_ok:
        _err(
            f"{record.n_failed} of {record.n_paths} paths failed "
            f"({record.failed_fraction:.3%}), above the 0.1% budget"
        )
        return EXIT_BUDGET
    if args.check and not record.passed:
        _err("check failed")
        return EXIT_CHECK
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.preset != "all" and args.preset not in presets.VERIFY:
        _err(f"unknown preset {args.preset!r} (choose from all, {', '.join(presets.VERIFY)})")
        return EXIT_CONFIG
    if args.paths is not None and args.paths < 100:
        _err("--paths must be at least 100")
        return EXIT_CONFIG
    rows = presets.run_verify(args.preset, paths=args.paths, seed=args.seed, threads=args.threads)
    width = max(len(r.claim) for r in rows)
    suite_w = max(len(r.suite) for r in rows)
    for r in rows:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<{suite_w}}  {r.claim:<{width}}  {r.detail}")
    n_fail = sum(not r.passed for r in rows)
    print(f"{len(rows) - n_fail}/{len(rows)} passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK


def format_report(record: ResultRecord) -> str:
    lines = [
        f"experiment {record.experiment_id} ({record.kind})  config {record.config_hash[:12]}  "
        f"fdrlab {record.tool_version}",
        f"paths {record.n_paths}  seed {record.master_seed}  failed {record.n_failed} "
        f"({record.failed_fraction:.3%})  wall {record.wall_clock_s:.2f}s",
        "",
    ]
    header = ("observable", "n", "mean", "variance", "SE")
    table = [header]
    for key in sorted(record.observables):
        s = record.observables[key]

        def fmt(x):
            return "nan" if x is None else f"{x:.6g}"

        table.append((key, str(s["n"]), fmt(s["mean"]), fmt(s["variance"]), fmt(s["se"])))
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    for row in table:
        lines.append("  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))))
    for check in record.checks:
        extra = {k: v for k, v in check.items() if k not in ("kind", "observable", "verdict", "label")}
        detail = " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(extra.items()))
        lines.append(f"check {check['kind']} on {check['observable']}: {check['verdict'].upper()}  {detail}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    try:
        record = ResultRecord.from_json(Path(args.results).read_text(encoding="utf-8"))
    except (OSError, ValueError, TypeError) as exc:
        _err(f"cannot read result record {args.results}: {exc}")
        return EXIT_CONFIG
    print(format_report(record))
    return EXIT_OK


def cmd_presets(args) -> int:
    print("simulate presets:")
    for name in sorted(presets.CONFIGS):
        print(f"  {name}")
    print("verify suites:")
    for name in presets.VERIFY:
        print(f"  {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdrlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"fdrlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one experiment config or preset")
    p.add_argument("config", help="path to an INI config, or a preset name")
    p.add_argument("--out", default="fdrlab-out", help="output directory (default: %(default)s)")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    p.add_argument("--check", action="store_true", help="exit 1 if the configured check fails")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("preset", help="suite name or 'all'")
    p.add_argument("--paths", type=int, default=None, help="override the number of paths")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="print a results.json as a table")
    p.add_argument("results")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", help="list presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
