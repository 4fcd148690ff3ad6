"""Command-line entry point: ``run``, ``compare`` and ``traces list``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .experiment import ExperimentConfig, compare, run_experiment
from .power import BUILTIN_TRACES


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "crash_schedule", None):
        changes["crash_schedule"] = args.crash_schedule
    if getattr(args, "duration_ms", None) is not None:
        changes["duration_ms"] = args.duration_ms
    if changes:
        cfg = cfg.replace(**changes)
        cfg.validate()
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run_experiment(cfg, args.out)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return 0
    fp = report.forward_progress
    print(f"{report.label} on {report.trace}, {report.duration_ms:g} ms, seed {report.seed}")
    print(f"  finished          {report.finished} "
          f"(non-lengthy {report.finished_non_lengthy}, lengthy {report.finished_lengthy})")
    print(f"  forward progress  {fp['total']:.3f}/s "
          f"(non-lengthy {fp['non_lengthy']:.3f}, lengthy {fp['lengthy']:.3f})")
    for name, n in report.finished_by_workload.items():
        print(f"    {name:<12}{n}")
    print(f"  suspension        {report.suspension_time_ms:.3f} ms x {report.checkpoints}")
    print(f"  recovery          {report.recovery_time_ms:.3f} ms")
    print(f"  recentness        {report.data_recentness_ms:.3f} ms")
    print(f"  power cycles      {report.power_cycles}  crashes {report.crashes}")
    print(f"  aborts            " + ", ".join(f"{k} {v}" for k, v in report.aborts.items()))
    print(f"  digest            {report.digest}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    result = compare(cfg, args.schemes, jobs=args.jobs, out_dir=args.out)
    print(result.table())
    return 0


def cmd_traces(args) -> int:
    for name, (desc, _) in BUILTIN_TRACES.items():
        print(f"{name:<8}{desc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intermittent-sim",
                                description="Intermittent-power runtime simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("--config", help="experiment config file (key = value with sections)")
    r.add_argument("--seed", type=int)
    r.add_argument("--crash-schedule", help="file of 'site_id occurrence_index' lines")
    r.add_argument("--duration-ms", type=float)
    r.add_argument("--out", help="directory for report.json and events.ndjson")
    r.add_argument("--json", action="store_true", help="print the report as JSON")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several schemes on the same inputs")
    c.add_argument("--config")
    c.add_argument("--schemes", default="ours,sys,log",
                   help="comma list; SYS/LOG accept @period_ms, e.g. sys@200")
    c.add_argument("--seed", type=int)
    c.add_argument("--duration-ms", type=float)
    c.add_argument("--jobs", type=int, default=1, help="worker processes")
    c.add_argument("--out", help="directory for compare.csv and compare.json")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("traces", help="built-in power traces")
    t.add_argument("action", choices=["list"])
    t.set_defaults(func=cmd_traces)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
