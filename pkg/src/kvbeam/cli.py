"""Command line entry point: ``kvbeam validate|run|report|plots``."""

from __future__ import annotations

import argparse
import sys
import warnings
from importlib.resources import files
from pathlib import Path

from .exceptions import ConfigError, KVBeamError
from .experiments import (
    HypothesisWarning,
    emit_plots,
    load_row,
    parse_config,
    result_dirs,
    run_all,
    table_report,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def default_config_path():
    """Path of the bundled single-damping scenario suite."""
    return Path(str(files("kvbeam") / "configs" / "single_damping.ini"))


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HypothesisWarning)
        scenarios = parse_config(text)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return scenarios


def _validate(args):
    scenarios = _load(args.config)
    for s in scenarios:
        tag = "exploratory" if s.exploratory else "in hypotheses"
        print(f"{s.name}: ok ({tag})")
    return EXIT_OK


def _run(args):
    scenarios = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_all(scenarios, out, jobs=args.jobs)
    for r in results:
        note = f" [{r.decay_note}]" if r.decay_note else ""
        print(f"{r.scenario.name}: {r.verdict}{note}")
    return EXIT_OK


def _report(args):
    dirs = result_dirs(args.dir)
    if not dirs:
        print(f"error: no scenario results under {args.dir}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(table_report([load_row(d) for d in dirs]))
    return EXIT_OK


def _plots(args):
    dirs = result_dirs(args.dir)
    if not dirs:
        print(f"error: no scenario results under {args.dir}", file=sys.stderr)
        return EXIT_RUNTIME
    for d in dirs:
        for path in emit_plots(d):
            print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="kvbeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", help="parse a config and check hypotheses")
    p.add_argument("config")
    p.set_defaults(func=_validate)
    p = sub.add_parser("run", help="run every scenario in a config")
    p.add_argument("config", help="scenario file, or 'default' for the bundled suite")
    p.add_argument("--out", default="results")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_run)
    p = sub.add_parser("report", help="render the summary table from a results directory")
    p.add_argument("dir")
    p.set_defaults(func=_report)
    p = sub.add_parser("plots", help="write gnuplot scripts next to stored results")
    p.add_argument("dir")
    p.set_defaults(func=_plots)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "config", None) == "default":
        args.config = default_config_path()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (KVBeamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
