"""``cohijack`` command line: simulate -> learn -> detect -> locate -> eval.

Every flag may also come from a JSON file given with ``--config``, either
at top level (``{"delta": 2}``) or inside a per-command section
(``{"detect": {"delta": 2}}``). Explicit command-line flags win.
Exit status: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .detector import (
    DEFAULT_DELTA,
    VerdictState,
    detect,
    hop_anomaly_only,
    read_hijacks,
    read_verdicts,
    write_hijacks,
    write_verdicts,
)
from .errors import CoHijackError
from .evaluator import (
    experiment_batch,
    roc_sweep,
    score,
    write_gnuplot_data,
    write_metrics,
    write_roc_csv,
)
from .hop_table import DEFAULT_MIN_SAMPLES, HopTable, learn_from_observations
from .hop_table import load as load_table
from .hop_table import save as save_table
from .ingest import DEFAULT_GAP_SECONDS, ColumnMapping, load_bras_mapping, normalize, read_events
from .locator import (
    DEFAULT_MIN_SHARE,
    DEFAULT_Z_THRESHOLD,
    attack_distribution,
    converge,
    corroborate,
    read_topology,
    redirect_share_by_bras,
    write_location,
)
from .session_model import read_observations, read_sessions, write_jsonl
from .simulator import generate, load_scenario, write_dataset

log = logging.getLogger("cohijack")

ENV_OUT_DIR = "COHIJACK_OUT_DIR"


class UsageError(Exception):
    pass


def _default_out():
    return os.environ.get(ENV_OUT_DIR, ".")


def _require(path, what):
    if path is None:
        raise UsageError(f"missing required {what}")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _out_dir(args) -> Path:
    out = Path(args.out or _default_out())
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(payload):
    sys.stdout.write(json.dumps(payload, indent=2))
    sys.stdout.write("\n")


def _parse_deltas(text):
    try:
        deltas = [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--roc expects comma-separated integers, got {text!r}") from None
    if not deltas:
        raise UsageError("--roc needs at least one delta")
    return sorted(deltas)


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    scenario = args.scenario if str(args.scenario).startswith("@") else _require(args.scenario, "scenario file")
    config = load_scenario(scenario)
    if args.seed is not None:
        config = config.with_(rng_seed=args.seed)
    dataset = generate(config)
    out = write_dataset(dataset, _out_dir(args))
    log.info("wrote %d sessions / %d observations to %s", len(dataset.sessions), len(dataset.observations), out)


def cmd_learn(args):
    observations = read_observations(_require(args.observations, "observations file"))
    table = learn_from_observations(
        HopTable(args.min_samples), observations, skip_confirmed=not args.include_confirmed
    )
    out = Path(args.out) if args.out else Path(_default_out()) / "hoptable.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_table(table, out)
    log.info("learned %d hop-table entries from %d observations -> %s", len(table), len(observations), out)


def cmd_detect(args):
    sessions_path = _require(args.sessions, "sessions file")
    table = load_table(_require(args.hoptable, "hop table"), args.min_samples)
    sessions = read_sessions(sessions_path)
    verdicts, records = detect(sessions, table, args.delta)
    out = _out_dir(args)
    write_verdicts(out / "verdicts.jsonl", verdicts)
    write_hijacks(out / "hijacks.csv", records)
    log.info("%d sessions, %d hijacks -> %s", len(verdicts), len(records), out)


def cmd_locate(args):
    records = read_hijacks(_require(args.hijacks, "hijacks file"))
    topology = read_topology(_require(args.topology, "topology file"))
    dist = attack_distribution(records)
    result = converge(dist, topology, args.min_share)
    shares = None
    if args.observations:
        shares = redirect_share_by_bras(read_observations(_require(args.observations, "observations file")))
        result = corroborate(result, shares, args.z_threshold)
    out = _out_dir(args)
    write_location(out / "location.json", result)
    if not args.no_figures:
        from . import report

        report.plot_attack_distribution(dist, topology, out / "attack_distribution.png", result.converged_node)
        if shares:
            report.plot_redirect_share(shares, topology, out / "redirect_share.png", result.supporting_bras)
    _emit(result.to_dict())


def cmd_eval(args):
    verdicts = read_verdicts(_require(args.verdicts, "verdicts file"))
    sessions = read_sessions(_require(args.sessions, "sessions file"))
    missing = [s.session_id for s in sessions if s.label is None]
    if missing:
        raise CoHijackError(f"sessions without ground-truth label: {missing[:5]}")
    report_ = score(verdicts, sessions)
    out = _out_dir(args)
    write_metrics(out / "metrics.json", report_)
    if args.roc is not None:
        deltas = _parse_deltas(args.roc)
        table = load_table(_require(args.hoptable, "hop table (required with --roc)"), args.min_samples)
        points = roc_sweep(sessions, table, deltas)
        write_roc_csv(out / "roc.csv", points)
        write_gnuplot_data(out / "roc.dat", points)
        if not args.no_figures:
            from . import report

            baseline = roc_sweep(sessions, table, deltas, hop_anomaly_only, frozenset({VerdictState.SUSPICIOUS}))
            report.plot_roc(points, out / "roc.png", baseline=baseline)
    _emit(report_.to_dict())


def cmd_experiment(args):
    scenario = args.scenario if str(args.scenario).startswith("@") else _require(args.scenario, "scenario file")
    config = load_scenario(scenario)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    batch = experiment_batch(config, args.runs, args.duration, args.delta, args.min_samples)
    out = _out_dir(args)
    write_metrics(out / "metrics.json", batch)
    agg = batch.aggregate
    log.info("%d runs, %d sessions, accuracy %s", args.runs, agg.counts.total, agg.accuracy)
    _emit(agg.to_dict())


def cmd_ingest(args):
    rows = read_events(_require(args.events, "events file"))
    bras_map = load_bras_mapping(_require(args.bras_map, "BRAS mapping"))
    mapping = ColumnMapping.load(_require(args.columns, "column mapping")) if args.columns else None
    result = normalize(rows, bras_map, mapping, args.gap)
    out = _out_dir(args)
    write_jsonl(out / "observations.jsonl", result.observations)
    write_jsonl(out / "sessions.jsonl", result.sessions)
    log.info("ingest summary: %s", json.dumps(result.summary()))


# -- parser ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="cohijack", description="Detect and locate HTTP bypass hijacking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="JSON file supplying default flag values")
    parser.add_argument("--log-level", default="WARNING", help="stderr log level (default WARNING)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--out", help=f"output location (default ${ENV_OUT_DIR} or .)")
        subs[name] = p
        return p

    p = add("simulate", cmd_simulate, "Generate a labeled scenario directory.")
    p.add_argument("scenario", help="scenario JSON file, or @default / @s1 / @clean")
    p.add_argument("--seed", type=int, help="override the scenario rng_seed")

    p = add("learn", cmd_learn, "Learn the normal hop table from observations.")
    p.add_argument("observations", help="observations.jsonl")
    p.add_argument("--min-samples", dest="min_samples", type=int, default=DEFAULT_MIN_SAMPLES)
    p.add_argument("--include-confirmed", dest="include_confirmed", action="store_true",
                   help="also learn from sessions holding a duplicate sequence pair")

    p = add("detect", cmd_detect, "Classify sessions and record hijacks.")
    p.add_argument("sessions", help="sessions.jsonl")
    p.add_argument("--hoptable", help="hop table CSV")
    p.add_argument("--delta", type=int, default=DEFAULT_DELTA, help="suspicion margin in hops")
    p.add_argument("--min-samples", dest="min_samples", type=int, default=DEFAULT_MIN_SAMPLES)

    p = add("locate", cmd_locate, "Converge hijack records to the tap location.")
    p.add_argument("hijacks", help="hijacks.csv")
    p.add_argument("--topology", help="topology CSV")
    p.add_argument("--observations", help="observations.jsonl for 302-share corroboration")
    p.add_argument("--min-share", dest="min_share", type=float, default=DEFAULT_MIN_SHARE)
    p.add_argument("--z-threshold", dest="z_threshold", type=float, default=DEFAULT_Z_THRESHOLD)
    p.add_argument("--no-figures", dest="no_figures", action="store_true")

    p = add("eval", cmd_eval, "Score verdicts against ground truth.")
    p.add_argument("verdicts", help="verdicts.jsonl")
    p.add_argument("sessions", help="labeled sessions.jsonl")
    p.add_argument("--roc", help="comma-separated deltas to sweep, e.g. 0,1,2,4,8")
    p.add_argument("--hoptable", help="hop table CSV (needed by --roc)")
    p.add_argument("--min-samples", dest="min_samples", type=int, default=DEFAULT_MIN_SAMPLES)
    p.add_argument("--no-figures", dest="no_figures", action="store_true")

    p = add("experiment", cmd_experiment, "Repeat simulate/learn/detect/score and aggregate.")
    p.add_argument("scenario", help="scenario JSON file, or @default / @s1 / @clean")
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--duration", type=float, help="seconds of traffic per run (sizes n_sessions)")
    p.add_argument("--delta", type=int, default=DEFAULT_DELTA)
    p.add_argument("--min-samples", dest="min_samples", type=int, default=DEFAULT_MIN_SAMPLES)

    p = add("ingest", cmd_ingest, "Normalize a capture export into canonical JSONL.")
    p.add_argument("events", help="CSV or JSONL export")
    p.add_argument("--bras-map", dest="bras_map", help="JSON object: tap tag -> bras_id")
    p.add_argument("--columns", help="JSON column mapping file")
    p.add_argument("--gap", type=float, default=DEFAULT_GAP_SECONDS, help="session gap in seconds")

    return parser, subs


def _apply_config(parser, subs, argv):
    pre_parser = argparse.ArgumentParser(add_help=False)
    pre_parser.add_argument("--config")
    pre, _ = pre_parser.parse_known_args(argv)
    if not pre.config:
        return
    try:
        with open(pre.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {pre.config}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {pre.config}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    top = {k.replace("-", "_"): v for k, v in doc.items() if not isinstance(v, dict)}
    if "log_level" in top:
        parser.set_defaults(log_level=top["log_level"])
    for name, p in subs.items():
        known = {a.dest for a in p._actions if a.option_strings}
        values = {k: v for k, v in top.items() if k in known}
        section = doc.get(name)
        if isinstance(section, dict):
            values.update({k.replace("-", "_"): v for k, v in section.items() if k.replace("-", "_") in known})
        p.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subs = build_parser()
    try:
        _apply_config(parser, subs, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cohijack: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc}", file=sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=str(args.log_level).upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
    except UsageError as exc:
        subs[args.command].print_usage(sys.stderr)
        print(f"cohijack {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"FileNotFound: {exc}", file=sys.stderr)
        return 1
    except CoHijackError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"InvalidArgument: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
