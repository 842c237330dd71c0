"""Command-line entry point: ``slicewatch <command> [options]``."""

import argparse
import os
import sys

from . import config as config_mod
from . import harness
from . import slicing_sim as sim
from .errors import CsvFormatError, InvalidConfigError, SlicewatchError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_UNKNOWN_COMMAND = 2
EXIT_CONFIG_PARSE = 3
EXIT_UNKNOWN_KEY = 4
EXIT_INVALID_CONFIG = 5
EXIT_INPUT = 6
EXIT_USAGE = 64

OUTPUT_ENV = "SLICEWATCH_OUTPUT_DIR"


class _UsageError(Exception):
    def __init__(self, category, message, status):
        super().__init__(message)
        self.category = category
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        if "invalid choice" in message and "command" in message:
            raise _UsageError("unknown-command", message, EXIT_UNKNOWN_COMMAND)
        raise _UsageError("usage-error", message, EXIT_USAGE)


def keys_help():
    width = max(len(k) for k in config_mod.KEYS)
    lines = ["config keys (YAML file or --set KEY=VALUE):"]
    for key, (default, text) in config_mod.KEYS.items():
        lines.append(f"  {key:<{width}}  {text} [default: {default}]")
    return "\n".join(lines)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML config file")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key"
    )
    common.add_argument(
        "-o", "--out", default=None, help=f"output directory (default: ${OUTPUT_ENV} or ./slicewatch-out)"
    )

    p = _Parser(
        prog="slicewatch",
        description="Distributed anomaly detection for sliced virtual networks: simulate, detect, benchmark.",
        epilog=keys_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, text):
        return sub.add_parser(
            name,
            parents=[common],
            help=text,
            description=text,
            epilog=keys_help(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )

    s = add("simulate", "write a simulated trace as measurement CSV")
    s.add_argument("--targets", choices=("pn", "pl", "both"), default="both", help="which anomalies to inject")
    s.add_argument("--run", type=int, default=0, help="Monte Carlo run index (offsets every seed)")

    for name, what in (("detect-pn", "physical-node OCSVM"), ("detect-pl", "physical-link CCA")):
        d = add(name, f"run the {what} detector over one trace and write a report")
        d.add_argument("--trace", help="measurement CSV to read instead of simulating")
        d.add_argument("--variant", choices=("do", "baseline"), default="do")
        d.add_argument("--run", type=int, default=0, help="Monte Carlo run index when simulating")

    b = add("bench", "Monte Carlo comparison of the distributed detectors against their baselines")
    b.add_argument("--mode", choices=harness.MODES + ("both",), default="both")

    i = add("ingest", "validate a measurement CSV and print a summary")
    i.add_argument("path")
    return p


def _out_dir(args):
    return args.out or os.environ.get(OUTPUT_ENV) or "slicewatch-out"


def _fmt(x):
    return "-" if x is None else f"{x:.3f}"


def _print_metrics(title, rep):
    print(
        f"{title:<24} acc={_fmt(rep.accuracy)} prec={_fmt(rep.precision)} "
        f"rec={_fmt(rep.recall)} f1={_fmt(rep.f1)}"
    )


def cmd_simulate(cfg, args):
    mode = "pl-cca" if args.targets == "pl" else "pn-ocsvm"
    scfg = harness.scenario_config(cfg, mode, args.run)
    scfg.anomaly_targets = args.targets
    if args.targets == "both":
        scfg.anomaly_start = max(cfg["ocsvm.warmup"], cfg["cca.calibration"])
    trace = sim.simulate(scfg)
    out = _out_dir(args)
    os.makedirs(out, exist_ok=True)
    path = harness.export_csv(trace, os.path.join(out, "trace.csv"))
    print(f"wrote {path} ({trace.horizon} steps, {len(trace.vn_ids)} VNs)")
    return EXIT_OK


def cmd_detect(cfg, args, mode):
    if args.trace:
        inp = harness.ingest_csv(args.trace).to_input()
        source = args.trace
    else:
        inp = harness.input_from_trace(harness.build_run_trace(cfg, mode, args.run))
        source = f"simulated run {args.run}"
    if mode == "pn-ocsvm":
        res = harness.run_pn(inp, cfg, args.variant, args.run, record_convergence=args.variant == "do")
    else:
        res = harness.run_pl(inp, cfg, args.variant, args.run)
    rep = res.report()
    rep.metadata = {"source": source, "flagged": dict(sorted(res.flagged.items()))}
    report = harness.experiment_report(cfg, [])
    report["experiments"] = {mode: {args.variant: rep.to_dict()}}
    series = {}
    if res.convergence:
        series["convergence"] = (harness.CONVERGENCE_HEADER, res.convergence)
    paths = harness.emit_results(report, series, _out_dir(args))
    if inp.pn_labels is None and mode == "pn-ocsvm" or inp.pl_labels is None and mode == "pl-cca":
        print("no labels in trace; reporting flagged counts only")
    _print_metrics(f"{mode}/{args.variant}", rep)
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_bench(cfg, args):
    modes = harness.MODES if args.mode == "both" else (args.mode,)
    results = [harness.run_experiment(cfg, m) for m in modes]
    report = harness.experiment_report(cfg, results)
    paths = harness.emit_results(report, harness.experiment_series(results), _out_dir(args))
    for res in results:
        for v, rep in res.reports.items():
            mean = rep.metadata["run_mean"]
            print(
                f"{res.mode + '/' + v:<24} mean over {rep.metadata['runs']} runs: "
                f"acc={_fmt(mean['accuracy'])} prec={_fmt(mean['precision'])} "
                f"rec={_fmt(mean['recall'])} f1={_fmt(mean['f1'])}"
            )
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_ingest(args):
    s = harness.ingest_csv(args.path)
    has = [k for k, v in (("pn_label", s.pn_label), ("pl_label", s.pl_label)) if v is not None]
    print(f"file:      {args.path}")
    print(f"entries:   {s.num_entries}")
    print(f"steps:     {len(s.times)}")
    print(f"VNs:       {len(s.vn_ids)}")
    print(f"PNs:       {len(set(s.pn_of.values()))}")
    print(f"chains:    {len(s.chains)}")
    print(f"features:  {', '.join(s.feature_names)}")
    print(f"labels:    {', '.join(has) if has else 'none'}")
    return EXIT_OK


def run_command(argv=None):
    """Parse ``argv`` and run; returns the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"slicewatch: {exc.category}: {exc}", file=sys.stderr)
        return exc.status
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        cfg = config_mod.load_config(args.config, args.overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg, args)
        if args.command == "detect-pn":
            return cmd_detect(cfg, args, "pn-ocsvm")
        if args.command == "detect-pl":
            return cmd_detect(cfg, args, "pl-cca")
        return cmd_bench(cfg, args)
    except config_mod.ConfigParseError as exc:
        print(f"slicewatch: config-parse: {exc}", file=sys.stderr)
        return EXIT_CONFIG_PARSE
    except config_mod.UnknownKeyError as exc:
        print(f"slicewatch: unknown-override-key: {exc.key}", file=sys.stderr)
        return EXIT_UNKNOWN_KEY
    except CsvFormatError as exc:
        print(f"slicewatch: csv-error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidConfigError as exc:
        print(f"slicewatch: invalid-config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except OSError as exc:
        print(f"slicewatch: io-error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SlicewatchError as exc:
        print(f"slicewatch: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
