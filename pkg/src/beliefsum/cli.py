"""Command-line entry point: ``beliefsum {learn,detect,simulate,solve,eval}``."""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .detector import alarm_report, run, write_trajectory
from .exceptions import (
    ConfigurationError,
    DegenerateObservationError,
    IngestError,
    InvalidParameterError,
)
from .hmm import TransitionModel
from .io import Binning, ModelConfigFile, ingest, load_config, sum_streams
from .learner import LearnerConfig, TrainingSet, learn_ladder
from .simulator import (
    SamplePath,
    ScenarioConfig,
    evaluate,
    sample_path,
    scripted_day,
    write_path,
)
from .solver import POMDPSolver, write_policy_csv

logger = logging.getLogger("beliefsum")


def _binning(args, cfg=None):
    if args.bin_width is not None:
        return Binning(args.bin_width, args.bin_unit)
    if cfg is not None:
        return cfg.binning
    return Binning()


def _out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_learn(args):
    binning = _binning(args)
    stream = ingest(args.input, binning)
    data = TrainingSet(stream.counts, os.path.basename(args.input))
    lcfg = LearnerConfig(args.n_normal, args.multiplier, args.floor)
    ladder, km = learn_ladder(data, lcfg)
    cfg = ModelConfigFile(
        rates=list(ladder.rates),
        n_normal=ladder.normal_count,
        a_low=args.a_low,
        a_high=args.a_high,
        alpha=args.alpha if args.alpha is not None else 0.5,
        threshold=args.threshold if args.threshold is not None else 0.8,
        report_sum=args.report_sum,
        binning=binning,
        provenance={
            "source": data.source_label,
            "sha256": data.digest(),
            "n_counts": len(data.counts),
            "requested_n_normal": lcfg.n_normal,
            "boundary_multiplier": lcfg.boundary_multiplier,
            "rate_floor": lcfg.rate_floor,
            "kmeans_iterations": km.n_iter,
        },
    )
    cfg.save(args.output)
    print(f"learned N={ladder.normal_count} rates={list(ladder.rates)!r} -> {args.output}")
    return 0


def _detect_one(path, cfg, det, args):
    stream = ingest(path, _binning(args, cfg))
    return run(stream.counts, det, mode=args.mode)


def cmd_detect(args):
    cfg = load_config(args.config)
    det = cfg.detector_config(alpha=args.alpha, threshold=args.threshold)
    if os.path.isdir(args.input):
        names = sorted(f for f in os.listdir(args.input) if f.endswith(".csv"))
        if not names:
            raise IngestError(f"no .csv files in {args.input}")
        if args.output is None:
            raise ConfigurationError("--output must name a directory for multi-stream input")
        os.makedirs(args.output, exist_ok=True)
        reports = []
        for name in names:
            records, alarm = _detect_one(os.path.join(args.input, name), cfg, det, args)
            write_trajectory(records, os.path.join(args.output, name))
            reports.append(alarm_report(os.path.splitext(name)[0], alarm, det))
        summary = "\n".join(reports)
        with open(os.path.join(args.output, "alarms.txt"), "w") as fh:
            fh.write(summary)
        sys.stdout.write(summary)
        return 0
    if args.sum_inputs:
        binning = _binning(args, cfg)
        counts = sum_streams([ingest(p, binning).counts for p in [args.input] + args.sum_inputs])
        records, alarm = run(counts, det, mode=args.mode)
    else:
        records, alarm = _detect_one(args.input, cfg, det, args)
    fh = _out(args.output)
    try:
        write_trajectory(records, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    sys.stderr.write(alarm_report(os.path.splitext(os.path.basename(args.input))[0], alarm, det))
    return 0


def cmd_simulate(args):
    cfg = load_config(args.config)
    rng = np.random.default_rng(args.seed)
    if args.day:
        event = None
        if args.event_start is not None:
            end = args.event_end if args.event_end is not None else args.horizon
            event = (args.event_start, end)
        states, counts = scripted_day(cfg.ladder(), cfg.transition(), args.horizon, rng, event)
        path = SamplePath(int(states[0]), states, counts, None)
    else:
        scenario = ScenarioConfig(cfg.ladder(), cfg.transition(), horizon=args.horizon,
                                  seed=args.seed)
        path = sample_path(scenario, rng)
    fh = _out(args.output)
    try:
        write_path(path, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_solve(args):
    cfg = load_config(args.config)
    model = cfg.transition()
    if args.a is not None:
        model = TransitionModel(model.pbar, args.a, args.a)
    solver = POMDPSolver(cfg.ladder(), model, c_f=args.c_f, c_d=args.c_d,
                         resolution=args.grid, tol=args.tol, max_iter=args.max_iter).fit()
    report = solver.report()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report)
    sys.stdout.write(report)
    if args.output:
        write_policy_csv(solver.grid_, solver.value_, solver.policy_, args.output)
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    det = cfg.detector_config(alpha=args.alpha, threshold=args.threshold)
    scenario = ScenarioConfig(cfg.ladder(), cfg.transition(), horizon=args.horizon,
                              seed=args.seed)
    thresholds = [float(t) for t in args.thresholds.split(",")]
    report = evaluate(scenario, det, args.trials, thresholds)
    fh = _out(args.output)
    try:
        report.to_csv(fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    sys.stderr.write(report.summary())
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="beliefsum",
        description="Quickest detection of Poisson rate changes with the belief-sum rule",
    )
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def binning(sp):
        sp.add_argument("--bin-width", type=float, default=None,
                        help="aggregate counts in bins of this width")
        sp.add_argument("--bin-unit", choices=("seconds", "rows"), default="seconds")

    sp = sub.add_parser("learn", help="learn a rate ladder from a training count stream")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--n-normal", type=int, default=5)
    sp.add_argument("--multiplier", type=float, default=3.0)
    sp.add_argument("--floor", type=float, default=1e-3)
    sp.add_argument("--a-low", type=float, default=1.0)
    sp.add_argument("--a-high", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--report-sum", action="store_true")
    binning(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("detect", help="run the detector over count streams")
    sp.add_argument("--config", required=True, help="config file or reference ladder name")
    sp.add_argument("--input", required=True, help="stream CSV or directory of CSVs")
    sp.add_argument("--output", default=None, help="trajectory CSV (default stdout)")
    sp.add_argument("--sum-inputs", nargs="*", default=None,
                    help="further streams to bin and add to --input before detection")
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--mode", choices=("monitor", "stop"), default="monitor")
    binning(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("simulate", help="sample a count path from the model")
    sp.add_argument("--config", required=True)
    sp.add_argument("--output", default=None)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--day", action="store_true",
                    help="simulate a day that stays in the normal states outside the event")
    sp.add_argument("--event-start", type=int, default=None)
    sp.add_argument("--event-end", type=int, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="value iteration for the optimal stopping policy")
    sp.add_argument("--config", required=True)
    sp.add_argument("--c-f", type=float, default=1.0, help="false alarm cost")
    sp.add_argument("--c-d", type=float, default=0.05, help="delay cost per step")
    sp.add_argument("--a", type=float, default=None,
                    help="override a_low = a_high")
    sp.add_argument("--grid", type=int, default=200, help="grid resolution M")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--report", default=None, help="also write the report here")
    sp.add_argument("--output", default=None, help="policy CSV")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("eval", help="Monte Carlo delay / false alarm evaluation")
    sp.add_argument("--config", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--horizon", type=int, default=200)
    sp.add_argument("--thresholds", default="0.5,0.8,0.9,0.95,0.99")
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--threshold", type=float, default=None,
                    help=argparse.SUPPRESS)
    sp.add_argument("--output", default=None)
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, IngestError, InvalidParameterError,
            DegenerateObservationError, OSError) as e:
        print(f"beliefsum {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
