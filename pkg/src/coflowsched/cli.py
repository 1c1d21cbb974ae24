"""Command-line entry point: ``coflowsched <subcommand> [options]``.

CSV goes to stdout (or ``--out``); summaries and diagnostics go to stderr.
Exit status is 0 on success and 2 on bad input.
"""

from __future__ import annotations

import argparse
import contextlib
import math
import sys
from typing import Sequence

from . import schedulers
from .dcoflow import DcoflowConfig, dcoflow_order
from .exact import OracleLimitError
from .experiments import (ARRIVAL_RATE_PRESET, UPDATE_FREQ_PRESET, ExperimentSpec,
                          cars_by_scheduler, percentile_gains, run_rows, summarize, write_rows)
from .model import Fabric, ModelError
from .rate import car, simulate, write_records_csv
from .traffic import (ArrivalConfig, SyntheticConfig, TraceParseError, gen_arrivals, gen_synthetic,
                      m_machine_example, motivating_example, synthetic_template, write_jsonl)

FREQ_CHOICES = {"inf": math.inf, "0.5x": 0.5, "1x": 1.0, "2x": 2.0}


class UsageError(ValueError):
    pass


def _scheduler_list(text: str) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    for n in names:
        if n not in schedulers.NAMES:
            raise argparse.ArgumentTypeError(
                f"unknown scheduler {n!r}; choose from {', '.join(schedulers.NAMES)}")
    return names


def _batch(text: str):
    if "-" in text:
        lo, hi = (int(x) for x in text.split("-", 1))
        return lo, hi
    return int(text)


def _range(values: Sequence[float]) -> tuple[float, float]:
    return float(values[0]), float(values[1])


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _common(p: argparse.ArgumentParser, *, machines: int, coflows: int) -> None:
    p.add_argument("-M", "--num-machines", type=int, default=machines,
                   help=f"fabric size (default {machines})")
    p.add_argument("-N", "--num-coflows", type=int, default=coflows,
                   help=f"coflows per instance (default {coflows})")
    p.add_argument("--seed", type=int, default=0, help="base seed; instance i uses seed ^ i")
    p.add_argument("--gamma", type=float, default=0.9, help="port threshold for dcoflow-v2")
    p.add_argument("--out", default=None, help="CSV destination (default stdout)")


def _experiment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--schedulers", "--scheduler", type=_scheduler_list,
                   default=schedulers.NAMES, help="comma-separated scheduler names")
    p.add_argument("--instances", type=int, default=None, help="number of random instances")
    p.add_argument("--deadline-range", nargs=2, type=float, metavar=("A", "B"), default=None,
                   help="deadline = U[A, B] x isolation CCT")
    p.add_argument("--no-timing", action="store_true",
                   help="leave wall_time_ms blank so reruns are byte-identical")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--summary", action="store_true", help="print per-scheduler means to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coflowsched",
                                     description="Deadline-aware coflow scheduling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic batch or arrival stream as JSON lines")
    _common(g, machines=10, coflows=10)
    g.add_argument("--deadline-range", nargs=2, type=float, metavar=("A", "B"), default=(1.0, 2.0))
    g.add_argument("--lambda", dest="rate", type=float, default=None,
                   help="emit a Poisson arrival stream at this rate instead of an offline batch")
    g.add_argument("--batch", type=_batch, default=1, help="batch size: 1 or a range like 5-15")

    off = sub.add_parser("offline", help="offline CAR comparison on random instances")
    _common(off, machines=10, coflows=10)
    _experiment(off)
    off.add_argument("--trace", default=None,
                     help="sample coflows from a shuffle trace (or a .jsonl canonical trace)")
    off.add_argument("--gains-ref", default=None,
                     help="print percentile gains against this scheduler to stderr")

    on = sub.add_parser("online", help="online arrival experiments")
    _common(on, machines=10, coflows=2000)
    _experiment(on)
    on.add_argument("--lambda", dest="rates", type=float, nargs="+", default=[8.0],
                    help="arrival rates")
    on.add_argument("--update-freq", nargs="+", choices=list(FREQ_CHOICES), default=["inf"],
                    help="scheduler update frequency as a multiple of lambda")
    on.add_argument("--batch", type=_batch, default=1, help="batch size: 1 or a range like 5-15")
    on.add_argument("--preset", choices=["arrival-rate", "update-freq"], default="arrival-rate",
                    help="deadline range preset when --deadline-range is not given")

    orc = sub.add_parser("oracle", help="heuristics against the exact oracles on small instances")
    _common(orc, machines=3, coflows=5)
    _experiment(orc)

    fig = sub.add_parser("example-fig1", help="the wide-versus-small motivating instance")
    fig.add_argument("-M", "--num-machines", type=int, default=4)
    fig.add_argument("--eps", type=float, default=0.1)
    fig.add_argument("--schedulers", "--scheduler", type=_scheduler_list,
                     default=("dcoflow-v1", "cs-mha"))
    fig.add_argument("--gamma", type=float, default=0.9)
    fig.add_argument("--trace", action="store_true", help="print the dcoflow round log to stderr")
    fig.add_argument("--out", default=None)
    return parser


def _cmd_gen(args) -> None:
    fabric = Fabric.uniform(args.num_machines)
    cfg = SyntheticConfig(args.num_machines, args.num_coflows,
                          deadline_factor_range=_range(args.deadline_range), rng_seed=args.seed)
    if args.rate is None:
        coflows = gen_synthetic(cfg, fabric)
    else:
        stream = gen_arrivals(ArrivalConfig(args.rate, args.num_coflows, args.batch, args.seed),
                              synthetic_template(cfg, fabric))
        coflows = [c for _, c in stream]
    with _output(args.out) as out:
        write_jsonl(coflows, out, args.num_machines)


def _spec(args, mode: str, **extra) -> ExperimentSpec:
    dr = extra.pop("deadline_factor_range", None) or (1.0, 2.0)
    if args.deadline_range is not None:
        dr = _range(args.deadline_range)
    return ExperimentSpec(mode=mode, num_machines=args.num_machines, num_coflows=args.num_coflows,
                          schedulers=tuple(args.schedulers), instances=args.instances,
                          deadline_factor_range=dr, gamma=args.gamma, seed=args.seed,
                          timing=not args.no_timing, workers=args.workers, **extra)


def _report(rows, mode: str, args) -> None:
    with _output(args.out) as out:
        write_rows(rows, out, mode)
    if args.summary:
        for entry in summarize(rows, mode):
            print(" ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in entry.items()), file=sys.stderr)


def _cmd_offline(args) -> None:
    spec = _spec(args, "offline", trace=args.trace)
    rows = run_rows(spec)
    _report(rows, "offline", args)
    if args.gains_ref:
        if args.gains_ref not in spec.schedulers:
            raise UsageError(f"--gains-ref {args.gains_ref} is not among the schedulers")
        gains = percentile_gains(cars_by_scheduler(rows), args.gains_ref)
        for name, g in gains.items():
            pct = " ".join(f"p{q}={v:+.3f}" for q, v in g.percentiles.items())
            print(f"gain {name} vs {args.gains_ref}: {pct} excluded={g.excluded}", file=sys.stderr)


def _cmd_online(args) -> None:
    preset = ARRIVAL_RATE_PRESET if args.preset == "arrival-rate" else UPDATE_FREQ_PRESET
    spec = _spec(args, "online", deadline_factor_range=preset, arrival_rates=tuple(args.rates),
                 update_freqs=tuple(FREQ_CHOICES[f] for f in args.update_freq), batch=args.batch)
    _report(run_rows(spec), "online", args)


def _cmd_oracle(args) -> None:
    _report(run_rows(_spec(args, "oracle")), "oracle", args)


def _cmd_fig1(args) -> None:
    if args.num_machines == 4:
        fabric, coflows = motivating_example(args.eps)
    else:
        fabric, coflows = m_machine_example(args.num_machines, args.eps)
    with _output(args.out) as out:
        for name in args.schedulers:
            sched = schedulers.schedule(name, fabric, coflows, args.gamma)
            res = simulate(fabric, sched, coflows)
            out.write(f"# scheduler={name} sigma={list(sched.sigma)} "
                      f"rejected={sorted(sched.rejected)} car={car(res):.6g}\n")
            write_records_csv(res, out)
    if args.trace:
        for variant in ("v1", "v2"):
            rounds = []
            dcoflow_order(fabric, coflows, DcoflowConfig(variant, args.gamma), trace=rounds)
            for r in rounds:
                scores = ", ".join(f"C{k}: {v:.4g}" for k, v in r.scores.items())
                print(f"{variant} pos={r.position} bottleneck={fabric.port_label(r.bottleneck)} "
                      f"{r.action} C{r.chosen} scores {{{scores}}}", file=sys.stderr)


COMMANDS = {"gen": _cmd_gen, "offline": _cmd_offline, "online": _cmd_online,
            "oracle": _cmd_oracle, "example-fig1": _cmd_fig1}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ModelError, TraceParseError, OracleLimitError, UsageError, KeyError, ValueError,
            OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"coflowsched: error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
