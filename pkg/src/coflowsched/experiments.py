"""Batch experiments: offline CAR comparisons, online sweeps and oracle gaps.

Every instance is generated from ``seed ^ instance_id`` so rows can be
recomputed one at a time, and rows are sorted before they are written.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import exact, schedulers
from .dcoflow import warm_up
from .model import Coflow, Fabric, ValidationError, build_load_matrix
from .online import OnlineConfig, run_online
from .rate import car, prediction_error, simulate
from .traffic import (ArrivalConfig, SyntheticConfig, gen_arrivals, gen_synthetic, import_trace,
                      read_jsonl, sample_coflows, synthetic_template)

MODES = ("offline", "online", "oracle")
DEFAULT_INSTANCES = {"offline": 100, "online": 40, "oracle": 20}

# Deadline presets for the two online studies.
ARRIVAL_RATE_PRESET = (1.0, 4.0)
UPDATE_FREQ_PRESET = (1.0, 2.0)

OFFLINE_FIELDS = ["instance_id", "scheduler", "M", "N", "seed", "car", "prediction_error",
                  "wall_time_ms"]
ONLINE_FIELDS = ["instance_id", "scheduler", "M", "N", "seed", "lambda", "update_freq", "car",
                 "wall_time_ms"]
ORACLE_FIELDS = ["instance_id", "scheduler", "M", "N", "seed", "on_time", "sigma_opt", "p2_bound",
                 "car"]


@dataclass(frozen=True)
class ExperimentSpec:
    mode: str = "offline"
    num_machines: int = 10
    num_coflows: int = 10
    schedulers: tuple[str, ...] = schedulers.NAMES
    instances: int | None = None
    trace: str | None = None
    deadline_factor_range: tuple[float, float] = (1.0, 2.0)
    arrival_rates: tuple[float, ...] = (8.0,)
    # multiples of the arrival rate; math.inf means an update at every arrival
    update_freqs: tuple[float, ...] = (math.inf,)
    batch: int | tuple[int, int] = 1
    gamma: float = 0.9
    seed: int = 0
    timing: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.instances is None:
            object.__setattr__(self, "instances", DEFAULT_INSTANCES[self.mode])
        if self.instances < 1:
            raise ValidationError("instance count must be >= 1")
        if self.num_coflows < 0:
            raise ValidationError("num_coflows must be >= 0")
        if not self.schedulers:
            raise ValidationError("at least one scheduler is required")
        for name in self.schedulers:
            schedulers.get(name, self.gamma)
        if self.trace is not None and not Path(self.trace).is_file():
            raise ValidationError(f"trace file {self.trace} does not exist")
        if any(not r > 0 for r in self.arrival_rates):
            raise ValidationError("arrival rates must be > 0")
        if any(not f > 0 for f in self.update_freqs):
            raise ValidationError("update frequencies must be > 0")

    def instance_seed(self, instance_id: int) -> int:
        return self.seed ^ instance_id


def offline_instance(spec: ExperimentSpec, instance_id: int) -> tuple[Fabric, list[Coflow]]:
    M, seed = spec.num_machines, spec.instance_seed(instance_id)
    fabric = Fabric.uniform(M)
    if spec.trace is None:
        cfg = SyntheticConfig(M, spec.num_coflows, deadline_factor_range=spec.deadline_factor_range,
                              rng_seed=seed)
        return fabric, gen_synthetic(cfg, fabric)
    if spec.trace.endswith(".jsonl"):
        pool = [c.released_at(0.0) for c in
                read_jsonl(spec.trace, fabric, spec.deadline_factor_range, rng_seed=seed)]
    else:
        pool = import_trace(spec.trace, M, spec.deadline_factor_range, rng_seed=seed)
    return fabric, sample_coflows(pool, spec.num_coflows, rng_seed=seed)


def online_instance(spec: ExperimentSpec, instance_id: int, rate: float):
    """Arrival stream for one instance; the coflows do not depend on ``rate``."""
    M, seed = spec.num_machines, spec.instance_seed(instance_id)
    fabric = Fabric.uniform(M)
    template = synthetic_template(
        SyntheticConfig(M, 0, deadline_factor_range=spec.deadline_factor_range, rng_seed=seed), fabric)
    stream = gen_arrivals(ArrivalConfig(rate, spec.num_coflows, spec.batch, rng_seed=seed), template)
    return fabric, stream


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, (time.perf_counter() - t0) * 1000.0


def _fmt_ms(spec: ExperimentSpec, ms: float) -> str:
    return f"{ms:.3f}" if spec.timing else ""


def _offline_rows(spec: ExperimentSpec, instance_id: int) -> list[dict]:
    fabric, coflows = offline_instance(spec, instance_id)
    rows = []
    for name in spec.schedulers:
        c, pe, ms = None, None, 0.0
        if coflows:
            fn = schedulers.get(name, spec.gamma)
            sched, ms = _timed(fn, build_load_matrix(fabric, coflows))
            res = simulate(fabric, sched, coflows)
            c = car(res)
            pe = prediction_error(sched, res) if sched.sigma else None
        rows.append({"instance_id": instance_id, "scheduler": name, "M": spec.num_machines,
                     "N": len(coflows), "seed": spec.instance_seed(instance_id),
                     "car": "" if c is None else repr(c),
                     "prediction_error": "" if pe is None else repr(pe),
                     "wall_time_ms": _fmt_ms(spec, ms)})
    return rows


def _freq_label(f: float) -> str:
    return "inf" if math.isinf(f) else f"{f:g}x"


def _online_rows(spec: ExperimentSpec, instance_id: int) -> list[dict]:
    rows = []
    for rate in spec.arrival_rates:
        fabric, stream = online_instance(spec, instance_id, rate)
        for f in spec.update_freqs:
            for name in spec.schedulers:
                if math.isinf(f):
                    cfg = OnlineConfig(scheduler=name, gamma=spec.gamma)
                else:
                    cfg = OnlineConfig.periodic(f * rate, scheduler=name, gamma=spec.gamma)
                res, ms = _timed(run_online, fabric, stream, cfg)
                rows.append({"instance_id": instance_id, "scheduler": name,
                             "M": spec.num_machines, "N": len(stream),
                             "seed": spec.instance_seed(instance_id), "lambda": f"{rate:g}",
                             "update_freq": _freq_label(f),
                             "car": repr(car(res, len(stream))) if stream else "",
                             "wall_time_ms": _fmt_ms(spec, ms)})
    return rows


def _oracle_rows(spec: ExperimentSpec, instance_id: int) -> list[dict]:
    fabric, coflows = offline_instance(spec, instance_id)
    p2, _ = exact.oracle_p2(build_load_matrix(fabric, coflows)) if coflows else (0, ())
    best, _ = exact.oracle_sigma_car(fabric, coflows)
    rows = []
    for name in spec.schedulers:
        on_time = (simulate(fabric, schedulers.schedule(name, fabric, coflows, spec.gamma), coflows)
                   .on_time_count if coflows else 0)
        rows.append({"instance_id": instance_id, "scheduler": name, "M": spec.num_machines,
                     "N": len(coflows), "seed": spec.instance_seed(instance_id),
                     "on_time": on_time, "sigma_opt": best, "p2_bound": p2,
                     "car": repr(on_time / len(coflows)) if coflows else ""})
    return rows


_RUNNERS = {"offline": _offline_rows, "online": _online_rows, "oracle": _oracle_rows}


def _run_one(args):
    spec, instance_id = args
    return _RUNNERS[spec.mode](spec, instance_id)


def run_rows(spec: ExperimentSpec) -> list[dict]:
    warm_up()
    jobs = [(spec, i) for i in range(spec.instances)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(_run_one, jobs))
    else:
        chunks = [_run_one(job) for job in jobs]
    rows = [r for chunk in chunks for r in chunk]
    order = {name: i for i, name in enumerate(spec.schedulers)}
    rows.sort(key=lambda r: (float(r.get("lambda", 0)), r.get("update_freq", ""),
                             r["instance_id"], order[r["scheduler"]]))
    return rows


def fields_for(mode: str) -> list[str]:
    return {"offline": OFFLINE_FIELDS, "online": ONLINE_FIELDS, "oracle": ORACLE_FIELDS}[mode]


def write_rows(rows: Iterable[dict], out: TextIO, mode: str) -> None:
    w = csv.DictWriter(out, fieldnames=fields_for(mode), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def _floats(rows, key):
    return [float(r[key]) for r in rows if r[key] != ""]


def summarize(rows: Sequence[dict], mode: str) -> list[dict]:
    """Per-scheduler (and per lambda / update frequency online) means of the row values."""
    keys = ["scheduler"] + (["lambda", "update_freq"] if mode == "online" else [])
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, grp in groups.items():
        cars = _floats(grp, "car")
        entry = dict(zip(keys, key))
        entry["instances"] = len(grp)
        entry["mean_car"] = float(np.mean(cars)) if cars else math.nan
        if mode == "offline":
            pes = _floats(grp, "prediction_error")
            entry["mean_prediction_error"] = float(np.mean(pes)) if pes else math.nan
        if mode == "oracle":
            entry["mean_on_time"] = float(np.mean([int(r["on_time"]) for r in grp]))
            entry["mean_sigma_opt"] = float(np.mean([int(r["sigma_opt"]) for r in grp]))
            entry["mean_p2_bound"] = float(np.mean([int(r["p2_bound"]) for r in grp]))
        out.append(entry)
    return out


def run_offline_experiment(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    if spec.mode != "offline":
        spec = replace(spec, mode="offline", instances=spec.instances)
    rows = run_rows(spec)
    return rows, summarize(rows, "offline")


def run_online_experiment(spec: ExperimentSpec) -> tuple[list[dict], list[dict]]:
    if spec.mode != "online":
        spec = replace(spec, mode="online", instances=spec.instances)
    rows = run_rows(spec)
    return rows, summarize(rows, "online")


PERCENTILES = (1, 10, 50, 90, 99)


@dataclass
class GainSummary:
    percentiles: dict[int, float]
    excluded: int
    gains: list[float] = field(default_factory=list)


def percentile_gains(per_instance_cars: dict[str, Sequence[float]], reference: str,
                     percentiles: Sequence[int] = PERCENTILES) -> dict[str, GainSummary]:
    """Gain ``car / car_reference - 1`` per instance, then its empirical percentiles.

    Instances where the reference CAR is zero have no defined gain; they are
    left out and counted in ``excluded``.
    """
    ref = np.asarray(per_instance_cars[reference], dtype=float)
    out = {}
    for name, cars in per_instance_cars.items():
        cars = np.asarray(cars, dtype=float)
        if cars.shape != ref.shape:
            raise ValueError(f"{name} has {cars.size} instances, reference has {ref.size}")
        ok = ref > 0
        gains = cars[ok] / ref[ok] - 1.0
        pct = ({int(q): float(np.percentile(gains, q)) for q in percentiles} if gains.size
               else {int(q): math.nan for q in percentiles})
        out[name] = GainSummary(pct, int((~ok).sum()), gains.tolist())
    return out


def cars_by_scheduler(rows: Sequence[dict]) -> dict[str, list[float]]:
    """Per-scheduler CAR lists in instance order (rows with no CAR count as 0)."""
    out: dict[str, list[float]] = {}
    for r in sorted(rows, key=lambda r: r["instance_id"]):
        out.setdefault(r["scheduler"], []).append(float(r["car"]) if r["car"] != "" else 0.0)
    return out
