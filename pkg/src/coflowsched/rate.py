"""Greedy sigma-order rate allocation and the flow-level fluid simulator.

At every epoch flows are served in priority order (coflow rank, then larger
remaining volume, then flow id). Each flow takes whatever is left on both of
its ports, so a flow only waits when a higher-priority flow holds one of its
ports. Time then jumps to the next flow completion.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TextIO

from .dcoflow import DEADLINE_TOL, Schedule
from .model import Coflow, Fabric, Flow, check_coflow

VOLUME_TOL = 1e-9


class SimulationError(RuntimeError):
    pass


@dataclass(eq=False)
class FlowState:
    flow: Flow
    remaining: float
    completion_time: float | None = None

    @property
    def done(self) -> bool:
        return self.completion_time is not None


@dataclass
class SimResult:
    """Completion time per coflow (``None`` if it never finished) and its deadline.

    Times and deadlines are absolute.
    """

    completion: dict[int, float | None]
    deadline: dict[int, float]
    accepted: frozenset[int]
    horizon: float = 0.0
    flow_completion: dict[tuple[int, int], float | None] = field(default_factory=dict)

    def on_time(self, coflow_id: int) -> bool:
        c = self.completion.get(coflow_id)
        return (coflow_id in self.accepted and c is not None
                and c <= self.deadline[coflow_id] + DEADLINE_TOL)

    @property
    def on_time_count(self) -> int:
        return sum(self.on_time(k) for k in self.deadline)

    def records(self) -> list[dict]:
        rows = []
        for k in sorted(self.deadline):
            c = self.completion.get(k)
            rows.append({"id": k, "accepted": int(k in self.accepted),
                         "c_k": "" if c is None else repr(c),
                         "T_k": repr(self.deadline[k]), "on_time": int(self.on_time(k))})
        return rows


def write_records_csv(result: SimResult, out: TextIO) -> None:
    w = csv.DictWriter(out, fieldnames=["id", "accepted", "c_k", "T_k", "on_time"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(result.records())


def _priority_key(ranks):
    return lambda s: (ranks[s.flow.coflow_id], -s.remaining, s.flow.flow_id)


def _greedy(caps: Sequence[float], ordered: Sequence[FlowState]) -> tuple[list[float], list[float]]:
    residual = list(caps)
    rates = [0.0] * len(ordered)
    for i, s in enumerate(ordered):
        a, b = s.flow.ingress_port, s.flow.egress_port
        r = residual[a] if residual[a] < residual[b] else residual[b]
        if r > 0:
            rates[i] = r
            residual[a] -= r
            residual[b] -= r
    return rates, residual


def allocate_rates(fabric: Fabric, sigma: Sequence[int] | Mapping[int, int],
                   active_flows: Sequence[FlowState], now: float = 0.0) -> list[float]:
    """Rate of each flow in ``active_flows`` (same order) under the greedy rule."""
    ranks = sigma if isinstance(sigma, Mapping) else {k: i for i, k in enumerate(sigma)}
    live = [s for s in active_flows if s.remaining > VOLUME_TOL]
    ordered = sorted(live, key=_priority_key(ranks))
    rates, _ = _greedy(fabric.capacities, ordered)
    by_state = {id(s): r for s, r in zip(ordered, rates)}
    return [by_state.get(id(s), 0.0) for s in active_flows]


EpochHook = Callable[[float, list, list, list], None]


def advance(caps: Sequence[float], states: Iterable[FlowState], ranks: Mapping[int, int],
            now: float, until: float = math.inf, on_epoch: EpochHook | None = None) -> float:
    """Serve ``states`` from ``now`` until ``until`` or until all of them finish.

    Flow states are updated in place; returns the time reached.
    """
    key = _priority_key(ranks)
    live = [s for s in states if s.remaining > VOLUME_TOL]
    while live and now < until:
        live.sort(key=key)
        rates, residual = _greedy(caps, live)
        if on_epoch is not None:
            on_epoch(now, live, rates, residual)
        step = math.inf
        for s, r in zip(live, rates):
            if r > 0 and s.remaining / r < step:
                step = s.remaining / r
        if step == math.inf:
            raise SimulationError(f"no flow can make progress at t={now}")
        step = min(step, until - now)
        t = now + step
        nxt = []
        for s, r in zip(live, rates):
            if r > 0:
                s.remaining -= r * step
                if s.remaining <= VOLUME_TOL:
                    s.remaining = 0.0
                    s.completion_time = t
                    continue
            nxt.append(s)
        live = nxt
        now = t
    return now


def simulate(fabric: Fabric, schedule: Schedule, coflows: Sequence[Coflow],
             on_epoch: EpochHook | None = None) -> SimResult:
    """Run the accepted coflows of ``schedule`` to completion.

    Rejected coflows never transmit. Release times are honoured only in the
    sense that all flows start at ``min(release)``; offline batches release at 0.
    """
    by_id = {c.id: c for c in coflows}
    unknown = set(schedule.sigma) - set(by_id)
    if unknown:
        raise ValueError(f"schedule references unknown coflows {sorted(unknown)}")
    start = min((c.release_time for c in coflows), default=0.0)
    ranks = schedule.rank()
    states: dict[int, list[FlowState]] = {}
    for k in schedule.sigma:
        check_coflow(fabric, by_id[k])
        states[k] = [FlowState(f, f.volume, None if f.volume > VOLUME_TOL else start)
                     for f in by_id[k].flows]
    end = advance(fabric.capacities, [s for ss in states.values() for s in ss], ranks,
                  start, math.inf, on_epoch)
    completion: dict[int, float | None] = {c.id: None for c in coflows}
    flow_completion = {}
    for k, ss in states.items():
        completion[k] = max(s.completion_time for s in ss)
        for s in ss:
            flow_completion[(k, s.flow.flow_id)] = s.completion_time
    return SimResult(completion, {c.id: c.absolute_deadline for c in coflows},
                     frozenset(schedule.sigma), end, flow_completion)


def car(result: SimResult, total_n: int | None = None) -> float:
    """Fraction of the offered coflows that were accepted and finished on time."""
    n = len(result.deadline) if total_n is None else total_n
    if n <= 0:
        raise ValueError("CAR is undefined for zero coflows")
    return result.on_time_count / n


def prediction_error(schedule: Schedule, result: SimResult) -> float:
    """Share of the accepted coflows that still miss their deadline once simulated."""
    if not schedule.sigma:
        raise ValueError("prediction error is undefined for an empty schedule")
    hits = sum(result.on_time(k) for k in schedule.sigma)
    return (len(schedule.sigma) - hits) / len(schedule.sigma)
