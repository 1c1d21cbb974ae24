"""Online admission and scheduling over an arrival stream.

At each update instant the scheduler is re-run on every coflow still worth
considering: accepted ones that have not finished, rejected ones whose
deadline has not passed, and new arrivals. It sees remaining volumes and the
time left until each absolute deadline. Between updates the fabric runs the
greedy allocator under the current order; rejected and not-yet-considered
coflows stay idle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Sequence

import numpy as np

from . import schedulers
from .model import Coflow, Fabric, Flow, LoadMatrix, check_coflow
from .rate import VOLUME_TOL, FlowState, SimResult, advance

WAITING, ACCEPTED, REJECTED, DONE, DROPPED = "waiting", "accepted", "rejected", "done", "dropped"
_OPEN = (WAITING, ACCEPTED, REJECTED)


@dataclass(frozen=True)
class OnlineConfig:
    update_mode: str = "per_arrival"
    period: float | None = None
    scheduler: str = "dcoflow-v1"
    gamma: float = 0.9
    horizon: float = math.inf
    rng_seed: int | None = None

    def __post_init__(self):
        if self.update_mode not in ("per_arrival", "periodic"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")
        if self.update_mode == "periodic" and not (self.period and self.period > 0):
            raise ValueError("periodic updates need a positive period")
        schedulers.get(self.scheduler, self.gamma)

    @classmethod
    def periodic(cls, frequency: float, **kw) -> "OnlineConfig":
        return cls("periodic", 1.0 / frequency, **kw)


class OnlineState:
    """Mutable bookkeeping for one online run."""

    def __init__(self, fabric: Fabric):
        self.fabric = fabric
        self.coflows: dict[int, Coflow] = {}
        self.flows: dict[int, list[FlowState]] = {}
        self.status: dict[int, str] = {}
        self.completion: dict[int, float | None] = {}
        self.ever_accepted: set[int] = set()
        self.open: set[int] = set()
        self.ranks: dict[int, int] = {}
        self.updates = 0

    def arrive(self, c: Coflow) -> None:
        check_coflow(self.fabric, c)
        if c.id in self.coflows:
            raise ValueError(f"duplicate coflow id {c.id}")
        self.coflows[c.id] = c
        self.completion[c.id] = None
        states = [FlowState(f, f.volume) for f in c.flows]
        for s in states:
            if s.remaining <= VOLUME_TOL:
                s.remaining, s.completion_time = 0.0, c.release_time
        self.flows[c.id] = states
        if all(s.done for s in states):
            self.status[c.id] = DONE
            self.completion[c.id] = c.release_time
            self.ever_accepted.add(c.id)
        else:
            self.status[c.id] = WAITING
            self.open.add(c.id)

    def transmitting(self) -> list[FlowState]:
        return [s for k in self.ranks for s in self.flows[k] if not s.done]

    def collect(self, served: Iterable[FlowState]) -> None:
        for k in {s.flow.coflow_id for s in served if s.done}:
            if self.status[k] == ACCEPTED and all(s.done for s in self.flows[k]):
                self.status[k] = DONE
                self.completion[k] = max(s.completion_time for s in self.flows[k])
                self.open.discard(k)
                self.ranks.pop(k, None)

    def expire(self, now: float) -> None:
        for k in [k for k in self.open if self.coflows[k].absolute_deadline <= now]:
            self.status[k] = DROPPED
            self.open.discard(k)
            self.ranks.pop(k, None)

    def has_candidates(self, now: float) -> bool:
        return any(self.coflows[k].absolute_deadline > now for k in self.open)

    def residual_load(self, ids: Sequence[int], now: float) -> LoadMatrix:
        L = self.fabric.num_ports
        ids = sorted(ids)
        rows, cols, vals = [], [], []
        for j, k in enumerate(ids):
            for s in self.flows[k]:
                if s.remaining > 0:
                    rows += (s.flow.ingress_port, s.flow.egress_port)
                    cols += (j, j)
                    vals += (s.remaining, s.remaining)
        volume = np.zeros((L, len(ids)))
        np.add.at(volume, (rows, cols), vals)
        caps = np.asarray(self.fabric.capacities)
        deadlines = np.array([self.coflows[k].absolute_deadline - now for k in ids])
        return LoadMatrix(tuple(ids), volume, volume / caps[:, None], deadlines, caps)

    def result(self, horizon: float) -> SimResult:
        return SimResult(dict(self.completion),
                         {k: c.absolute_deadline for k, c in self.coflows.items()},
                         frozenset(self.ever_accepted), horizon)


def remaining_snapshot(state: OnlineState, now: float) -> list[Coflow]:
    """Arrived, unfinished, non-dropped coflows with their residual volumes.

    Release times and deadlines are kept as they were, so absolute deadlines
    are unchanged. Finished flows are left out; coflows with nothing left are
    excluded.
    """
    out = []
    for k in sorted(state.open):
        live = [s for s in state.flows[k] if s.remaining > 0]
        if not live:
            continue
        c = state.coflows[k]
        flows = tuple(Flow(k, s.flow.flow_id, s.flow.ingress_port, s.flow.egress_port, s.remaining)
                      for s in live)
        out.append(Coflow(k, flows, c.deadline, c.release_time))
    return out


def _update(state: OnlineState, now: float, scheduler) -> None:
    state.expire(now)
    ids = sorted(state.open)
    state.updates += 1
    if not ids:
        state.ranks = {}
        return
    sched = scheduler(state.residual_load(ids, now))
    for k in sched.sigma:
        state.status[k] = ACCEPTED
        state.ever_accepted.add(k)
    for k in sched.rejected:
        state.status[k] = REJECTED
    state.ranks = sched.rank()


def run_online(fabric: Fabric, arrivals: Sequence[tuple[float, Coflow]],
               cfg: OnlineConfig = OnlineConfig()) -> SimResult:
    """Replay ``arrivals`` (sorted by release time) and return per-coflow outcomes.

    Every arrival counts towards the CAR denominator.
    """
    times = [t for t, _ in arrivals]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("arrival stream must be sorted by release time")
    batches = [(t, [c.released_at(t) for _, c in grp])
               for t, grp in groupby(arrivals, key=lambda a: a[0])]
    scheduler = schedulers.get(cfg.scheduler, cfg.gamma)
    periodic = cfg.update_mode == "periodic"
    caps = fabric.capacities
    state = OnlineState(fabric)
    now, i, tick = 0.0, 0, 0

    while now < cfg.horizon:
        next_arrival = batches[i][0] if i < len(batches) else math.inf
        next_event = min(next_arrival, tick * cfg.period) if periodic else next_arrival
        next_event = min(next_event, cfg.horizon)
        live = state.transmitting()
        if live:
            now = advance(caps, live, state.ranks, now, next_event)
            state.collect(live)
            if now < next_event:
                continue
        else:
            idle = i >= len(batches) and (not periodic or not state.has_candidates(now))
            if idle or next_event == math.inf:
                break
            now = next_event
        if now >= cfg.horizon:
            break

        arrived = False
        while i < len(batches) and batches[i][0] <= now:
            for c in batches[i][1]:
                state.arrive(c)
            i += 1
            arrived = True
        if periodic:
            if now >= tick * cfg.period:
                _update(state, now, scheduler)
                tick = max(tick + 1, math.floor(now / cfg.period) + 1)
        elif arrived:
            _update(state, now, scheduler)

    return state.result(now)
