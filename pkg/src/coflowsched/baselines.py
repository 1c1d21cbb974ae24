"""Reference schedulers: Moore-Hodgson, CS-MHA, Sincronia ordering and EDD."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dcoflow import DEADLINE_TOL, Schedule
from .model import Coflow, Fabric, LoadMatrix, build_load_matrix


@dataclass(frozen=True)
class PortJob:
    coflow_id: int
    p: float
    T: float


def moore_hodgson(jobs: Sequence[PortJob]) -> tuple[list[PortJob], set[int]]:
    """Maximize on-time jobs on one machine.

    Jobs are scanned in EDD order; whenever the running sum overshoots the
    current due date, the longest job kept so far is ejected. Returns the
    on-time jobs in EDD order and the ids of the ejected ones.
    """
    order = sorted(jobs, key=lambda j: (j.T, j.coflow_id))
    heap: list[tuple[float, int, int]] = []
    total = 0.0
    ejected: set[int] = set()
    for pos, job in enumerate(order):
        heapq.heappush(heap, (-job.p, -pos, job.coflow_id))
        total += job.p
        if total > job.T + DEADLINE_TOL:
            neg_p, _, cid = heapq.heappop(heap)
            total += neg_p
            ejected.add(cid)
    kept = [j for j in order if j.coflow_id not in ejected]
    return kept, ejected


def _edd(load: LoadMatrix, cols) -> list[int]:
    return sorted(cols, key=lambda j: (load.deadlines[j], j))


def _edd_feasible(load: LoadMatrix, cols) -> bool:
    """Every coflow of ``cols`` meets its port-cumulative estimate in EDD order."""
    order = _edd(load, cols)
    cum = np.cumsum(load.p[:, order], axis=1).max(axis=0)
    return bool(np.all(cum <= load.deadlines[order] + DEADLINE_TOL))


def _insertion_feasible(load: LoadMatrix, accepted: list[int], cand: np.ndarray) -> np.ndarray:
    """For each candidate alone, would ``accepted + [j]`` pass :func:`_edd_feasible`?"""
    T, p = load.deadlines, load.p
    order = np.array(_edd(load, accepted), dtype=int)
    L = load.num_ports
    if order.size:
        cum = np.cumsum(p[:, order], axis=1)
    else:
        cum = np.zeros((L, 0))
    # number of accepted coflows ahead of each candidate in EDD order
    To, Tc = T[order][:, None], T[cand][None, :]
    ahead = ((To < Tc) | ((To == Tc) & (order[:, None] < cand[None, :]))).sum(axis=0)
    before = np.hstack([np.zeros((L, 1)), cum])[:, ahead]
    own_ok = (before + p[:, cand]).max(axis=0) <= T[cand] + DEADLINE_TOL
    if not order.size:
        return own_ok
    # coflows ahead keep their estimate; those behind absorb the candidate's load
    base = cum.max(axis=0) <= T[order] + DEADLINE_TOL
    shifted = (cum[:, :, None] + p[:, None, cand]).max(axis=0) <= T[order][:, None] + DEADLINE_TOL
    behind = np.arange(order.size)[:, None] >= ahead[None, :]
    fine = np.where(behind, shifted, base[:, None])
    return own_ok & fine.all(axis=0)


def _bandwidth_need(load: LoadMatrix, accepted, cols) -> np.ndarray:
    """Rate each coflow needs at its worst port to finish by its deadline on top
    of the load already accepted there (inf when no time is left)."""
    used = load.p[:, accepted].sum(axis=1) if accepted else np.zeros(load.num_ports)
    slack = load.deadlines[cols][None, :] - used[:, None]
    vol = load.volume[:, cols]
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(vol > 0, np.where(slack > 0, vol / slack, np.inf), 0.0)
    return need.max(axis=0)


def _port_rejects(load: LoadMatrix) -> np.ndarray:
    p, T = load.p, load.deadlines
    rejected = np.zeros(load.num_coflows, dtype=bool)
    for port in range(load.num_ports):
        cols = np.flatnonzero(p[port] > 0)
        if cols.size:
            _, ejected = moore_hodgson([PortJob(j, v, t) for j, v, t in
                                        zip(cols.tolist(), p[port, cols].tolist(), T[cols].tolist())])
            rejected[list(ejected)] = True
    return rejected


def _tail_feasible(load: LoadMatrix, accepted: list[int], cand: np.ndarray) -> np.ndarray:
    """For each candidate, does it meet its deadline at every port it uses when
    served after all the load already accepted there?"""
    used = load.p[:, accepted].sum(axis=1) if accepted else np.zeros(load.num_ports)
    p = load.p[:, cand]
    fits = used[:, None] + p <= load.deadlines[cand][None, :] + DEADLINE_TOL
    return np.all(fits | (p <= 0), axis=0)


RESCUE_RULES = ("tail", "edd-insert")


def cs_mha_load(load: LoadMatrix, rescue: str = "tail") -> Schedule:
    """Per-port Moore-Hodgson admission, then a rescue pass, then EDD priority.

    A coflow is kept only if every port it uses keeps it. Rejected coflows are
    retried one at a time, smallest bottleneck bandwidth need first. With the
    default ``"tail"`` rule a retry succeeds when the coflow fits behind the
    accepted load at each of its ports. ``"edd-insert"`` instead requires the
    enlarged set to pass the port-cumulative estimate in EDD order, which also
    protects the coflows already accepted. Failed retries are final; the
    needs are recomputed after each success.
    """
    if rescue not in RESCUE_RULES:
        raise ValueError(f"unknown rescue rule {rescue!r}")
    check = _tail_feasible if rescue == "tail" else _insertion_feasible
    rejected = _port_rejects(load)
    accepted = [int(j) for j in np.flatnonzero(~rejected)]
    pending = np.flatnonzero(rejected)
    while pending.size:
        queue = pending[np.lexsort((pending, _bandwidth_need(load, accepted, pending)))]
        hits = np.flatnonzero(check(load, accepted, queue))
        if not hits.size:
            break
        first = int(hits[0])
        accepted.append(int(queue[first]))
        pending = queue[first + 1:]

    sigma = tuple(load.coflow_ids[j] for j in _edd(load, accepted))
    rej = frozenset(load.coflow_ids) - set(sigma)
    return Schedule(sigma, rej)


def sincronia_load(load: LoadMatrix) -> Schedule:
    """Bottleneck-select-scale-iterate with unit weights; admits everything."""
    N = load.num_coflows
    p = load.p
    active = np.ones(N, dtype=bool)
    weight = np.ones(N)
    sigma = [0] * N
    for n in range(N - 1, -1, -1):
        totals = p[:, active].sum(axis=1)
        lb = int(np.argmax(totals))
        cand = np.flatnonzero(active & (p[lb] > 0))
        if cand.size == 0:
            cand = np.flatnonzero(active)
            k = int(cand[0])
        else:
            k = int(cand[np.argmin(weight[cand] / p[lb, cand])])
            weight[cand] -= weight[k] * p[lb, cand] / p[lb, k]
        sigma[n] = load.coflow_ids[k]
        active[k] = False
    return Schedule(tuple(sigma))


def edd_load(load: LoadMatrix) -> Schedule:
    return Schedule(tuple(load.coflow_ids[j] for j in _edd(load, range(load.num_coflows))))


def cs_mha_order(fabric: Fabric, coflows: Sequence[Coflow]) -> Schedule:
    if not coflows:
        return Schedule(())
    return cs_mha_load(build_load_matrix(fabric, coflows))


def sincronia_order(fabric: Fabric, coflows: Sequence[Coflow]) -> Schedule:
    if not coflows:
        return Schedule(())
    return sincronia_load(build_load_matrix(fabric, coflows))


def edd_order(coflows: Sequence[Coflow]) -> Schedule:
    return Schedule(tuple(c.id for c in sorted(coflows, key=lambda c: (c.absolute_deadline, c.id))))
