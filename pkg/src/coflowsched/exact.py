"""Exhaustive oracles for small instances.

``oracle_p2`` maximises the number of accepted coflows when each one is
judged by the port-cumulative completion bound (every predecessor's load on
every port, plus its own). ``oracle_sigma_car`` maximises the number of
on-time coflows under the real greedy allocator. Both refuse instances above
their size limit rather than running for hours.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Iterable, Sequence

import numpy as np

from .dcoflow import DEADLINE_TOL, Schedule, parallel_f
from .model import Coflow, Fabric, LoadMatrix
from .rate import simulate

P2_LIMIT = 9
SIGMA_LIMIT = 7


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OrderingVars:
    """Binary ordering variables for one (order, accepted set) pair.

    ``delta[a, b] = 1`` when coflow column a precedes column b, ``z`` marks
    accepted columns and ``y[a, b] = z[a] * delta[a, b]``.
    """

    coflow_ids: tuple[int, ...]
    delta: np.ndarray
    z: np.ndarray
    y: np.ndarray

    @classmethod
    def from_order(cls, coflow_ids: Sequence[int], order: Sequence[int],
                   accepted: Iterable[int]) -> "OrderingVars":
        ids = tuple(coflow_ids)
        if sorted(order) != sorted(ids):
            raise ValueError("order must be a permutation of coflow_ids")
        col = {k: i for i, k in enumerate(ids)}
        pos = np.empty(len(ids), dtype=int)
        for rank, k in enumerate(order):
            pos[col[k]] = rank
        delta = (pos[:, None] < pos[None, :]).astype(int)
        z = np.zeros(len(ids), dtype=int)
        z[[col[k] for k in accepted]] = 1
        return cls(ids, delta, z, z[:, None] * delta)

    def violations(self) -> list[str]:
        """Broken antisymmetry, transitivity or linearisation constraints."""
        d, n, out = self.delta, len(self.coflow_ids), []
        off = ~np.eye(n, dtype=bool)
        if np.any((d + d.T)[off] != 1):
            out.append("antisymmetry")
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    if len({a, b, c}) == 3 and d[a, b] + d[b, c] + d[c, a] > 2:
                        out.append(f"transitivity {a}->{b}->{c}")
        if np.any(self.y != self.z[:, None] * d):
            out.append("linearisation")
        return out


def _check_limit(n: int, limit: int, name: str) -> None:
    if n > limit:
        raise OracleLimitError(f"{name} enumerates at most {limit} coflows, got {n}")


def p2_feasible(load: LoadMatrix, order: Sequence[int]) -> bool:
    """Every coflow of ``order`` meets its deadline under the port-cumulative bound."""
    if not order:
        return True
    cols = load.columns(order)
    cum = np.cumsum(load.p[:, cols], axis=1).max(axis=0)
    return bool(np.all(cum <= load.deadlines[cols] + DEADLINE_TOL))


def oracle_p2(load: LoadMatrix, limit: int = P2_LIMIT) -> tuple[int, tuple[int, ...]]:
    """Largest set that has a feasible order, and one such order.

    If a set S is feasible, the coflow placed last sees the full load of S on
    every port, so S is feasible iff some member can absorb that load by its
    deadline while the rest is feasible on its own. A dynamic program over
    subsets therefore covers every (subset, order) pair.
    """
    n = load.num_coflows
    _check_limit(n, limit, "oracle_p2")
    p, T = load.p, load.deadlines
    size = 1 << n
    peak = np.zeros(size)
    port_load = np.zeros((size, load.num_ports))
    for mask in range(1, size):
        low = (mask & -mask).bit_length() - 1
        port_load[mask] = port_load[mask & (mask - 1)] + p[:, low]
        peak[mask] = port_load[mask].max()
    last = np.full(size, -1, dtype=int)
    feasible = np.zeros(size, dtype=bool)
    feasible[0] = True
    best = 0
    for mask in range(1, size):
        for j in range(n):
            bit = 1 << j
            if mask & bit and feasible[mask ^ bit] and peak[mask] <= T[j] + DEADLINE_TOL:
                feasible[mask], last[mask] = True, j
                break
        if feasible[mask] and bin(mask).count("1") > bin(best).count("1"):
            best = mask
    order: list[int] = []
    mask = best
    while mask:
        j = int(last[mask])
        order.append(load.coflow_ids[j])
        mask ^= 1 << j
    order.reverse()
    return len(order), tuple(order)


def oracle_p2_bruteforce(load: LoadMatrix, limit: int = 6) -> int:
    """Literal enumeration of every ordered subset; for cross-checking only."""
    _check_limit(load.num_coflows, limit, "oracle_p2_bruteforce")
    ids = load.coflow_ids
    for size in range(len(ids), 0, -1):
        for subset in permutations(ids, size):
            if p2_feasible(load, subset):
                return size
    return 0


def oracle_sigma_car(fabric: Fabric, coflows: Sequence[Coflow],
                     limit: int = SIGMA_LIMIT) -> tuple[int, Schedule]:
    """Most on-time coflows reachable by any priority order and admission set.

    Lower-priority coflows never take bandwidth from higher-priority ones, so
    admitting every coflow in some order loses nothing: the on-time coflows of
    any ordered subset keep their completion times when the rest is appended
    behind them. Enumerating full orders is therefore enough. The witness
    keeps the shortest prefix holding all on-time coflows and rejects the rest.
    """
    _check_limit(len(coflows), limit, "oracle_sigma_car")
    if not coflows:
        return 0, Schedule(())
    ids = sorted(c.id for c in coflows)
    best, witness = -1, None
    for perm in permutations(ids):
        res = simulate(fabric, Schedule(perm), coflows)
        count = res.on_time_count
        if count > best:
            best = count
            hits = [i for i, k in enumerate(perm) if res.on_time(k)]
            cut = hits[-1] + 1 if hits else 0
            witness = Schedule(perm[:cut], perm[cut:])
            if best == len(ids):
                break
    return best, witness


def oracle_sigma_car_subsets(fabric: Fabric, coflows: Sequence[Coflow], limit: int = 4) -> int:
    """Enumerate admission sets and their orders literally; for cross-checking only."""
    _check_limit(len(coflows), limit, "oracle_sigma_car_subsets")
    ids = sorted(c.id for c in coflows)
    best = 0
    for size in range(1, len(ids) + 1):
        for perm in permutations(ids, size):
            sched = Schedule(perm, set(ids) - set(perm))
            best = max(best, simulate(fabric, sched, coflows).on_time_count)
    return best


def check_parallel_inequality(load: LoadMatrix, S: Iterable[int], port: int) -> bool:
    """Does ``sum(p * T) >= f(S)`` hold on ``port`` for the coflows in ``S``?

    The right side is the sum of completion times on that port when S is
    served back to back, so any set meeting its deadlines there satisfies it.
    A slack of the deadline tolerance per unit of load absorbs rounding.
    """
    cols = load.columns(S)
    if not cols:
        return True
    p = load.p[port, cols]
    lhs = float(np.dot(p, load.deadlines[cols]))
    return lhs + DEADLINE_TOL * float(p.sum()) >= parallel_f(p) * (1 - 1e-12)
