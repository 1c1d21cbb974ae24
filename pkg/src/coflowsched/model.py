"""Fabric, coflow and load-matrix types for the Big-Switch model.

Machines are numbered ``0..M-1``. Machine ``m`` owns ingress port ``m`` and
egress port ``M + m``, so a fabric always has ``2M`` ports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INGRESS = "ingress"
EGRESS = "egress"


class ModelError(ValueError):
    """Base class for invalid model input."""


class ValidationError(ModelError):
    """A value is out of its allowed range (negative volume, bad deadline...)."""


class StructuralError(ModelError):
    """A flow references a port that does not exist or has the wrong direction."""


@dataclass(frozen=True)
class Port:
    id: int
    direction: str
    capacity: float


@dataclass(frozen=True)
class Fabric:
    num_machines: int
    capacities: tuple[float, ...]

    def __post_init__(self):
        if self.num_machines < 1:
            raise ValidationError(f"num_machines must be positive, got {self.num_machines}")
        caps = tuple(float(c) for c in self.capacities)
        if len(caps) != 2 * self.num_machines:
            raise ValidationError(
                f"expected {2 * self.num_machines} port capacities, got {len(caps)}")
        if any(not c > 0 for c in caps):
            raise ValidationError("port capacities must be strictly positive")
        object.__setattr__(self, "capacities", caps)

    @classmethod
    def uniform(cls, num_machines: int, capacity: float = 1.0) -> "Fabric":
        return cls(num_machines, (capacity,) * (2 * num_machines))

    @property
    def num_ports(self) -> int:
        return 2 * self.num_machines

    @property
    def ports(self) -> list[Port]:
        M = self.num_machines
        return [Port(i, INGRESS if i < M else EGRESS, c) for i, c in enumerate(self.capacities)]

    def ingress(self, machine: int) -> int:
        return machine

    def egress(self, machine: int) -> int:
        return self.num_machines + machine

    def port_label(self, port: int) -> str:
        M = self.num_machines
        return f"in{port}" if port < M else f"out{port - M}"


@dataclass(frozen=True)
class Flow:
    coflow_id: int
    flow_id: int
    ingress_port: int
    egress_port: int
    volume: float

    def __post_init__(self):
        if not self.volume >= 0:
            raise ValidationError(
                f"flow {self.coflow_id}/{self.flow_id}: volume must be >= 0, got {self.volume}")


@dataclass(frozen=True)
class Coflow:
    id: int
    flows: tuple[Flow, ...]
    deadline: float
    release_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))
        if not self.flows:
            raise ValidationError(f"coflow {self.id} has no flows")
        if not self.deadline > 0:
            raise ValidationError(f"coflow {self.id}: deadline must be > 0, got {self.deadline}")
        if not self.release_time >= 0:
            raise ValidationError(f"coflow {self.id}: release_time must be >= 0")
        for f in self.flows:
            if f.coflow_id != self.id:
                raise ValidationError(f"flow {f.flow_id} belongs to coflow {f.coflow_id}, not {self.id}")

    @classmethod
    def from_pairs(cls, id: int, num_machines: int, pairs: Iterable[tuple[int, int, float]],
                   deadline: float, release_time: float = 0.0) -> "Coflow":
        """Build a coflow from ``(src_machine, dst_machine, volume)`` triples."""
        flows = tuple(Flow(id, j, src, num_machines + dst, float(vol))
                      for j, (src, dst, vol) in enumerate(pairs))
        return cls(id, flows, deadline, release_time)

    @property
    def absolute_deadline(self) -> float:
        return self.release_time + self.deadline

    @property
    def width(self) -> int:
        return len(self.flows)

    @property
    def total_volume(self) -> float:
        return sum(f.volume for f in self.flows)

    def with_deadline(self, deadline: float) -> "Coflow":
        return Coflow(self.id, self.flows, deadline, self.release_time)

    def released_at(self, release_time: float) -> "Coflow":
        return Coflow(self.id, self.flows, self.deadline, release_time)


def check_coflow(fabric: Fabric, coflow: Coflow) -> None:
    M = fabric.num_machines
    for f in coflow.flows:
        if not (0 <= f.ingress_port < M):
            raise StructuralError(
                f"coflow {coflow.id} flow {f.flow_id}: {f.ingress_port} is not an ingress port")
        if not (M <= f.egress_port < 2 * M):
            raise StructuralError(
                f"coflow {coflow.id} flow {f.flow_id}: {f.egress_port} is not an egress port")


@dataclass(frozen=True)
class LoadMatrix:
    """Per-port aggregate volumes and processing times, one column per coflow.

    Columns are sorted by coflow id, so "lowest column index" and "lowest coflow
    id" coincide for tie-breaking. ``deadlines`` holds the time budget each coflow
    has left, measured from the instant the matrix was built.
    """

    coflow_ids: tuple[int, ...]
    volume: np.ndarray
    p: np.ndarray
    deadlines: np.ndarray
    capacities: np.ndarray
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.volume, self.p, self.deadlines, self.capacities):
            arr.setflags(write=False)
        if not self._index:
            self._index.update({k: j for j, k in enumerate(self.coflow_ids)})

    @property
    def num_ports(self) -> int:
        return self.p.shape[0]

    @property
    def num_coflows(self) -> int:
        return self.p.shape[1]

    def column(self, coflow_id: int) -> int:
        return self._index[coflow_id]

    def columns(self, coflow_ids: Iterable[int]) -> list[int]:
        return [self._index[k] for k in coflow_ids]

    def deadline(self, coflow_id: int) -> float:
        return float(self.deadlines[self._index[coflow_id]])

    @classmethod
    def from_arrays(cls, coflow_ids: Sequence[int], volume, deadlines, capacities) -> "LoadMatrix":
        order = np.argsort(np.asarray(coflow_ids), kind="stable")
        ids = tuple(int(coflow_ids[j]) for j in order)
        volume = np.asarray(volume, dtype=float)[:, order]
        caps = np.asarray(capacities, dtype=float)
        return cls(ids, volume, volume / caps[:, None],
                   np.asarray(deadlines, dtype=float)[order], caps)


def build_load_matrix(fabric: Fabric, coflows: Sequence[Coflow], now: float = 0.0) -> LoadMatrix:
    """Aggregate flow volumes per (port, coflow).

    A flow loads both its ingress and its egress port. Deadlines are stored as
    the budget left at ``now``: ``release_time + deadline - now``.
    """
    coflows = sorted(coflows, key=lambda c: c.id)
    ids = [c.id for c in coflows]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate coflow ids")
    L, N = fabric.num_ports, len(coflows)
    volume = np.zeros((L, N))
    for j, c in enumerate(coflows):
        check_coflow(fabric, c)
        for f in c.flows:
            volume[f.ingress_port, j] += f.volume
            volume[f.egress_port, j] += f.volume
    deadlines = np.array([c.absolute_deadline - now for c in coflows], dtype=float)
    caps = np.asarray(fabric.capacities, dtype=float)
    return LoadMatrix(tuple(ids), volume, volume / caps[:, None], deadlines, caps)


def isolation_cct(fabric: Fabric, coflow: Coflow) -> float:
    """Completion time of ``coflow`` alone on an idle fabric (its most loaded port)."""
    check_coflow(fabric, coflow)
    load: dict[int, float] = {}
    for f in coflow.flows:
        load[f.ingress_port] = load.get(f.ingress_port, 0.0) + f.volume
        load[f.egress_port] = load.get(f.egress_port, 0.0) + f.volume
    return max((v / fabric.capacities[port] for port, v in load.items()), default=0.0)
