"""Workload generation: synthetic batches, Poisson arrival streams, shuffle traces.

Canonical trace files are JSON lines, one coflow per line::

    {"id": 3, "release_time": 0.0, "deadline": 1.7,
     "flows": [{"src_machine": 0, "dst_machine": 2, "volume": 1.0}, ...]}

``deadline`` is relative to ``release_time`` and may be omitted, in which case
one is drawn from the deadline factor range when the file is read.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .model import Coflow, Fabric, ValidationError, isolation_cct


class TraceParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class SyntheticConfig:
    num_machines: int
    num_coflows: int
    class1_prob: float = 0.6
    type2_width_range: tuple[int, int] | None = None
    class1_volume_mean: float = 1.0
    class1_volume_std: float = 0.2
    class_volume_ratio: float = 0.8
    deadline_factor_range: tuple[float, float] = (1.0, 2.0)
    rng_seed: int = 0

    def __post_init__(self):
        M = self.num_machines
        if M < 2:
            raise ValidationError("synthetic traffic needs at least 2 machines")
        if self.num_coflows < 0:
            raise ValidationError("num_coflows must be >= 0")
        if not 0 <= self.class1_prob <= 1:
            raise ValidationError("class1_prob must lie in [0, 1]")
        if self.type2_width_range is None:
            object.__setattr__(self, "type2_width_range", (math.ceil(2 * M / 3), M))
        lo, hi = self.type2_width_range
        if not 1 <= lo <= hi <= M:
            raise ValidationError(f"bad type-2 width range {self.type2_width_range}")
        a, b = self.deadline_factor_range
        if not 1 <= a <= b:
            raise ValidationError(f"deadline factor range must satisfy 1 <= a <= b, got {(a, b)}")
        if self.class1_volume_std < 0 or self.class1_volume_mean <= 0:
            raise ValidationError("volume mean must be > 0 and stddev >= 0")
        if not self.class_volume_ratio > 0:
            raise ValidationError("class_volume_ratio must be > 0")

    @property
    def class2_volume(self) -> tuple[float, float]:
        r = self.class_volume_ratio
        return self.class1_volume_mean / r, self.class1_volume_std / r


@dataclass(frozen=True)
class ArrivalConfig:
    rate: float
    total_coflows: int
    batch_size: int | tuple[int, int] = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValidationError("arrival rate must be > 0")
        lo, hi = self.batch_bounds
        if not 1 <= lo <= hi:
            raise ValidationError(f"bad batch size {self.batch_size}")

    @property
    def batch_bounds(self) -> tuple[int, int]:
        b = self.batch_size
        return (b, b) if isinstance(b, int) else (int(b[0]), int(b[1]))

    @property
    def mean_batch(self) -> float:
        lo, hi = self.batch_bounds
        return (lo + hi) / 2


def _positive_normal(rng: np.random.Generator, mean: float, std: float) -> float:
    if std == 0:
        return mean
    while True:
        x = rng.normal(mean, std)
        if x > 0:
            return float(x)


def _deadline(fabric: Fabric, coflow: Coflow, factor: float) -> float:
    cct0 = isolation_cct(fabric, coflow)
    return factor * cct0 if cct0 > 0 else factor


def synthetic_coflow(cfg: SyntheticConfig, fabric: Fabric, rng: np.random.Generator,
                     coflow_id: int) -> Coflow:
    M = cfg.num_machines
    if rng.random() < cfg.class1_prob:
        src, dst = (int(x) for x in rng.integers(0, M, size=2))
        pairs = [(src, dst, _positive_normal(rng, cfg.class1_volume_mean, cfg.class1_volume_std))]
    else:
        lo, hi = cfg.type2_width_range
        width = int(rng.integers(lo, hi + 1))
        machines = rng.choice(M, size=width, replace=False)
        dsts = rng.permutation(machines)
        mean, std = cfg.class2_volume
        pairs = [(int(s), int(d), _positive_normal(rng, mean, std)) for s, d in zip(machines, dsts)]
    c = Coflow.from_pairs(coflow_id, M, pairs, deadline=1.0)
    a, b = cfg.deadline_factor_range
    return c.with_deadline(_deadline(fabric, c, float(rng.uniform(a, b))))


def gen_synthetic(cfg: SyntheticConfig, fabric: Fabric) -> list[Coflow]:
    """Offline batch of ``cfg.num_coflows`` coflows, all released at 0."""
    if fabric.num_machines != cfg.num_machines:
        raise ValidationError("fabric size does not match the config")
    rng = np.random.default_rng(cfg.rng_seed)
    return [synthetic_coflow(cfg, fabric, rng, k) for k in range(cfg.num_coflows)]


BatchTemplate = Callable[[int, np.random.Generator, int], list[Coflow]]


def synthetic_template(cfg: SyntheticConfig, fabric: Fabric) -> BatchTemplate:
    """Batch generator for :func:`gen_arrivals` drawing coflows like :func:`gen_synthetic`."""
    def make(n: int, rng: np.random.Generator, first_id: int) -> list[Coflow]:
        return [synthetic_coflow(cfg, fabric, rng, first_id + i) for i in range(n)]
    return make


def gen_arrivals(cfg: ArrivalConfig, batch_template: BatchTemplate) -> list[tuple[float, Coflow]]:
    """Poisson stream of ``cfg.total_coflows`` coflows.

    Batches arrive at rate ``rate / mean_batch`` so the coflow rate stays
    ``rate``; every coflow of a batch shares its release time.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    lo, hi = cfg.batch_bounds
    batch_rate = cfg.rate / cfg.mean_batch
    out: list[tuple[float, Coflow]] = []
    t = 0.0
    while len(out) < cfg.total_coflows:
        t += float(rng.exponential(1.0 / batch_rate))
        size = int(rng.integers(lo, hi + 1)) if hi > lo else lo
        size = min(size, cfg.total_coflows - len(out))
        for c in batch_template(size, rng, len(out)):
            out.append((t, c.released_at(t)))
    return out


def _wide_vs_small(M: int, n_small: int, eps: float) -> tuple[Fabric, list[Coflow]]:
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    fabric = Fabric.uniform(M)
    wide = Coflow.from_pairs(1, M, [(m, m, 1.0) for m in range(M)], deadline=1.0)
    small = [Coflow.from_pairs(2 + m, M, [(m, (m + 1) % M, 1.0 + eps)], deadline=2.0)
             for m in range(n_small)]
    return fabric, [wide] + small


def motivating_example(eps: float = 0.1) -> tuple[Fabric, list[Coflow]]:
    """Four machines, five coflows.

    Coflow 1 sends one unit from every machine to itself (deadline 1); coflows
    2..5 each send ``1 + eps`` from machine ``m`` to ``m + 1 mod 4`` (deadline 2).
    Every loaded port carries exactly ``2 + eps``.
    """
    return _wide_vs_small(4, 4, eps)


def m_machine_example(num_machines: int, eps: float = 0.1) -> tuple[Fabric, list[Coflow]]:
    """The same wide coflow plus ``M - 1`` single-flow coflows on machines 0..M-2."""
    if num_machines < 2:
        raise ValidationError("need at least 2 machines")
    return _wide_vs_small(num_machines, num_machines - 1, eps)


def coflow_to_record(c: Coflow, num_machines: int) -> dict:
    return {
        "id": c.id,
        "release_time": c.release_time,
        "deadline": c.deadline,
        "flows": [{"src_machine": f.ingress_port, "dst_machine": f.egress_port - num_machines,
                   "volume": f.volume} for f in c.flows],
    }


def write_jsonl(coflows: Iterable[Coflow], out: TextIO, num_machines: int) -> None:
    for c in coflows:
        out.write(json.dumps(coflow_to_record(c, num_machines), sort_keys=True) + "\n")


def read_jsonl(source: str | Path | TextIO, fabric: Fabric,
               deadline_factor_range: tuple[float, float] = (1.0, 2.0),
               rng_seed: int = 0) -> list[Coflow]:
    """Read a canonical trace; records without a deadline get one drawn at random."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return read_jsonl(fh, fabric, deadline_factor_range, rng_seed)
    rng = np.random.default_rng(rng_seed)
    name = getattr(source, "name", "<stream>")
    M = fabric.num_machines
    out = []
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pairs = [(int(f["src_machine"]), int(f["dst_machine"]), float(f["volume"]))
                     for f in rec["flows"]]
            if any(not (0 <= s < M and 0 <= d < M) for s, d, _ in pairs):
                raise ValueError(f"machine index outside 0..{M - 1}")
            c = Coflow.from_pairs(int(rec["id"]), M, pairs, 1.0, float(rec.get("release_time", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceParseError(name, lineno, str(exc)) from exc
        deadline = rec.get("deadline")
        if deadline is None:
            deadline = _deadline(fabric, c, float(rng.uniform(*deadline_factor_range)))
        out.append(c.with_deadline(float(deadline)))
    return out


def import_trace(path: str | Path, num_machines: int,
                 deadline_factor_range: tuple[float, float] = (1.0, 2.0),
                 rng_seed: int = 0, offline: bool = True,
                 volume_scale: float = 1.0, time_scale: float = 1e-3) -> list[Coflow]:
    """Parse a MapReduce shuffle trace (coflow-benchmark layout).

    First line: ``<num_machines> <num_coflows>``. Each following line::

        <id> <arrival_ms> <n_mappers> <mapper_loc>... <n_reducers> <loc:MB>...

    Every mapper sends ``MB / n_mappers`` to each reducer. Coflows with more
    than ``num_machines`` flows are skipped, locations are folded modulo
    ``num_machines``, and deadlines are drawn from ``deadline_factor_range``
    times the isolation CCT. ``offline`` forces all releases to zero.
    """
    M = num_machines
    fabric = Fabric.uniform(M)
    rng = np.random.default_rng(rng_seed)
    out: list[Coflow] = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not any(l.strip() for l in lines):
        return out
    header = lines[0].split()
    if len(header) < 1 or not header[0].isdigit():
        raise TraceParseError(path, 1, "expected '<num_machines> <num_coflows>' header")
    for lineno, line in enumerate(lines[1:], 2):
        tok = line.split()
        if not tok:
            continue
        try:
            cid, arrival = int(tok[0]), float(tok[1])
            n_map = int(tok[2])
            mappers = [int(x) for x in tok[3:3 + n_map]]
            n_red = int(tok[3 + n_map])
            reducers = []
            for item in tok[4 + n_map:4 + n_map + n_red]:
                loc, mb = item.split(":")
                reducers.append((int(loc), float(mb)))
            if len(mappers) != n_map or len(reducers) != n_red or n_map < 1 or n_red < 1:
                raise ValueError("mapper/reducer count does not match the listed locations")
            if len(tok) != 4 + n_map + n_red:
                raise ValueError("trailing tokens")
        except (IndexError, ValueError) as exc:
            raise TraceParseError(path, lineno, str(exc)) from exc
        if n_map * n_red > M:
            continue
        pairs = [(m % M, r % M, mb * volume_scale / n_map) for r, mb in reducers for m in mappers]
        release = 0.0 if offline else arrival * time_scale
        c = Coflow.from_pairs(cid, M, pairs, 1.0, release)
        out.append(c.with_deadline(_deadline(fabric, c, float(rng.uniform(*deadline_factor_range)))))
    return out


def sample_coflows(coflows: Sequence[Coflow], n: int, rng_seed: int = 0) -> list[Coflow]:
    """``n`` coflows drawn without replacement, returned in id order."""
    if n > len(coflows):
        raise ValidationError(f"cannot sample {n} coflows out of {len(coflows)}")
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(coflows), size=n, replace=False)
    return sorted((coflows[i] for i in picks), key=lambda c: c.id)
