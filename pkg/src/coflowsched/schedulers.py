"""Name -> scheduler lookup used by the online loop and the experiment runner."""

from __future__ import annotations

from typing import Callable, Sequence

from . import baselines
from .dcoflow import DcoflowConfig, Schedule, order_load
from .model import Coflow, Fabric, LoadMatrix, build_load_matrix

NAMES = ("dcoflow-v1", "dcoflow-v2", "cs-mha", "sincronia", "edd")

LoadScheduler = Callable[[LoadMatrix], Schedule]


def get(name: str, gamma: float = 0.9) -> LoadScheduler:
    if name == "dcoflow-v1":
        cfg = DcoflowConfig("v1")
        return lambda load: order_load(load, cfg)
    if name == "dcoflow-v2":
        cfg = DcoflowConfig("v2", gamma)
        return lambda load: order_load(load, cfg)
    if name == "cs-mha":
        return baselines.cs_mha_load
    if name == "sincronia":
        return baselines.sincronia_load
    if name == "edd":
        return baselines.edd_load
    raise KeyError(f"unknown scheduler {name!r}; choose from {', '.join(NAMES)}")


def schedule(name: str, fabric: Fabric, coflows: Sequence[Coflow], gamma: float = 0.9) -> Schedule:
    if not coflows:
        return Schedule(())
    return get(name, gamma)(build_load_matrix(fabric, coflows))
