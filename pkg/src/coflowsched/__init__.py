"""Deadline-aware coflow scheduling on a Big-Switch fabric.

The main entry points are :func:`dcoflow_order` for ordering with admission
control, :func:`simulate` for the greedy flow-level simulator and
:func:`run_online` for arrival streams.
"""

from .baselines import cs_mha_order, edd_order, moore_hodgson, sincronia_order
from .dcoflow import DcoflowConfig, Schedule, dcoflow_order, order_load
from .model import Coflow, Fabric, Flow, LoadMatrix, build_load_matrix, isolation_cct
from .online import OnlineConfig, run_online
from .rate import SimResult, car, prediction_error, simulate

__all__ = [
    "Coflow", "DcoflowConfig", "Fabric", "Flow", "LoadMatrix", "OnlineConfig", "Schedule",
    "SimResult", "build_load_matrix", "car", "cs_mha_order", "dcoflow_order", "edd_order",
    "isolation_cct", "moore_hodgson", "order_load", "prediction_error", "run_online",
    "simulate", "sincronia_order",
]
