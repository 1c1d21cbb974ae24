import io

import pytest
from hypothesis import given

from coflowsched.dcoflow import DcoflowConfig, Schedule, dcoflow_order
from coflowsched.model import Coflow, Fabric, isolation_cct
from coflowsched.rate import (FlowState, SimulationError, advance, allocate_rates, car,
                              prediction_error, simulate, write_records_csv)
from coflowsched import schedulers

from conftest import EPS, check_instance, instances



def _states(coflows):
    return [FlowState(f, f.volume) for c in coflows for f in c.flows]


def test_shared_ingress_blocks_lower_priority():
    fab = Fabric.uniform(2)
    a = Coflow.from_pairs(0, 2, [(0, 0, 1.0)], 5)
    b = Coflow.from_pairs(1, 2, [(0, 1, 1.0)], 5)
    assert allocate_rates(fab, [1, 0], _states([a, b])) == [0.0, 1.0]


def test_disjoint_flows_both_run():
    fab = Fabric.uniform(2)
    a = Coflow.from_pairs(0, 2, [(0, 0, 1.0)], 5)
    b = Coflow.from_pairs(1, 2, [(1, 1, 1.0)], 5)
    assert allocate_rates(fab, [0, 1], _states([a, b])) == [1.0, 1.0]


def test_fig1_allocation(fig1):
    fab, coflows = fig1
    states = _states(coflows)
    rates = allocate_rates(fab, [2, 3, 4, 5, 1], states)
    for s, r in zip(states, rates):
        assert r == (0.0 if s.flow.coflow_id == 1 else 1.0)


def test_fig1_completion_times(fig1):
    fab, coflows = fig1
    res = simulate(fab, Schedule((2, 3, 4, 5, 1)), coflows)
    for k in (2, 3, 4, 5):
        assert res.completion[k] == pytest.approx(1 + EPS)
        assert res.on_time(k)
    assert res.completion[1] == pytest.approx(2 + EPS)
    assert not res.on_time(1)
    assert car(res) == pytest.approx(0.8)


def test_fig1_wide_coflow_alone(fig1):
    fab, coflows = fig1
    res = simulate(fab, Schedule((1,), {2, 3, 4, 5}), coflows)
    assert res.completion[1] == 1.0 and res.on_time(1)
    assert car(res) == pytest.approx(0.2)
    assert all(res.completion[k] is None for k in (2, 3, 4, 5))


@given(instances(max_coflows=1))
def test_lone_coflow_finishes_at_isolation_cct(inst):
    fab, (c,) = inst
    res = simulate(fab, Schedule((c.id,)), [c])
    assert res.completion[c.id] == pytest.approx(isolation_cct(fab, c))


def test_zero_volume_flow_is_instant():
    fab = Fabric.uniform(2)
    c = Coflow.from_pairs(0, 2, [(0, 1, 0.0)], 1.0)
    res = simulate(fab, Schedule((0,)), [c])
    assert res.completion[0] == 0.0 and res.on_time(0)


def test_car_edge_cases(fig1):
    fab, coflows = fig1
    none = simulate(fab, Schedule((), {1, 2, 3, 4, 5}), coflows)
    assert car(none) == 0.0
    with pytest.raises(ValueError):
        car(none, total_n=0)


def test_prediction_error(fig1):
    fab, coflows = fig1
    sched = dcoflow_order(fab, coflows)
    assert prediction_error(sched, simulate(fab, sched, coflows)) == 0.0
    # 1 misses, 2..4 make it
    sched = Schedule((2, 3, 4, 1), {5})
    assert prediction_error(sched, simulate(fab, sched, coflows)) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        prediction_error(Schedule(()), simulate(fab, Schedule(()), coflows))


def test_unknown_coflow_in_schedule(fig1):
    with pytest.raises(ValueError):
        simulate(fig1[0], Schedule((9,)), fig1[1])


def test_stalled_flow_raises():
    # a flow on a port with no capacity left cannot be served
    c = Coflow.from_pairs(0, 2, [(0, 1, 1.0)], 1.0)
    states = _states([c])
    with pytest.raises(SimulationError):
        advance([0.0, 1.0, 1.0, 1.0], states, {0: 0}, 0.0)


def test_records_csv(fig1):
    fab, coflows = fig1
    buf = io.StringIO()
    write_records_csv(simulate(fab, dcoflow_order(fab, coflows), coflows), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "id,accepted,c_k,T_k,on_time"
    assert lines[1] == "1,0,,1.0,0"
    assert lines[2].startswith("2,1,1.1")


@given(instances(max_coflows=8))
def test_simulator_invariants(inst):
    fab, coflows = inst
    for name in schedulers.NAMES:
        check_instance(fab, coflows, schedulers.schedule(name, fab, coflows))


@given(instances(max_coflows=6))
def test_simulation_is_deterministic(inst):
    fab, coflows = inst
    sched = dcoflow_order(fab, coflows, DcoflowConfig("v2"))
    a, b = simulate(fab, sched, coflows), simulate(fab, sched, coflows)
    assert a == b
