import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coflowsched.model import Fabric, ValidationError, isolation_cct
from coflowsched.traffic import (ArrivalConfig, SyntheticConfig, TraceParseError, gen_arrivals,
                                 gen_synthetic, import_trace, m_machine_example, read_jsonl,
                                 sample_coflows, synthetic_template, write_jsonl)


def _batch(M=10, N=300, seed=3, **kw):
    fab = Fabric.uniform(M)
    return fab, gen_synthetic(SyntheticConfig(M, N, rng_seed=seed, **kw), fab)


@given(st.integers(2, 12), st.integers(0, 2**31), st.sampled_from([(1, 2), (1, 4), (2, 3)]))
def test_deadlines_lie_in_factor_range(M, seed, rng_range):
    fab, coflows = _batch(M, 20, seed, deadline_factor_range=rng_range)
    a, b = rng_range
    for c in coflows:
        cct0 = isolation_cct(fab, c)
        assert a * cct0 * (1 - 1e-12) <= c.deadline <= b * cct0 * (1 + 1e-12)


def test_zero_stddev_gives_unit_class1_volumes():
    _, coflows = _batch(class1_volume_std=0.0)
    singles = [c for c in coflows if c.width == 1]
    assert singles and all(c.flows[0].volume == 1.0 for c in singles)


def test_same_seed_same_batch():
    assert _batch(seed=11)[1] == _batch(seed=11)[1]
    assert _batch(seed=11)[1] != _batch(seed=12)[1]


def test_widths_and_class_mix():
    M = 9
    _, coflows = _batch(M, 2000)
    widths = np.array([c.width for c in coflows])
    wide = widths[widths > 1]
    assert wide.min() >= math.ceil(2 * M / 3) and wide.max() <= M
    assert abs((widths == 1).mean() - 0.6) < 0.04


def test_class2_volumes_are_heavier():
    _, coflows = _batch(10, 2000)
    small = [f.volume for c in coflows if c.width == 1 for f in c.flows]
    wide = [f.volume for c in coflows if c.width > 1 for f in c.flows]
    assert np.mean(small) == pytest.approx(1.0, abs=0.02)
    assert np.mean(wide) == pytest.approx(1.25, abs=0.02)


def test_wide_coflows_use_each_port_once():
    _, coflows = _batch(10, 200)
    for c in coflows:
        assert len({f.ingress_port for f in c.flows}) == c.width
        assert len({f.egress_port for f in c.flows}) == c.width


def test_empty_batch():
    assert _batch(N=0)[1] == []


@pytest.mark.parametrize("kw", [dict(class1_prob=1.5), dict(deadline_factor_range=(0.5, 2)),
                                dict(deadline_factor_range=(2, 1)), dict(class1_volume_std=-1)])
def test_bad_config(kw):
    with pytest.raises(ValidationError):
        SyntheticConfig(10, 5, **kw)


def test_too_few_machines():
    with pytest.raises(ValidationError):
        SyntheticConfig(1, 5)


def _stream(rate, n, batch=1, seed=5, M=10):
    fab = Fabric.uniform(M)
    return gen_arrivals(ArrivalConfig(rate, n, batch, rng_seed=seed),
                        synthetic_template(SyntheticConfig(M, 0, rng_seed=seed), fab))


def test_mean_interarrival_matches_rate():
    times = [t for t, _ in _stream(8.0, 4000)]
    assert np.mean(np.diff([0.0] + times)) == pytest.approx(1 / 8, rel=0.05)


def test_single_coflow_batches():
    times = [t for t, _ in _stream(8.0, 500)]
    assert len(set(times)) == len(times)


def test_batches_of_five_to_fifteen():
    stream = _stream(8.0, 4000, (5, 15))
    times = [t for t, _ in stream]
    sizes = np.unique(times, return_counts=True)[1]
    assert sizes[:-1].min() >= 5 and sizes.max() <= 15
    assert sizes.mean() == pytest.approx(10, rel=0.05)
    # the coflow rate stays at lambda
    assert len(stream) / times[-1] == pytest.approx(8.0, rel=0.1)


def test_stream_is_sorted_and_released():
    stream = _stream(4.0, 200, (2, 4))
    times = [t for t, _ in stream]
    assert times == sorted(times)
    assert all(c.release_time == t for t, c in stream)
    assert [c.id for _, c in stream] == list(range(200))


def test_stream_coflows_do_not_depend_on_rate():
    a, b = _stream(4.0, 100), _stream(16.0, 100)
    assert [c.flows for _, c in a] == [c.flows for _, c in b]
    np.testing.assert_allclose([t for t, _ in a], [4 * t for t, _ in b])


def test_bad_arrival_config():
    with pytest.raises(ValidationError):
        ArrivalConfig(0.0, 10)
    with pytest.raises(ValidationError):
        ArrivalConfig(1.0, 10, (0, 3))


TRACE = """\
8 3
1 0 2 1 2 1 3:4.0
2 100 1 5 3 0:1.0 1:1.0 2:1.0
3 250 1 7 1 8:2.5
"""


def _write(tmp_path, text):
    path = tmp_path / "trace.txt"
    path.write_text(text)
    return path


def test_import_trace_two_mappers_one_reducer(tmp_path):
    coflows = import_trace(_write(tmp_path, TRACE), num_machines=4)
    c = next(c for c in coflows if c.id == 1)
    assert c.width == 2
    assert {f.egress_port for f in c.flows} == {4 + 3}
    assert {f.ingress_port for f in c.flows} == {1, 2}
    assert [f.volume for f in c.flows] == [2.0, 2.0]
    assert all(c.release_time == 0 for c in coflows)


def test_import_trace_filters_wide_coflows(tmp_path):
    ids = [c.id for c in import_trace(_write(tmp_path, TRACE), num_machines=2)]
    assert ids == [1, 3]


def test_import_trace_folds_locations(tmp_path):
    c = next(c for c in import_trace(_write(tmp_path, TRACE), num_machines=4) if c.id == 3)
    assert (c.flows[0].ingress_port, c.flows[0].egress_port) == (3, 4 + 0)


def test_import_trace_online_keeps_arrivals(tmp_path):
    coflows = import_trace(_write(tmp_path, TRACE), num_machines=4, offline=False)
    assert [c.release_time for c in coflows] == [0.0, 0.1, 0.25]


def test_import_trace_parse_error_has_line_number(tmp_path):
    bad = TRACE + "4 300 2 1\n"
    with pytest.raises(TraceParseError) as err:
        import_trace(_write(tmp_path, bad), num_machines=4)
    assert err.value.lineno == 5


def test_import_empty_trace(tmp_path):
    assert import_trace(_write(tmp_path, ""), num_machines=4) == []


def test_sampling_is_reproducible():
    _, coflows = _batch(N=50)
    assert sample_coflows(coflows, 10, 4) == sample_coflows(coflows, 10, 4)
    with pytest.raises(ValidationError):
        sample_coflows(coflows, 51)


def test_jsonl_round_trip():
    fab, coflows = _batch(6, 20)
    buf = io.StringIO()
    write_jsonl(coflows, buf, 6)
    buf.seek(0)
    assert read_jsonl(buf, fab) == coflows


def test_jsonl_bad_record():
    with pytest.raises(TraceParseError) as err:
        read_jsonl(io.StringIO('{"id": 1, "flows": [{"src_machine": 0, "dst_machine": 9, "volume": 1}]}\n'),
                   Fabric.uniform(2))
    assert err.value.lineno == 1


def test_m_machine_example_shape():
    fab, coflows = m_machine_example(8)
    assert fab.num_machines == 8 and len(coflows) == 8
    assert coflows[0].width == 8 and all(c.width == 1 for c in coflows[1:])
