from helpers import serial
from txncheck.anomaly import DIRTY_UPDATE, G1A, G1B, INTERNAL
from txncheck.histio import REGISTER
from txncheck.nca import find_aborted_reads, find_dirty_updates, find_intermediate_reads, find_internal_inconsistencies
from txncheck.trace import build_write_index


def run(detector, obs):
    return detector(obs, build_write_index(obs))


def test_internal_list_empty_read_after_append():
    (a,) = find_internal_inconsistencies(serial([["append", 0, 6], ["r", 0, []]]))
    assert a.cls == INTERNAL and a.witness == [(0, 1)]


def test_internal_list_reads_must_agree():
    obs = serial([["r", 0, [1]], ["r", 0, [1, 2]]], [["r", 0, [1]], ["append", 0, 3], ["r", 0, [1, 3]]])
    (a,) = find_internal_inconsistencies(obs)
    assert a.txns == [0]


def test_internal_register():
    (a,) = find_internal_inconsistencies(serial([["w", 10, 2], ["r", 10, 1]], model=REGISTER))
    assert a.cls == INTERNAL
    assert find_internal_inconsistencies(serial([["r", 10, 1], ["r", 10, 1], ["w", 10, 3], ["r", 10, 3]], model=REGISTER)) == []


def test_internal_ignores_uncommitted():
    assert find_internal_inconsistencies(serial(([["append", 0, 6], ["r", 0, None]], "info"))) == []


def test_aborted_read():
    obs = serial(([["append", "x", 1]], "fail"), [["r", "x", [1]]])
    (a,) = run(find_aborted_reads, obs)
    assert a.cls == G1A and a.txns == [0, 1]


def test_aborted_prefix_covered_by_committed_tail_is_not_g1a():
    obs = serial(([["append", "x", 1]], "fail"), [["append", "x", 2]], [["r", "x", [1, 2]]])
    assert run(find_aborted_reads, obs) == []
    (d,) = run(find_dirty_updates, obs)
    assert d.cls == DIRTY_UPDATE and d.txns == [0, 1, 2]


def test_indeterminate_writer_is_not_aborted():
    obs = serial(([["append", "x", 1]], "info"), [["r", "x", [1]]])
    assert run(find_aborted_reads, obs) == []


def test_intermediate_read():
    obs = serial([["append", "x", 1], ["append", "x", 2]], [["r", "x", [1]]])
    (a,) = run(find_intermediate_reads, obs)
    assert a.cls == G1B and a.txns == [0, 1]


def test_reading_own_intermediate_state_is_fine():
    obs = serial([["append", "x", 1], ["r", "x", [1]], ["append", "x", 2]])
    assert run(find_intermediate_reads, obs) == []


def test_list_only_detectors_skip_registers():
    obs = serial(([["w", "x", 1]], "fail"), [["r", "x", 1]], model=REGISTER)
    for d in (find_aborted_reads, find_intermediate_reads, find_dirty_updates):
        assert run(d, obs) == []
