import pytest

from helpers import serial
from txncheck.anomaly import DUPLICATE_WRITE, GARBAGE_READ, INCONSISTENT_OBSERVATION
from txncheck.trace import (
    AmbiguousWrite,
    GarbageRead,
    WriteRef,
    build_write_index,
    check_observation_consistency,
    committed_reads,
    detect_garbage_and_duplicates,
    is_prefix,
    longest_committed_read,
    recover_write,
    unrecoverable_keys,
)


def test_write_index_marks_final_writes():
    obs = serial([["append", "x", 1], ["append", "x", 2], ["append", "y", 1]])
    idx = build_write_index(obs)
    assert recover_write(idx, "x", 1) == WriteRef(0, 0, False)
    assert recover_write(idx, "x", 2) == WriteRef(0, 1, True)
    assert recover_write(idx, "y", 1).final


def test_recover_write_failures():
    obs = serial([["append", "x", 1]], ([["append", "x", 1]], "fail"))
    idx = build_write_index(obs)
    with pytest.raises(AmbiguousWrite):
        recover_write(idx, "x", 1)
    with pytest.raises(GarbageRead):
        recover_write(idx, "x", 7)


def test_reads_strip_own_appends():
    obs = serial(
        [["append", "x", 1]],
        [["r", "x", [1]], ["append", "x", 2], ["r", "x", [1, 2]], ["r", "x", [2, 1]]],
        ([["r", "x", None]], "info"),
    )
    rs = committed_reads(obs)["x"]
    assert [(r.txn, r.own, r.version) for r in rs] == [
        (1, (), (1,)),
        (1, (2,), (1,)),
        (1, (2,), None),
    ]
    assert rs[0].pure and not rs[1].pure


def test_longest_read_breaks_ties_by_lowest_txn():
    obs = serial([["append", "x", 1]], [["r", "x", [1]]], [["r", "x", [1]]], [["r", "x", []]])
    assert longest_committed_read(obs, "x").source_txn == 1
    assert longest_committed_read(obs, "nope") is None


def test_prefix():
    assert is_prefix((), (1,)) and is_prefix((1, 2), (1, 2))
    assert not is_prefix((2,), (1, 2)) and not is_prefix((1, 2, 3), (1, 2))


def test_non_prefix_read_is_inconsistent_observation():
    obs = serial([["append", "x", 1]], [["append", "x", 2]], [["r", "x", [1, 2]]], [["r", "x", [2]]])
    (a,) = check_observation_consistency(obs)
    assert a.cls == INCONSISTENT_OBSERVATION and a.txns == [3, 2] and a.key == "x"


def test_prefix_reads_are_consistent():
    obs = serial([["append", "x", 1]], [["r", "x", [1]]], [["append", "x", 2]], [["r", "x", [1, 2]]])
    assert check_observation_consistency(obs) == []


def test_garbage_and_duplicates():
    obs = serial(
        [["append", "x", 1]],
        [["append", "x", 1]],
        [["r", "x", [1]]],
        [["r", "y", [5]]],
    )
    found = detect_garbage_and_duplicates(obs, build_write_index(obs))
    assert sorted(a.cls for a in found) == [DUPLICATE_WRITE, GARBAGE_READ]
    assert unrecoverable_keys(found) == {"x", "y"}


def test_unread_duplicates_are_not_reported():
    obs = serial([["append", "x", 1]], [["append", "x", 1]])
    assert detect_garbage_and_duplicates(obs, build_write_index(obs)) == []
