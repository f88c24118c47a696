"""Compact construction of small histories for tests."""

from __future__ import annotations

from pathlib import Path

from txncheck.histio import (
    ABORTED,
    COMMITTED,
    INDETERMINATE,
    LIST_APPEND,
    Observation,
    ObservedTransaction,
    read_history,
    transaction_from_json,
)

FIXTURES = Path(__file__).parent / "fixtures"
_STATUS = {"ok": COMMITTED, "fail": ABORTED, "info": INDETERMINATE}


def serial(*txns, model=LIST_APPEND) -> Observation:
    """Transactions run one after another, each on its own process.

    Each argument is a list of ``[f, k, v]`` ops, or ``(ops, "fail"|"info")``.
    """
    out = []
    for i, spec in enumerate(txns):
        ops, status = (spec, "ok") if isinstance(spec, list) else spec
        out.append(ObservedTransaction(i, i, _STATUS[status], transaction_from_json(ops), 2 * i, 2 * i + 1))
    return Observation(out, model, 2 * len(out) - 1)


def fixture(name, model=LIST_APPEND) -> Observation:
    return read_history(FIXTURES / f"{name}.jsonl", model)
