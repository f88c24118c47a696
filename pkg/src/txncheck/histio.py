"""Reading and writing observed histories.

A history is newline-delimited JSON, one event per line::

    {"index": 0, "type": "invoke", "process": 0, "value": [["append", 1, 5], ["r", 2, null]]}
    {"index": 1, "type": "ok", "process": 0, "value": [["append", 1, 5], ["r", 2, [3, 4]]]}

Invocations are paired with the next completion on the same process.  An
``ok`` completion commits, ``fail`` aborts, and ``info`` (or no completion at
all) leaves the transaction indeterminate.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Hashable, Iterable, NamedTuple, Optional, Union

LIST_APPEND = "list-append"
REGISTER = "register"
MODELS = (LIST_APPEND, REGISTER)

COMMITTED = "committed"
ABORTED = "aborted"
INDETERMINATE = "indeterminate"

APPEND = "append"
READ = "r"
WRITE = "w"

_OPS = {LIST_APPEND: (APPEND, READ), REGISTER: (WRITE, READ)}
_COMPLETIONS = {"ok": COMMITTED, "fail": ABORTED, "info": INDETERMINATE}
_TYPES = ("invoke", "ok", "fail", "info")


class HistoryError(ValueError):
    """A history could not be parsed or paired."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MicroOp(NamedTuple):
    """One operation inside a transaction.

    ``value`` is the argument of a write/append, or the observed value of a
    read (``None`` while unknown; under the register model ``None`` on a
    committed read is the initial version).
    """

    f: str
    key: Hashable
    value: Any

    @property
    def is_read(self) -> bool:
        return self.f == READ

    @property
    def is_write(self) -> bool:
        return self.f != READ

    @property
    def argument(self) -> Any:
        return None if self.f == READ else self.value

    @property
    def observed(self) -> Any:
        return self.value if self.f == READ else None

    def to_json(self) -> list:
        v = self.value
        if isinstance(v, tuple):
            v = list(v)
        return [self.f, self.key, v]


@dataclass(eq=True)
class ObservedTransaction:
    id: int
    process: int
    status: str
    ops: tuple[MicroOp, ...]
    invoke_index: int
    complete_index: Optional[int] = None

    @property
    def committed(self) -> bool:
        return self.status == COMMITTED

    @property
    def aborted(self) -> bool:
        return self.status == ABORTED

    @property
    def indeterminate(self) -> bool:
        return self.status == INDETERMINATE

    def to_json(self) -> list:
        return [op.to_json() for op in self.ops]


@dataclass(eq=True)
class Observation:
    txns: list[ObservedTransaction]
    model: str = LIST_APPEND
    max_index: int = -1

    def __len__(self) -> int:
        return len(self.txns)

    def keys(self) -> set:
        return {op.key for t in self.txns for op in t.ops}


class Event(NamedTuple):
    index: int
    type: str
    process: int
    value: list
    line: Optional[int] = None


def _check_key(k: Any, line: Optional[int]) -> Hashable:
    if isinstance(k, bool) or not isinstance(k, (int, str)):
        raise HistoryError(f"key must be an integer or string, got {k!r}", line)
    return k


def _is_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _parse_ops(value: Any, model: str, etype: str, line: Optional[int]) -> tuple[MicroOp, ...]:
    if not isinstance(value, list):
        raise HistoryError("value must be a list of micro-operations", line)
    allowed = _OPS[model]
    ops = []
    for raw in value:
        if not isinstance(raw, list) or len(raw) != 3:
            raise HistoryError(f"micro-operation must be [f, key, value], got {raw!r}", line)
        f, k, v = raw
        if f not in allowed:
            raise HistoryError(f"unknown operation {f!r} for model {model}", line)
        k = _check_key(k, line)
        if f == READ:
            if etype == "invoke":
                if v is not None:
                    raise HistoryError("invocation reads must carry null", line)
            elif etype == "ok":
                if model == LIST_APPEND:
                    if not isinstance(v, list) or not all(_is_int(e) for e in v):
                        raise HistoryError(f"committed read of {k!r} needs an observed list", line)
                    v = tuple(v)
                elif v is not None and not _is_int(v):
                    raise HistoryError(f"register read of {k!r} must be an integer or null", line)
            else:
                # Values on fail/info completions are accepted and ignored.
                v = None
        elif not _is_int(v):
            raise HistoryError(f"{f} of {k!r} needs an integer argument", line)
        ops.append(MicroOp(f, k, v))
    return tuple(ops)


def _parse_event(obj: Any, model: str, line: Optional[int]) -> Event:
    if not isinstance(obj, dict):
        raise HistoryError("record must be an object", line)
    try:
        index, etype, process, value = obj["index"], obj["type"], obj["process"], obj["value"]
    except KeyError as e:
        raise HistoryError(f"missing field {e.args[0]!r}", line) from None
    if not _is_int(index):
        raise HistoryError("index must be an integer", line)
    if etype not in _TYPES:
        raise HistoryError(f"unknown event type {etype!r}", line)
    if not _is_int(process):
        raise HistoryError("process must be an integer", line)
    return Event(index, etype, process, _parse_ops(value, model, etype, line), line)


def pair_events(events: Iterable[Event]) -> list[ObservedTransaction]:
    """Pair invocations with completions into transactions.

    Transaction ids are dense and follow invocation order.  Invocations that
    never complete are indeterminate with no ``complete_index``.
    """
    txns: list[ObservedTransaction] = []
    open_by_process: dict[int, ObservedTransaction] = {}
    last_index: Optional[int] = None
    for ev in events:
        if last_index is not None and ev.index <= last_index:
            if ev.index == last_index:
                raise HistoryError(f"duplicate event index {ev.index}", ev.line)
            raise HistoryError(f"event index {ev.index} out of order", ev.line)
        last_index = ev.index
        if ev.type == "invoke":
            if ev.process in open_by_process:
                raise HistoryError(
                    f"process {ev.process} invoked a transaction while another was open", ev.line
                )
            t = ObservedTransaction(len(txns), ev.process, INDETERMINATE, ev.value, ev.index)
            txns.append(t)
            open_by_process[ev.process] = t
            continue
        t = open_by_process.pop(ev.process, None)
        if t is None:
            raise HistoryError(f"{ev.type} on process {ev.process} has no matching invocation", ev.line)
        t.complete_index = ev.index
        t.status = _COMPLETIONS[ev.type]
        if ev.type == "ok":
            t.ops = _merge_completion(t.ops, ev.value, ev.line)
    return txns


def _merge_completion(invoked, completed, line) -> tuple[MicroOp, ...]:
    if len(invoked) != len(completed):
        raise HistoryError("completion has a different number of operations than its invocation", line)
    for a, b in zip(invoked, completed):
        if a.f != b.f or a.key != b.key or (a.f != READ and a.value != b.value):
            raise HistoryError(f"completion op {b.to_json()} does not match invocation {a.to_json()}", line)
    return completed


def _lines(stream: Union[bytes, str, IO]) -> Iterable[tuple[int, str]]:
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for n, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        raw = raw.strip()
        if raw:
            yield n, raw


def parse_history(stream: Union[bytes, str, IO], model: str = LIST_APPEND) -> Observation:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")

    def events():
        for n, raw in _lines(stream):
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise HistoryError(f"malformed record: {e.msg}", n) from None
            yield _parse_event(obj, model, n)

    txns = pair_events(events())
    max_index = max((t.complete_index if t.complete_index is not None else t.invoke_index for t in txns), default=-1)
    return Observation(txns, model, max_index)


def read_history(path: Union[str, Path], model: str = LIST_APPEND) -> Observation:
    with open(path, "rb") as fh:
        return parse_history(fh, model)


def _record(index: int, etype: str, process: int, ops) -> str:
    return json.dumps({"index": index, "type": etype, "process": process, "value": ops})


def _invocation(ops) -> list:
    return [[op.f, op.key, None if op.f == READ else op.value] for op in ops]


def history_lines(obs: Observation) -> list[str]:
    records: list[tuple[int, str]] = []
    for t in obs.txns:
        records.append((t.invoke_index, _record(t.invoke_index, "invoke", t.process, _invocation(t.ops))))
        if t.complete_index is None:
            continue
        if t.status == COMMITTED:
            rec = _record(t.complete_index, "ok", t.process, t.to_json())
        else:
            etype = "fail" if t.status == ABORTED else "info"
            rec = _record(t.complete_index, etype, t.process, _invocation(t.ops))
        records.append((t.complete_index, rec))
    records.sort(key=lambda r: r[0])
    return [r for _, r in records]


def write_history(obs: Observation) -> bytes:
    lines = history_lines(obs)
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


def dump_history(obs: Observation, path: Union[str, Path]) -> None:
    Path(path).write_bytes(write_history(obs))


def transaction_from_json(ops: list) -> tuple[MicroOp, ...]:
    """Build micro-ops from ``[[f, k, v], ...]``, as used by fixtures and tests."""
    return tuple(MicroOp(f, k, tuple(v) if isinstance(v, list) else v) for f, k, v in ops)
