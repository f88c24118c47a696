"""Command-line entry points: ``check``, ``gen`` and ``fuzz``."""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

from .anomaly import ALL_CLASSES
from .checker import CONSISTENCY_MODELS, SERIALIZABLE, STRICT_SERIALIZABLE, Report, check
from .gen import BASES, INJECTORS, GenConfig, SimMode, generate, save
from .graph import DATA_LABELS, Dsg, to_dot
from .histio import LIST_APPEND, MODELS, HistoryError, read_history

EXIT_VALID = 0
EXIT_INPUT = 1
EXIT_INVALID = 2


def render_report(r: Report, fmt: str = "text") -> bytes:
    if fmt == "json":
        return (json.dumps(r.to_json(), indent=2, sort_keys=True) + "\n").encode()
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    out = [f"Valid: {'true' if r.valid else 'false'}"]
    out.append(f"Consistency: {r.consistency} ({r.model})")
    out.append(f"Transactions: {r.stats.get('txns', 0)}, keys: {r.stats.get('keys', 0)}")
    for n in r.notices:
        out.append(f"Notice: {n}")
    if r.anomalies:
        out.append("Anomalies: " + ", ".join(f"{k} x{v}" for k, v in r.counts.items()))
    for name, found in r.by_class().items():
        for i, a in enumerate(found, 1):
            out.append("")
            out.append(f"== {name} #{i}")
            out.append(a.explanation or ", ".join(f"T{t}" for t in a.txns))
            size = a.data.get("component_size", 0)
            if size > len(a.txns):
                out.append(f"(shortest cycle found; its component spans {size} transactions and may hold others)")
    if r.permitted:
        kinds = sorted({a.name for a in r.permitted})
        out.append("")
        out.append(f"Also seen, allowed under {r.consistency}: {', '.join(kinds)}")
    return ("\n".join(out) + "\n").encode()


def _anomaly_list(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [n for n in names if n not in ALL_CLASSES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown anomaly class: {', '.join(bad)}")
    return names


def _injection(text: str) -> tuple[str, float]:
    name, sep, p = text.partition("=")
    if name not in INJECTORS:
        raise argparse.ArgumentTypeError(f"unknown injector {name!r}; choose from {', '.join(INJECTORS)}")
    try:
        prob = float(p) if sep else 1.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad probability in {text!r}") from None
    return name, prob


def cmd_check(args) -> int:
    try:
        obs = read_history(args.file, args.model)
    except HistoryError as e:
        print(f"{args.file}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"cannot read {args.file}: {e.strerror}", file=sys.stderr)
        return EXIT_INPUT
    r = check(
        obs,
        args.consistency,
        anomalies=args.anomalies,
        linearizable_keys=args.linearizable_keys,
        process_edges=args.process,
    )
    sys.stdout.buffer.write(render_report(r, args.format))
    sys.stdout.flush()
    if args.dot:
        involved = {t for a in r.anomalies for t in a.txns}
        Path(args.dot).write_text(to_dot(r.graph or Dsg(), involved))
    return EXIT_VALID if r.valid else EXIT_INVALID


def _gen_config(args, seed) -> GenConfig:
    return GenConfig(
        key_count=args.keys,
        max_writes_per_key=args.max_writes,
        min_ops=args.ops_min,
        max_ops=args.ops_max,
        txn_count=args.txns,
        process_count=args.processes,
        read_fraction=args.read_fraction,
        seed=seed,
    )


def cmd_gen(args) -> int:
    try:
        cfg = _gen_config(args, args.seed)
        mode = SimMode(args.mode, dict(args.inject))
    except ValueError as e:
        print(f"gen: {e}", file=sys.stderr)
        return EXIT_INPUT
    res = generate(cfg, mode)
    try:
        side = save(res, args.out)
    except OSError as e:
        print(f"cannot write {args.out}: {e.strerror}", file=sys.stderr)
        return EXIT_INPUT
    obs = res.obs
    print(f"wrote {len(obs.txns)} transactions over {len(obs.keys())} keys to {args.out} (seed {args.seed})")
    if side is not None:
        print(f"ground truth in {side}")
    for name, n in sorted(res.injected.items()):
        print(f"injected {name}: {n}")
    return EXIT_VALID


def idsg_outside_truth(g: Dsg, truth: dict) -> set:
    """Inferred data edges that the recorded execution does not contain."""
    real = {(e["from"], e["to"], e["label"]) for e in truth["edges"]}
    return g.edge_set(DATA_LABELS) - real


def cmd_fuzz(args) -> int:
    try:
        mode = SimMode(args.mode, dict(args.inject))
        _gen_config(args, 0)
    except ValueError as e:
        print(f"fuzz: {e}", file=sys.stderr)
        return EXIT_INPUT
    consistency = args.consistency or (STRICT_SERIALIZABLE if mode.base == SERIALIZABLE else mode.base)
    keep = Path(args.keep_dir or tempfile.gettempdir())
    started = time.perf_counter()
    for i in range(args.rounds):
        seed = args.seed + i
        res = generate(_gen_config(args, seed), mode)
        r = check(res.obs, consistency)
        problem = None
        if r.anomalies or r.permitted:
            kinds = sorted({a.name for a in r.anomalies + r.permitted})
            problem = "anomalies reported: " + ", ".join(kinds)
        elif res.truth is not None:
            extra = idsg_outside_truth(r.graph, res.truth)
            if extra:
                a, b, l = min(extra)
                problem = f"{len(extra)} inferred edges missing from ground truth, e.g. T{a} -{l}-> T{b}"
        if problem:
            path = keep / f"fuzz-{seed}.jsonl"
            save(res, path)
            print(f"round {i} seed {seed}: {problem}; history kept at {path}")
            return EXIT_INVALID
        if args.verbose:
            print(f"round {i} seed {seed}: ok ({len(res.obs.txns)} txns)")
    took = time.perf_counter() - started
    print(f"{args.rounds} rounds clean under {consistency} (seeds {args.seed}..{args.seed + args.rounds - 1}, {took:.1f}s)")
    return EXIT_VALID


def _workload_args(p, txns: int) -> None:
    p.add_argument("--txns", type=int, default=txns)
    p.add_argument("--keys", type=int, default=100)
    p.add_argument("--max-writes", type=int, default=100, help="appends per key before it retires")
    p.add_argument("--ops-min", type=int, default=1)
    p.add_argument("--ops-max", type=int, default=5)
    p.add_argument("--processes", type=int, default=10)
    p.add_argument("--read-fraction", type=float, default=0.5)
    p.add_argument("--mode", choices=BASES, default=SERIALIZABLE)
    p.add_argument("--inject", type=_injection, action="append", default=[], metavar="NAME=P")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="txncheck", description="Infer dependency graphs from transaction histories and find isolation anomalies.")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="check a history file")
    c.add_argument("file")
    c.add_argument("--model", choices=MODELS, default=LIST_APPEND)
    c.add_argument("--consistency", choices=CONSISTENCY_MODELS, default=SERIALIZABLE)
    c.add_argument("--anomalies", type=_anomaly_list, default=None, help="comma-separated classes to look for")
    c.add_argument("--linearizable-keys", action="store_true", help="assume each register is linearizable")
    c.add_argument("--process", action="store_true", help="add process-order edges below strict-serializable")
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.add_argument("--dot", metavar="PATH", help="write the inferred graph in DOT format")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gen", help="generate a simulated history")
    _workload_args(g, 1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fuzz", help="generate and check clean histories until something breaks")
    f.add_argument("--rounds", type=int, default=100)
    _workload_args(f, 1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--consistency", choices=CONSISTENCY_MODELS, default=None, help="defaults to what the mode guarantees")
    f.add_argument("--keep-dir", help="where to save a failing history")
    f.add_argument("-v", "--verbose", action="store_true")
    f.set_defaults(func=cmd_fuzz)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_VALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
