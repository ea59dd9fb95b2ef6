"""Command-line frontend: parsing, context checking, satisfaction tables,
enumeration, refinement/redundancy/consistency verdicts, simulation, and
development-graph management.

Exit codes: 0 = success or holds, 1 = fails or violation (a report is
printed), 2 = usage, parse, or context error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .checker import (check_consistent, check_redundant, check_refines,
                      msc_conformance, render_verdict, simulate)
from .devgraph import DevGraph, TransformFailed, init_graph, load_graph, status_lines
from .diagnostics import (ContextError, DiagnosticsError, DocsemError,
                          EmptyUniverseError, GraphError, SimulationError)
from .documents import Document, check_context, parse_document
from .model import parse_trace, render_trace, validate_system
from .semantics import derive_bounds, enumerate_traces, refinement_bounds, satisfies

OK, VIOLATION, USAGE = 0, 1, 2


def _load_documents(paths: Sequence[str]) -> list[tuple[str, Document]]:
    docs = []
    for p in paths:
        text = Path(p).read_text()
        docs.append((p, parse_document(text, source=p)))
    return docs


def _add_bounds_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--max-objects", type=int, default=1)
    sub.add_argument("--trace-len", type=int, default=0)
    sub.add_argument("--extra-classes", type=int, default=0)


def _doc_summary(path: str, doc: Document) -> str:
    if doc.kind == "om":
        return (f"{path}: objectmodel {doc.name}: {len(doc.classes)} class(es), "
                f"{len(doc.assocs)} association(s), "
                f"{len(doc.invariants)} invariant(s)")
    if doc.kind == "std":
        return (f"{path}: std {doc.name} for {doc.subject}: "
                f"{len(doc.states)} state(s), {len(doc.transitions)} transition(s)")
    if doc.kind == "msc":
        return f"{path}: msc {doc.name}: {len(doc.roles)} role(s)"
    return f"{path}: itd {doc.name}: state={doc.flag}, {len(doc.text)} byte(s) of text"


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="docsem",
        description="Executable set-based semantics for modeling documents.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("parse", help="parse one document and summarize it")
    p.add_argument("file")

    p = subs.add_parser("context", help="cross-document context diagnostics")
    p.add_argument("files", nargs="+")

    p = subs.add_parser("check", help="per-document satisfaction of a trace")
    p.add_argument("system")
    p.add_argument("files", nargs="+")

    p = subs.add_parser("enumerate", help="enumerate satisfying traces")
    p.add_argument("files", nargs="*")
    _add_bounds_flags(p)
    p.add_argument("--count-only", action="store_true")

    p = subs.add_parser("refines", help="bounded refinement check")
    p.add_argument("--old", nargs="+", required=True)
    p.add_argument("--new", nargs="+", required=True)
    _add_bounds_flags(p)

    p = subs.add_parser("redundant", help="bounded redundancy check")
    p.add_argument("file")
    p.add_argument("--against", nargs="*", default=[])
    _add_bounds_flags(p)

    p = subs.add_parser("consistent", help="bounded consistency check")
    p.add_argument("files", nargs="+")
    _add_bounds_flags(p)

    p = subs.add_parser("simulate", help="build a satisfying trace")
    p.add_argument("files", nargs="+")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    _add_bounds_flags(p)

    p = subs.add_parser("graph", help="development graph operations")
    gsubs = p.add_subparsers(dest="graph_command", required=True)
    g = gsubs.add_parser("init")
    g.add_argument("graph_file")
    g = gsubs.add_parser("add")
    g.add_argument("graph_file")
    g.add_argument("file")
    g = gsubs.add_parser("transform")
    g.add_argument("graph_file")
    g.add_argument("--kind", required=True,
                   choices=["refine", "semantics-preserving", "manual-edit",
                            "decompose"])
    g.add_argument("--inputs", required=True, help="comma-separated ids")
    g.add_argument("--outputs", required=True, help="comma-separated files")
    g.add_argument("--note", default="")
    _add_bounds_flags(g)
    g = gsubs.add_parser("trace")
    g.add_argument("graph_file")
    g.add_argument("id")
    g = gsubs.add_parser("status")
    g.add_argument("graph_file")

    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return USAGE if err.code else OK

    try:
        return _dispatch(args)
    except DiagnosticsError as err:
        for d in err.diagnostics:
            print(d)
        return USAGE
    except TransformFailed as err:
        print(err)
        print(render_verdict(err.verdict), end="")
        return VIOLATION
    except (GraphError, EmptyUniverseError, SimulationError, DocsemError,
            FileNotFoundError) as err:
        print(err)
        return USAGE


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "parse":
        path, doc = _load_documents([args.file])[0]
        print(_doc_summary(path, doc))
        return OK

    if args.command == "context":
        docs = _load_documents(args.files)
        diags = check_context([d for _, d in docs])
        for d in diags:
            print(d)
        if diags:
            return USAGE
        print("context ok")
        return OK

    if args.command == "check":
        trace = parse_trace(Path(args.system).read_text(), source=args.system)
        violations = validate_system(trace)
        if violations:
            for v in violations:
                print(f"{args.system}: {v}")
            return USAGE
        docs = _load_documents(args.files)
        diags = check_context([d for _, d in docs])
        if diags:
            for d in diags:
                print(d)
            return USAGE
        all_sat = True
        for path, doc in docs:
            ok = satisfies(trace, doc, others=[d for _, d in docs])
            all_sat &= ok
            print(f"{path}: {'SAT' if ok else 'UNSAT'}")
        return OK if all_sat else VIOLATION

    if args.command == "enumerate":
        docs = [d for _, d in _load_documents(args.files)]
        bounds = derive_bounds(docs, args.max_objects, args.trace_len,
                               args.extra_classes)
        count = 0
        for trace in enumerate_traces(docs, bounds):
            count += 1
            if not args.count_only:
                print(render_trace(trace))
        if args.count_only:
            print(count)
        else:
            print(f"{count} trace(s)")
        return OK

    if args.command == "refines":
        old = [d for _, d in _load_documents(args.old)]
        new = [d for _, d in _load_documents(args.new)]
        bounds = refinement_bounds(old, new, args.max_objects, args.trace_len,
                                   args.extra_classes)
        verdict = check_refines(old, new, bounds)
        print(render_verdict(verdict), end="")
        return OK if verdict.holds else VIOLATION

    if args.command == "redundant":
        doc = _load_documents([args.file])[0][1]
        rest = [d for _, d in _load_documents(args.against)]
        bounds = refinement_bounds([doc], rest, args.max_objects,
                                   args.trace_len, args.extra_classes)
        verdict = check_redundant(doc, rest, bounds)
        print(render_verdict(verdict), end="")
        return OK if verdict.holds else VIOLATION

    if args.command == "consistent":
        docs = [d for _, d in _load_documents(args.files)]
        bounds = derive_bounds(docs, args.max_objects, args.trace_len,
                               args.extra_classes)
        verdict = check_consistent(docs, bounds)
        print(render_verdict(verdict, witness_label="witness"), end="")
        return OK if verdict.holds else VIOLATION

    if args.command == "simulate":
        docs = [d for _, d in _load_documents(args.files)]
        bounds = derive_bounds(docs, args.max_objects, args.trace_len,
                               args.extra_classes)
        trace = simulate(docs, bounds, args.seed, args.steps)
        Path(args.output).write_text(render_trace(trace))
        print(f"wrote {len(trace.steps)} event(s) to {args.output}")
        report = msc_conformance(trace, docs)
        violated = False
        for name in sorted(report):
            status = "conforms" if report[name] else "violated"
            violated |= not report[name]
            print(f"msc {name}: {status}")
        return VIOLATION if violated else OK

    if args.command == "graph":
        return _dispatch_graph(args)

    raise AssertionError(f"unhandled command {args.command}")


def _dispatch_graph(args: argparse.Namespace) -> int:
    graph_file = Path(args.graph_file)
    if args.graph_command == "init":
        init_graph(graph_file)
        print(f"initialized {graph_file}")
        return OK

    graph = load_graph(graph_file)
    if args.graph_command == "add":
        doc_id = graph.add(Path(args.file))
        graph.save(graph_file)
        print(f"added {doc_id}")
        return OK

    if args.graph_command == "transform":
        inputs = [s for s in args.inputs.split(",") if s]
        outputs = [Path(s) for s in args.outputs.split(",") if s]
        verdict = graph.transform(args.kind, inputs, outputs,
                                  args.max_objects, args.trace_len,
                                  args.extra_classes, note=args.note)
        graph.save(graph_file)
        if verdict is not None:
            print(render_verdict(verdict), end="")
        print(f"recorded {args.kind} step: {','.join(inputs)} -> "
              f"{','.join(p.name for p in outputs)}")
        return OK

    if args.graph_command == "trace":
        lines = graph.trace(args.id)
        if not lines:
            print(f"{args.id}: no recorded ancestry")
        for line in lines:
            print(line)
        return OK

    if args.graph_command == "status":
        for line in status_lines(graph):
            print(line)
        return OK

    raise AssertionError(f"unhandled graph command {args.graph_command}")


if __name__ == "__main__":
    sys.exit(main())
