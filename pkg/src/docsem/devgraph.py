"""Persistent development graph: documents as nodes with states, recorded
transformation steps as evidence-bearing arcs, and requirement tracing.

Document content lives in files; the graph stores paths plus content hashes
so that edits made behind the graph's back are detected on load.
"""

from __future__ import annotations

import hashlib
import re
import time as _time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .checker import HOLDS, Verdict, check_refines
from .diagnostics import ContextError, GraphError, ParseError
from .documents import Document, ItdDoc, check_context, parse_document
from .semantics import Bounds, refinement_bounds

ACTIVE = "active"
REDUNDANT = "redundant"

_KIND_TO_TAG = {"om": "OM", "std": "STD", "msc": "MSC", "itd": "ITD"}
_TAG_TO_KIND = {v: k for k, v in _KIND_TO_TAG.items()}

_REC_KIND_TO_TAG = {"refine": "refine", "semantics-preserving": "preserve",
                    "manual-edit": "edit", "decompose": "decompose"}
_TAG_TO_REC_KIND = {v: k for k, v in _REC_KIND_TO_TAG.items()}


@dataclass(frozen=True)
class Evidence:
    outcome: str  # holds-within-bounds | fails
    bounds: tuple[int, int, int]  # objects, trace, extras


@dataclass(frozen=True)
class NodeInfo:
    doc_id: str
    kind: str  # om | std | msc | itd
    path: str  # relative to the graph directory
    digest: str
    state: str = ACTIVE
    validated: bool = False
    override: bool = False  # redundancy asserted manually, not by evidence
    stale: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class TransformRecord:
    kind: str  # refine | semantics-preserving | manual-edit | decompose
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    evidence: Evidence | None = None
    note: str = ""
    timestamp: float = field(default=0.0, compare=False)


class TransformFailed(GraphError):
    """A checked transformation did not hold; the graph is unchanged."""

    def __init__(self, message: str, verdict: Verdict):
        super().__init__(message)
        self.verdict = verdict


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class DevGraph:
    """Single-writer development graph over document files."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        self.nodes: dict[str, NodeInfo] = {}
        self.records: list[TransformRecord] = []
        self.arcs: list[tuple[str, str, int]] = []  # from, to, record index

    def __eq__(self, other) -> bool:
        if not isinstance(other, DevGraph):
            return NotImplemented
        return (self.nodes, self.records, self.arcs) == \
            (other.nodes, other.records, other.arcs)

    # -- documents -----------------------------------------------------------

    def _doc_path(self, node: NodeInfo) -> Path:
        return self.directory / node.path

    def document(self, doc_id: str) -> Document:
        node = self.nodes.get(doc_id)
        if node is None:
            raise GraphError(f"unknown document id {doc_id}")
        path = self._doc_path(node)
        if not path.exists():
            raise GraphError(f"missing document file {path}")
        return parse_document(path.read_text(), source=str(path))

    def documents(self, ids: Iterable[str]) -> list[Document]:
        return [self.document(i) for i in ids]

    def active_ids(self) -> list[str]:
        return [i for i, n in self.nodes.items() if n.state == ACTIVE]

    # -- operations ------------------------------------------------------------

    def add(self, doc_path: Path) -> str:
        """Register a parsed document file as an active node; the id comes
        from the document's declared name."""
        doc_path = Path(doc_path)
        if not doc_path.exists():
            raise GraphError(f"missing document file {doc_path}")
        doc = parse_document(doc_path.read_text(), source=str(doc_path))
        if doc.name in self.nodes:
            raise GraphError(f"duplicate document id {doc.name}")
        state, validated, override = ACTIVE, False, False
        if isinstance(doc, ItdDoc):
            validated = doc.flag == "validated"
            if doc.flag == "redundant":
                state, override = REDUNDANT, True
        rel = self._relative(doc_path)
        self.nodes[doc.name] = NodeInfo(doc.name, doc.kind, rel,
                                        _sha256(doc_path), state,
                                        validated, override)
        return doc.name

    def _relative(self, path: Path) -> str:
        try:
            return path.resolve().relative_to(self.directory.resolve()).as_posix()
        except ValueError:
            return path.as_posix()

    def transform(self, kind: str, input_ids: Sequence[str],
                  output_paths: Sequence[Path], max_objects: int = 1,
                  trace_len: int = 0, extra_classes: int = 0,
                  note: str = "", timestamp: float | None = None) -> Verdict | None:
        """Record one transformation step.

        ``refine`` and ``semantics-preserving`` run the bounded refinement
        check first and refuse (leaving the graph unchanged) when it fails;
        on success the inputs become redundant with the verdict attached.
        ``manual-edit`` and ``decompose`` record no evidence and leave the
        input states alone.
        """
        if kind not in _REC_KIND_TO_TAG:
            raise GraphError(f"unknown transformation kind {kind}")
        if not input_ids or not output_paths:
            raise GraphError("a transformation needs inputs and outputs")
        for i in input_ids:
            node = self.nodes.get(i)
            if node is None:
                raise GraphError(f"unknown document id {i}")
            if node.state != ACTIVE:
                raise GraphError(f"document {i} is not active")
            path = self._doc_path(node)
            if not path.exists():
                raise GraphError(f"missing document file {path}")
            if _sha256(path) != node.digest:
                raise GraphError(f"document {i} changed on disk; re-add it "
                                 f"before transforming")
        input_docs = self.documents(input_ids)
        output_docs = []
        for p in output_paths:
            p = Path(p)
            if not p.exists():
                raise GraphError(f"missing document file {p}")
            output_docs.append(parse_document(p.read_text(), source=str(p)))
        for doc in output_docs:
            if doc.name in self.nodes:
                raise GraphError(f"duplicate document id {doc.name}")
        names = [d.name for d in output_docs]
        if len(set(names)) != len(names):
            raise GraphError("output documents share a name")

        verdict: Verdict | None = None
        evidence: Evidence | None = None
        if kind in ("refine", "semantics-preserving"):
            bounds = refinement_bounds(input_docs, output_docs,
                                       max_objects, trace_len, extra_classes)
            verdict = check_refines(input_docs, output_docs, bounds)
            if not verdict.holds:
                raise TransformFailed(
                    f"{kind} from {','.join(input_ids)} does not hold within "
                    f"bounds {bounds.describe()}", verdict)
            if kind == "semantics-preserving":
                back_bounds = refinement_bounds(output_docs, input_docs,
                                                max_objects, trace_len,
                                                extra_classes)
                back = check_refines(output_docs, input_docs, back_bounds)
                if not back.holds:
                    raise TransformFailed(
                        "semantics-preserving step must refine in both "
                        "directions", back)
            evidence = Evidence(verdict.outcome,
                                (max_objects, trace_len, extra_classes))

        for p in output_paths:
            self.add(Path(p))
        record = TransformRecord(kind, tuple(input_ids), tuple(names),
                                 evidence, note,
                                 _time.time() if timestamp is None else timestamp)
        self.records.append(record)
        rec_idx = len(self.records) - 1
        for i in input_ids:
            for o in names:
                self.arcs.append((i, o, rec_idx))
        if kind in ("refine", "semantics-preserving"):
            for i in input_ids:
                self.nodes[i] = replace(self.nodes[i], state=REDUNDANT)
        problems = self.validate()
        if problems:
            raise GraphError("graph invariant violated: " + problems[0])
        return verdict

    def trace(self, doc_id: str) -> list[str]:
        """Ancestry report: every path of transformation steps leading to
        ``doc_id``, deepest ancestors first, deterministically ordered."""
        if doc_id not in self.nodes:
            raise GraphError(f"unknown document id {doc_id}")
        lines: list[str] = []

        def walk(node: str, suffix: list[str]) -> None:
            incoming = sorted((frm, idx) for frm, to, idx in self.arcs if to == node)
            if not incoming:
                if suffix:
                    lines.extend(suffix)
                return
            for frm, idx in incoming:
                rec = self.records[idx]
                ev = f" [{rec.evidence.outcome}]" if rec.evidence else ""
                note = f" ({rec.note})" if rec.note else ""
                step = f"{frm} -{rec.kind}{ev}-> {node}{note}"
                walk(frm, [step] + suffix)

        walk(doc_id, [])
        return lines

    # -- invariants --------------------------------------------------------------

    def validate(self) -> list[str]:
        problems: list[str] = []
        for frm, to, idx in self.arcs:
            for end in (frm, to):
                if end not in self.nodes:
                    problems.append(f"arc references unknown node {end}")
            if not 0 <= idx < len(self.records):
                problems.append(f"arc references unknown record {idx}")
        # Acyclicity.
        adjacency: dict[str, set[str]] = {}
        for frm, to, _ in self.arcs:
            adjacency.setdefault(frm, set()).add(to)
        visiting: set[str] = set()
        done: set[str] = set()

        def dfs(node: str) -> bool:
            visiting.add(node)
            for nxt in adjacency.get(node, ()):
                if nxt in visiting:
                    return False
                if nxt not in done and not dfs(nxt):
                    return False
            visiting.discard(node)
            done.add(node)
            return True

        for node in sorted(adjacency):
            if node not in done and not dfs(node):
                problems.append("dependency arcs form a cycle")
                break
        for rec in self.records:
            if not rec.inputs or not rec.outputs:
                problems.append("record without inputs or outputs")
            if rec.kind in ("refine", "semantics-preserving") and rec.evidence \
                    and rec.evidence.outcome != HOLDS:
                problems.append(f"{rec.kind} record with non-holding evidence")
        for node in self.nodes.values():
            if node.state == REDUNDANT and not node.override:
                backed = any(
                    rec.kind in ("refine", "semantics-preserving")
                    and rec.evidence is not None
                    and rec.evidence.outcome == HOLDS
                    and node.doc_id in rec.inputs
                    for rec in self.records)
                if not backed:
                    problems.append(
                        f"redundant node {node.doc_id} lacks evidence or "
                        f"a manual override")
        return problems

    # -- persistence ----------------------------------------------------------------

    def save(self, path: Path) -> None:
        problems = self.validate()
        if problems:
            raise GraphError("refusing to save an invalid graph: " + problems[0])
        lines = ["GRAPH v1"]
        for node in self.nodes.values():
            line = (f"DOC id={node.doc_id} kind={_KIND_TO_TAG[node.kind]} "
                    f"path={node.path} hash={node.digest} state={node.state} "
                    f"validated={int(node.validated)}")
            if node.override:
                line += " override=manual"
            lines.append(line)
        for idx, rec in enumerate(self.records):
            if rec.evidence is None:
                verdict, bounds = "none", "0,0,0"
            else:
                verdict = "holds" if rec.evidence.outcome == HOLDS else "fails"
                bounds = ",".join(str(b) for b in rec.evidence.bounds)
            note = rec.note.replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f"REC idx={idx} kind={_REC_KIND_TO_TAG[rec.kind]} "
                         f"in={','.join(rec.inputs)} out={','.join(rec.outputs)} "
                         f"verdict={verdict} bounds={bounds} note=\"{note}\"")
        for frm, to, idx in self.arcs:
            lines.append(f"ARC from={frm} to={to} rec={idx}")
        Path(path).write_text("\n".join(lines) + "\n")


_DOC_RE = re.compile(
    r"DOC id=(\S+) kind=(OM|STD|MSC|ITD) path=(\S+) hash=([0-9a-f]+) "
    r"state=(active|redundant) validated=([01])( override=manual)?\s*$")
_REC_RE = re.compile(
    r"REC idx=(\d+) kind=(refine|preserve|edit|decompose) in=(\S+) out=(\S+) "
    r"verdict=(holds|fails|none) bounds=(\d+),(\d+),(\d+) "
    r"note=\"((?:[^\"\\]|\\.)*)\"\s*$")
_ARC_RE = re.compile(r"ARC from=(\S+) to=(\S+) rec=(\d+)\s*$")


def load_graph(path: Path) -> DevGraph:
    """Read a manifest back; referenced files must exist, and files whose
    content drifted from the recorded hash are flagged stale."""
    path = Path(path)
    if not path.exists():
        raise GraphError(f"missing graph file {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "GRAPH v1":
        raise GraphError(f"{path}: unsupported graph manifest version")
    graph = DevGraph(path.parent)
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("DOC "):
            m = _DOC_RE.match(line)
            if not m:
                raise GraphError(f"{path}:{lineno}: malformed DOC line")
            doc_id, tag, rel, digest, state, validated, override = m.groups()
            doc_file = graph.directory / rel
            if not doc_file.exists():
                raise GraphError(f"{path}:{lineno}: missing document file {doc_file}")
            stale = _sha256(doc_file) != digest
            graph.nodes[doc_id] = NodeInfo(doc_id, _TAG_TO_KIND[tag], rel,
                                           digest, state,
                                           validated == "1",
                                           override is not None, stale=stale)
        elif line.startswith("REC "):
            m = _REC_RE.match(line)
            if not m:
                raise GraphError(f"{path}:{lineno}: malformed REC line")
            idx, tag, ins, outs, verdict, b0, b1, b2, note = m.groups()
            if int(idx) != len(graph.records):
                raise GraphError(f"{path}:{lineno}: record indices out of order")
            evidence = None
            if verdict != "none":
                outcome = HOLDS if verdict == "holds" else "fails"
                evidence = Evidence(outcome, (int(b0), int(b1), int(b2)))
            note = note.replace('\\"', '"').replace("\\\\", "\\")
            graph.records.append(TransformRecord(
                _TAG_TO_REC_KIND[tag], tuple(ins.split(",")),
                tuple(outs.split(",")), evidence, note))
        elif line.startswith("ARC "):
            m = _ARC_RE.match(line)
            if not m:
                raise GraphError(f"{path}:{lineno}: malformed ARC line")
            frm, to, idx = m.groups()
            graph.arcs.append((frm, to, int(idx)))
        else:
            raise GraphError(f"{path}:{lineno}: unknown manifest line")
    problems = graph.validate()
    if problems:
        raise GraphError(f"{path}: {problems[0]}")
    return graph


def init_graph(path: Path) -> DevGraph:
    graph = DevGraph(Path(path).parent)
    graph.save(path)
    return graph


def status_lines(graph: DevGraph) -> list[str]:
    lines = []
    for node in graph.nodes.values():
        flags = [node.state, "validated" if node.validated else "unvalidated"]
        if node.override:
            flags.append("override=manual")
        if node.stale:
            flags.append("stale")
        lines.append(f"{node.doc_id} [{node.kind}] {node.path}: {', '.join(flags)}")
    lines.append(f"{len(graph.records)} transformation record(s), "
                 f"{len(graph.arcs)} arc(s)")
    return lines
