"""The four document kinds: object models, state transition documents,
message sequence documents, and informal text documents.

Provides abstract syntax, a parser and printer that round-trip, and the
cross-document context conditions that must hold before any semantics is
assigned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import lex, sl
from .diagnostics import Diagnostic, ParseError
from .model import (BoolDomain, ClassDecl, ClassTable, Domain, EnumDomain,
                    IntDomain, OpSig, RefDomain, Value, render_domain,
                    render_value)

_POS = dict(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Object model documents


@dataclass(frozen=True)
class OmClass:
    name: str
    extends: str | None = None
    attrs: tuple[tuple[str, Domain], ...] = ()
    ops: tuple[OpSig, ...] = ()
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class AssocEnd:
    class_name: str
    lo: int = 0
    hi: int | None = None  # None = unbounded (*)


@dataclass(frozen=True)
class AssocDecl:
    name: str
    source: AssocEnd
    target: AssocEnd
    aggregate: bool = False
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Invariant:
    name: str
    expr: sl.SlExpr
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class OmDoc:
    name: str
    classes: tuple[OmClass, ...] = ()
    assocs: tuple[AssocDecl, ...] = ()
    invariants: tuple[Invariant, ...] = ()
    kind = "om"


# ---------------------------------------------------------------------------
# State transition documents


@dataclass(frozen=True)
class OutTemplate:
    receiver_kind: str  # "self" | "param" | "nav"
    receiver: str       # parameter or association name; "" for self
    op: str
    args: tuple[sl.SlExpr, ...] = ()
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Transition:
    source: str
    op: str
    params: tuple[str, ...]
    pre: sl.SlExpr
    outputs: tuple[OutTemplate, ...]
    post: sl.SlExpr
    dest: str
    pos: tuple[int, int] | None = field(**_POS)

    def label(self) -> str:
        return f"{self.source} -> {self.dest} on {self.op}"


@dataclass(frozen=True)
class StdDoc:
    name: str
    subject: str
    states: tuple[str, ...] = ()
    initial: str = ""
    transitions: tuple[Transition, ...] = ()
    kind = "std"


# ---------------------------------------------------------------------------
# Message sequence documents


@dataclass(frozen=True)
class MscBasic:
    sender: str
    receiver: str
    msg_kind: str  # "call" | "return"
    op: str
    args: tuple[Value, ...] = ()  # for returns: () = any result, (v,) = exactly v
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class MscSeq:
    items: tuple["MscBody", ...] = ()


@dataclass(frozen=True)
class MscAlt:
    branches: tuple["MscBody", ...] = ()


@dataclass(frozen=True)
class MscLoop:
    body: "MscBody" = None  # type: ignore[assignment]


@dataclass(frozen=True)
class MscRef:
    target: str
    pos: tuple[int, int] | None = field(**_POS)


MscBody = MscBasic | MscSeq | MscAlt | MscLoop | MscRef


@dataclass(frozen=True)
class MscDoc:
    name: str
    roles: tuple[tuple[str, str], ...] = ()  # (role, class)
    body: MscBody = MscSeq()
    kind = "msc"

    def role_class(self, role: str) -> str | None:
        for r, c in self.roles:
            if r == role:
                return c
        return None


# ---------------------------------------------------------------------------
# Informal text documents


@dataclass(frozen=True)
class ItdDoc:
    name: str
    flag: str = "unvalidated"  # unvalidated | validated | redundant
    text: str = ""
    kind = "itd"


Document = OmDoc | StdDoc | MscDoc | ItdDoc

_ITD_FLAGS = ("unvalidated", "validated", "redundant")


# ---------------------------------------------------------------------------
# Parsing


def parse_document(text: str, source: str | None = None) -> Document:
    """Parse one document, dispatching on the leading keyword."""
    ts = lex.stream(text, source)
    head = ts.peek()
    if head.kind != "ident":
        raise ts.error("expected a document keyword "
                       "(objectmodel, std, msc, itd)")
    if head.text == "objectmodel":
        doc = _parse_om(ts)
    elif head.text == "std":
        doc = _parse_std(ts)
    elif head.text == "msc":
        doc = _parse_msc(ts)
    elif head.text == "itd":
        return _parse_itd(ts)
    else:
        raise ts.error(f"unknown document keyword {head.text!r}")
    if not ts.at_eof():
        raise ts.error("trailing input after document")
    problems = intra_document_problems(doc, source)
    if problems:
        raise ParseError(problems)
    return doc


def _parse_om(ts: lex.TokenStream) -> OmDoc:
    ts.expect_keyword("objectmodel")
    name = ts.ident()
    ts.expect("{")
    classes: list[OmClass] = []
    assocs: list[AssocDecl] = []
    invs: list[Invariant] = []
    while not ts.at("}"):
        tok = ts.peek()
        if ts.accept("ident", "class"):
            cname = ts.ident()
            extends = None
            if ts.accept("ident", "extends"):
                extends = ts.ident()
            attrs: list[tuple[str, Domain]] = []
            ops: list[OpSig] = []
            ts.expect("{")
            while not ts.at("}"):
                if ts.accept("ident", "attr"):
                    aname = ts.ident()
                    ts.expect(":")
                    attrs.append((aname, parse_domain_text(ts)))
                elif ts.accept("ident", "op"):
                    oname = ts.ident()
                    ts.expect("(")
                    params: list[Domain] = []
                    while not ts.at(")"):
                        params.append(parse_domain_text(ts))
                        if not ts.accept(","):
                            break
                    ts.expect(")")
                    ops.append(OpSig(oname, tuple(params)))
                else:
                    raise ts.error("expected 'attr' or 'op'")
                ts.accept(";")
            ts.expect("}")
            classes.append(OmClass(cname, extends, tuple(attrs), tuple(ops),
                                   pos=(tok.line, tok.col)))
        elif ts.accept("ident", "assoc"):
            aname = ts.ident()
            ends = []
            for marker in ("end1", "end2"):
                ts.expect_keyword(marker)
                ts.expect(":")
                cls = ts.ident()
                ts.expect("[")
                lo = int(ts.expect("int").text)
                ts.expect("..")
                if ts.accept("*"):
                    hi: int | None = None
                else:
                    hi = int(ts.expect("int").text)
                ts.expect("]")
                ends.append(AssocEnd(cls, lo, hi))
            aggregate = ts.accept("ident", "aggregate") is not None
            assocs.append(AssocDecl(aname, ends[0], ends[1], aggregate,
                                    pos=(tok.line, tok.col)))
        elif ts.accept("ident", "inv"):
            iname = ts.ident()
            ts.expect(":")
            invs.append(Invariant(iname, sl.parse_expr(ts), pos=(tok.line, tok.col)))
        else:
            raise ts.error("expected 'class', 'assoc', 'inv', or '}'")
    ts.expect("}")
    return OmDoc(name, tuple(classes), tuple(assocs), tuple(invs))


def parse_domain_text(ts: lex.TokenStream) -> Domain:
    from .model import parse_domain
    return parse_domain(ts)


def _parse_std(ts: lex.TokenStream) -> StdDoc:
    ts.expect_keyword("std")
    name = ts.ident()
    ts.expect_keyword("for")
    subject = ts.ident()
    ts.expect("{")
    ts.expect_keyword("states")
    ts.expect("{")
    states = []
    while not ts.at("}"):
        states.append(ts.ident())
        if not ts.accept(","):
            break
    ts.expect("}")
    ts.expect_keyword("initial")
    initial = ts.ident()
    transitions: list[Transition] = []
    while ts.at_keyword("trans"):
        tok = ts.next()
        src = ts.ident()
        ts.expect("->")
        dest = ts.ident()
        ts.expect_keyword("on")
        op = ts.ident()
        params: list[str] = []
        if ts.accept("("):
            while not ts.at(")"):
                params.append(ts.ident())
                if not ts.accept(","):
                    break
            ts.expect(")")
        pre: sl.SlExpr = sl.Lit(True)
        if ts.accept("ident", "pre"):
            pre = sl.parse_expr(ts)
        outputs: list[OutTemplate] = []
        if ts.accept("ident", "out"):
            ts.expect("[")
            while not ts.at("]"):
                outputs.append(_parse_template(ts))
                if not ts.accept(";"):
                    break
            ts.expect("]")
        ts.expect_keyword("post")
        post = sl.parse_expr(ts)
        transitions.append(Transition(src, op, tuple(params), pre,
                                      tuple(outputs), post, dest,
                                      pos=(tok.line, tok.col)))
    ts.expect("}")
    return StdDoc(name, subject, tuple(states), initial, tuple(transitions))


def _parse_template(ts: lex.TokenStream) -> OutTemplate:
    tok = ts.peek()
    first = ts.ident()
    ts.expect(".")
    second = ts.ident()
    if first == "self" and ts.at(".") and ts.peek(1).kind == "ident":
        ts.next()
        op = ts.ident()
        kind, receiver = "nav", second
    elif first == "self":
        kind, receiver, op = "self", "", second
    else:
        kind, receiver, op = "param", first, second
    ts.expect("(")
    args: list[sl.SlExpr] = []
    while not ts.at(")"):
        args.append(sl.parse_expr(ts))
        if not ts.accept(","):
            break
    ts.expect(")")
    return OutTemplate(kind, receiver, op, tuple(args), pos=(tok.line, tok.col))


def _parse_msc(ts: lex.TokenStream) -> MscDoc:
    ts.expect_keyword("msc")
    name = ts.ident()
    ts.expect("{")
    ts.expect_keyword("roles")
    ts.expect("{")
    roles: list[tuple[str, str]] = []
    while not ts.at("}"):
        role = ts.ident()
        ts.expect(":")
        roles.append((role, ts.ident()))
        if not ts.accept(","):
            break
    ts.expect("}")
    items: list[MscBody] = []
    while not ts.at("}"):
        items.append(_parse_msc_item(ts))
    ts.expect("}")
    body: MscBody = items[0] if len(items) == 1 else MscSeq(tuple(items))
    return MscDoc(name, tuple(roles), body)


def _parse_msc_item(ts: lex.TokenStream) -> MscBody:
    tok = ts.peek()
    if ts.accept("ident", "seq"):
        ts.expect("{")
        items = []
        while not ts.at("}"):
            items.append(_parse_msc_item(ts))
        ts.expect("}")
        return MscSeq(tuple(items))
    if ts.accept("ident", "alt"):
        ts.expect("{")
        branches: list[MscBody] = []
        current: list[MscBody] = []
        while not ts.at("}"):
            if ts.accept("|"):
                branches.append(_implicit_seq(current))
                current = []
            else:
                current.append(_parse_msc_item(ts))
        ts.expect("}")
        branches.append(_implicit_seq(current))
        if len(branches) < 2:
            raise ts.error("alt needs at least two branches", tok)
        return MscAlt(tuple(branches))
    if ts.accept("ident", "loop"):
        ts.expect("{")
        items = []
        while not ts.at("}"):
            items.append(_parse_msc_item(ts))
        ts.expect("}")
        return MscLoop(_implicit_seq(items))
    if ts.accept("ident", "ref"):
        return MscRef(ts.ident(), pos=(tok.line, tok.col))
    sender = ts.ident()
    ts.expect("->")
    receiver = ts.ident()
    ts.expect(":")
    if ts.accept("ident", "return"):
        op = ts.ident()
        ts.expect("(")
        args: list[Value] = []
        if not ts.at(")"):
            args.append(_parse_literal(ts))
        ts.expect(")")
        if len(args) > 1:
            raise ts.error("a return matches at most one result", tok)
        return MscBasic(sender, receiver, "return", op, tuple(args),
                        pos=(tok.line, tok.col))
    op = ts.ident()
    ts.expect("(")
    args = []
    while not ts.at(")"):
        args.append(_parse_literal(ts))
        if not ts.accept(","):
            break
    ts.expect(")")
    return MscBasic(sender, receiver, "call", op, tuple(args),
                    pos=(tok.line, tok.col))


def _implicit_seq(items: list[MscBody]) -> MscBody:
    return items[0] if len(items) == 1 else MscSeq(tuple(items))


def _parse_literal(ts: lex.TokenStream) -> Value:
    from .model import parse_value
    return parse_value(ts)


def _parse_itd(ts: lex.TokenStream) -> ItdDoc:
    ts.expect_keyword("itd")
    name = ts.ident()
    if not name:
        raise ts.error("itd document needs a name")
    ts.expect_keyword("state")
    ts.expect("=")
    flag_tok = ts.expect("ident")
    flag = {"active": "unvalidated"}.get(flag_tok.text, flag_tok.text)
    if flag not in _ITD_FLAGS:
        raise ts.error(f"unknown state flag {flag_tok.text!r}", flag_tok)
    open_tok = ts.expect("{")
    # Raw payload: everything between the balanced outer braces, verbatim.
    text = ts.text
    depth, i = 1, open_tok.offset + 1
    while i < len(text) and depth:
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
        i += 1
    if depth:
        raise ts.error("unterminated itd text block", open_tok)
    payload = text[open_tok.offset + 1:i - 1]
    rest = lex.tokenize(text[i:], ts.source)
    if rest[0].kind != lex.EOF:
        raise ParseError([Diagnostic("trailing input after document",
                                     rest[0].line, rest[0].col, ts.source)])
    return ItdDoc(name, flag, payload)


# ---------------------------------------------------------------------------
# Rendering


def render_document(doc: Document) -> str:
    """Canonical text; ``parse_document`` recovers a structurally equal AST."""
    if isinstance(doc, OmDoc):
        return _render_om(doc)
    if isinstance(doc, StdDoc):
        return _render_std(doc)
    if isinstance(doc, MscDoc):
        return _render_msc(doc)
    if isinstance(doc, ItdDoc):
        return f"itd {doc.name} state={doc.flag} {{{doc.text}}}\n"
    raise TypeError(f"not a document: {doc!r}")


def _render_om(doc: OmDoc) -> str:
    lines = [f"objectmodel {doc.name} {{"]
    for c in doc.classes:
        head = f"  class {c.name}" + (f" extends {c.extends}" if c.extends else "")
        lines.append(head + " {")
        for a, dom in c.attrs:
            lines.append(f"    attr {a}: {render_domain(dom)}")
        for op in c.ops:
            lines.append(f"    op {op.name}(" +
                         ", ".join(render_domain(d) for d in op.params) + ")")
        lines.append("  }")
    for a in doc.assocs:
        lines.append(f"  assoc {a.name} end1: {_render_end(a.source)} "
                     f"end2: {_render_end(a.target)}" +
                     (" aggregate" if a.aggregate else ""))
    for inv in doc.invariants:
        lines.append(f"  inv {inv.name}: {sl.render_expr(inv.expr)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_end(end: AssocEnd) -> str:
    hi = "*" if end.hi is None else str(end.hi)
    return f"{end.class_name}[{end.lo}..{hi}]"


def _render_std(doc: StdDoc) -> str:
    lines = [f"std {doc.name} for {doc.subject} {{",
             "  states { " + ", ".join(doc.states) + " }",
             f"  initial {doc.initial}"]
    for t in doc.transitions:
        part = f"  trans {t.source} -> {t.dest} on {t.op}"
        if t.params:
            part += "(" + ", ".join(t.params) + ")"
        if t.pre != sl.Lit(True):
            part += f" pre {sl.render_expr(t.pre)}"
        if t.outputs:
            part += " out [ " + " ; ".join(_render_template(o) for o in t.outputs) + " ]"
        part += f" post {sl.render_expr(t.post)}"
        lines.append(part)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_template(o: OutTemplate) -> str:
    if o.receiver_kind == "self":
        rcv = "self"
    elif o.receiver_kind == "nav":
        rcv = f"self.{o.receiver}"
    else:
        rcv = o.receiver
    return f"{rcv}.{o.op}(" + ", ".join(sl.render_expr(a) for a in o.args) + ")"


def _render_msc(doc: MscDoc) -> str:
    lines = [f"msc {doc.name} {{",
             "  roles { " + ", ".join(f"{r}: {c}" for r, c in doc.roles) + " }"]
    lines.extend(_render_body(doc.body, "  "))
    lines.append("}")
    return "\n".join(lines) + "\n"


def _render_body(body: MscBody, indent: str) -> list[str]:
    if isinstance(body, MscBasic):
        if body.msg_kind == "return":
            args = render_value(body.args[0]) if body.args else ""
            return [f"{indent}{body.sender} -> {body.receiver} : return {body.op}({args})"]
        args = ", ".join(render_value(a) for a in body.args)
        return [f"{indent}{body.sender} -> {body.receiver} : {body.op}({args})"]
    if isinstance(body, MscSeq):
        out = [indent + "seq{"]
        for item in body.items:
            out.extend(_render_body(item, indent + "  "))
        out.append(indent + "}")
        return out
    if isinstance(body, MscAlt):
        out = [indent + "alt{"]
        for i, branch in enumerate(body.branches):
            if i:
                out.append(indent + "|")
            out.extend(_render_body(branch, indent + "  "))
        out.append(indent + "}")
        return out
    if isinstance(body, MscLoop):
        out = [indent + "loop{"]
        out.extend(_render_body(body.body, indent + "  "))
        out.append(indent + "}")
        return out
    if isinstance(body, MscRef):
        return [f"{indent}ref {body.target}"]
    raise TypeError(f"not a body node: {body!r}")


# ---------------------------------------------------------------------------
# Intra-document checks


def intra_document_problems(doc: Document, source: str | None = None) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def fail(message: str, pos: tuple[int, int] | None = None):
        line, col = pos or (0, 0)
        diags.append(Diagnostic(message, line, col, source or doc.name))

    if isinstance(doc, OmDoc):
        seen: set[str] = set()
        for c in doc.classes:
            if c.name in seen:
                fail(f"class {c.name} declared twice", c.pos)
            seen.add(c.name)
            members = [a for a, _ in c.attrs] + [o.name for o in c.ops]
            for m in sorted({x for x in members if members.count(x) > 1}):
                fail(f"class {c.name}: member {m} declared twice", c.pos)
        for a in doc.assocs:
            if a.name in seen:
                fail(f"name {a.name} declared twice", a.pos)
            seen.add(a.name)
            for end in (a.source, a.target):
                if end.hi is not None and end.lo > end.hi:
                    fail(f"association {a.name}: empty multiplicity "
                         f"{end.lo}..{end.hi}", a.pos)
        inv_names = [i.name for i in doc.invariants]
        for m in sorted({x for x in inv_names if inv_names.count(x) > 1}):
            fail(f"invariant {m} declared twice")
        # Generalization acyclic within the document.
        edges = {(c.name, c.extends) for c in doc.classes if c.extends}
        for cls in sorted({c.name for c in doc.classes}):
            frontier, visited = [cls], set()
            while frontier:
                cur = frontier.pop()
                for sub, sup in edges:
                    if sub == cur:
                        if sup == cls:
                            fail(f"generalization cycle through {cls}")
                            frontier = []
                            break
                        if sup not in visited:
                            visited.add(sup)
                            frontier.append(sup)
    elif isinstance(doc, StdDoc):
        state_set = set(doc.states)
        dup = [s for s in doc.states if doc.states.count(s) > 1]
        for s in sorted(set(dup)):
            fail(f"state {s} declared twice")
        if doc.initial not in state_set:
            fail(f"initial state {doc.initial} not declared")
        for t in doc.transitions:
            for end in (t.source, t.dest):
                if end not in state_set:
                    fail(f"transition {t.label()}: state {end} not declared", t.pos)
            if len(set(t.params)) != len(t.params):
                fail(f"transition {t.label()}: duplicate parameter names", t.pos)
    elif isinstance(doc, MscDoc):
        role_names = [r for r, _ in doc.roles]
        for r in sorted({x for x in role_names if role_names.count(x) > 1}):
            fail(f"role {r} declared twice")
        declared = set(role_names)

        def walk(body: MscBody):
            if isinstance(body, MscBasic):
                for r in (body.sender, body.receiver):
                    if r not in declared:
                        fail(f"undeclared role {r}", body.pos)
            elif isinstance(body, MscSeq):
                for item in body.items:
                    walk(item)
            elif isinstance(body, MscAlt):
                for b in body.branches:
                    walk(b)
            elif isinstance(body, MscLoop):
                walk(body.body)

        walk(doc.body)
    elif isinstance(doc, ItdDoc):
        if not doc.name:
            fail("itd document needs a name")
    return diags


# ---------------------------------------------------------------------------
# Merging object models


@dataclass(frozen=True)
class MergedModel:
    """Class structure merged across the object models of a document set."""

    table: ClassTable
    assocs: tuple[AssocDecl, ...] = ()

    def assoc_ends(self) -> dict[str, tuple[str, str]]:
        return {a.name: (a.source.class_name, a.target.class_name)
                for a in self.assocs}

    def sl_context(self, mode: str = sl.SINGLE,
                   params: Mapping[str, Domain] | None = None,
                   variables: Mapping[str, str] | None = None) -> sl.SlContext:
        return sl.SlContext(mode, self.table, self.assoc_ends(),
                            params or {}, variables or {})


def merge_oms(docs: Sequence[Document]) -> tuple[MergedModel, list[Diagnostic]]:
    """Union the class structure declared by the object models in ``docs``."""
    diags: list[Diagnostic] = []
    attrs: dict[str, dict[str, Domain]] = {}
    ops: dict[str, dict[str, tuple[Domain, ...]]] = {}
    order: list[str] = []
    gen: set[tuple[str, str]] = set()
    assocs: dict[str, AssocDecl] = {}
    for doc in docs:
        if not isinstance(doc, OmDoc):
            continue
        for c in doc.classes:
            if c.name not in attrs:
                attrs[c.name] = {}
                ops[c.name] = {}
                order.append(c.name)
            for a, dom in c.attrs:
                if a in attrs[c.name] and attrs[c.name][a] != dom:
                    diags.append(Diagnostic(
                        f"attribute {c.name}.{a} declared with conflicting domains",
                        *(c.pos or (0, 0)), doc.name))
                attrs[c.name].setdefault(a, dom)
            for op in c.ops:
                if op.name in ops[c.name] and ops[c.name][op.name] != op.params:
                    diags.append(Diagnostic(
                        f"operation {c.name}.{op.name} declared with conflicting signatures",
                        *(c.pos or (0, 0)), doc.name))
                ops[c.name].setdefault(op.name, op.params)
            if c.extends:
                gen.add((c.name, c.extends))
        for a in doc.assocs:
            if a.name in assocs:
                prior = assocs[a.name]
                same = (prior.source, prior.target, prior.aggregate) == \
                       (a.source, a.target, a.aggregate)
                if not same:
                    diags.append(Diagnostic(
                        f"association {a.name} declared with conflicting ends",
                        *(a.pos or (0, 0)), doc.name))
            else:
                assocs[a.name] = a
    decls = tuple(ClassDecl(name,
                            tuple(attrs[name].items()),
                            tuple(OpSig(n, p) for n, p in ops[name].items()))
                  for name in order)
    known = set(order)
    gen = {(sub, sup) for sub, sup in gen if sub in known and sup in known} | \
          {(sub, sup) for sub, sup in gen if not (sub in known and sup in known)}
    table = ClassTable(decls, frozenset(gen))
    merged = MergedModel(table, tuple(assocs.values()))
    for p in table.validate():
        diags.append(Diagnostic(p))
    for a in assocs.values():
        for end in (a.source, a.target):
            if not table.has(end.class_name):
                diags.append(Diagnostic(
                    f"association {a.name}: unknown class {end.class_name}",
                    *(a.pos or (0, 0))))
    return merged, diags


# ---------------------------------------------------------------------------
# MSC body automaton (used by context checking and by the satisfaction check)


class MscAutomaton:
    """Nondeterministic automaton over basic messages built from an MSC body."""

    def __init__(self):
        self.eps: list[set[int]] = []
        self.edges: list[list[tuple[MscBasic, int]]] = []
        self.start = self._node()
        self.accepts: set[int] = set()

    def _node(self) -> int:
        self.eps.append(set())
        self.edges.append([])
        return len(self.eps) - 1

    def closure(self, states: Iterable[int]) -> frozenset[int]:
        seen = set(states)
        frontier = list(seen)
        while frontier:
            s = frontier.pop()
            for t in self.eps[s]:
                if t not in seen:
                    seen.add(t)
                    frontier.append(t)
        return frozenset(seen)

    def initial(self) -> frozenset[int]:
        return self.closure({self.start})

    def nullable(self) -> bool:
        return bool(self.initial() & self.accepts)

    def first_messages(self) -> set[MscBasic]:
        return {label for s in self.initial() for label, _ in self.edges[s]}


def build_automaton(doc: MscDoc,
                    resolve: Mapping[str, MscDoc] | None = None) -> MscAutomaton:
    """Compile ``doc``'s body; ``resolve`` supplies referenced documents.

    Raises ``ParseError`` on unresolvable or cyclic references.
    """
    nfa = MscAutomaton()
    resolve = resolve or {}

    def frag(body: MscBody, stack: tuple[str, ...]) -> tuple[int, set[int]]:
        if isinstance(body, MscBasic):
            a, b = nfa._node(), nfa._node()
            nfa.edges[a].append((body, b))
            return a, {b}
        if isinstance(body, MscSeq):
            start = nfa._node()
            ends = {start}
            for item in body.items:
                s, e = frag(item, stack)
                for x in ends:
                    nfa.eps[x].add(s)
                ends = e
            return start, ends
        if isinstance(body, MscAlt):
            start = nfa._node()
            ends: set[int] = set()
            for branch in body.branches:
                s, e = frag(branch, stack)
                nfa.eps[start].add(s)
                ends |= e
            return start, ends
        if isinstance(body, MscLoop):
            hub = nfa._node()
            s, e = frag(body.body, stack)
            nfa.eps[hub].add(s)
            for x in e:
                nfa.eps[x].add(hub)
            return hub, {hub}
        if isinstance(body, MscRef):
            if body.target in stack:
                raise ParseError([Diagnostic(
                    f"cyclic msc reference through {body.target}",
                    *(body.pos or (0, 0)), doc.name)])
            target = resolve.get(body.target)
            if target is None:
                raise ParseError([Diagnostic(
                    f"unresolved msc reference {body.target}",
                    *(body.pos or (0, 0)), doc.name)])
            return frag(target.body, stack + (body.target,))
        raise TypeError(f"not a body node: {body!r}")

    start, ends = frag(doc.body, (doc.name,))
    nfa.eps[nfa.start].add(start)
    nfa.accepts = ends
    return nfa


# ---------------------------------------------------------------------------
# Context conditions


def check_context(docs: Sequence[Document]) -> list[Diagnostic]:
    """Cross-document context conditions; empty list = the set is usable."""
    diags: list[Diagnostic] = []

    ids = [d.name for d in docs]
    for dup in sorted({x for x in ids if ids.count(x) > 1}):
        diags.append(Diagnostic(f"document id {dup} used twice"))

    for d in docs:
        diags.extend(intra_document_problems(d, d.name))

    merged, merge_diags = merge_oms(docs)
    diags.extend(merge_diags)
    table = merged.table

    def fail(doc: Document, message: str, pos: tuple[int, int] | None = None):
        line, col = pos or (0, 0)
        diags.append(Diagnostic(message, line, col, doc.name))

    # Domains must resolve against the merged table (Ref targets may live in
    # another object model of the set).
    for d in docs:
        if isinstance(d, OmDoc):
            for c in d.classes:
                if c.extends and not table.has(c.extends):
                    fail(d, f"class {c.name} extends unknown class {c.extends}", c.pos)
            for inv in d.invariants:
                diags.extend(sl.check_types(inv.expr, merged.sl_context(sl.SINGLE),
                                            source=d.name))

    std_subjects: dict[str, str] = {}
    for d in docs:
        if isinstance(d, StdDoc):
            if not table.has(d.subject):
                fail(d, f"unknown class {d.subject}")
                continue
            if d.subject in std_subjects:
                fail(d, f"class {d.subject} already has a state transition "
                        f"document ({std_subjects[d.subject]})")
            else:
                std_subjects[d.subject] = d.name
            for t in d.transitions:
                sig = table.find_op(d.subject, t.op)
                if sig is None:
                    fail(d, f"transition {t.label()}: operation {t.op} not "
                            f"declared for class {d.subject}", t.pos)
                    continue
                if len(sig.params) != len(t.params):
                    fail(d, f"transition {t.label()}: {t.op} takes "
                            f"{len(sig.params)} parameters", t.pos)
                    continue
                params = dict(zip(t.params, sig.params))
                variables = {"self": d.subject}
                pre_ctx = merged.sl_context(sl.SINGLE, params, variables)
                post_ctx = merged.sl_context(sl.TWO, params, variables)
                diags.extend(sl.check_types(t.pre, pre_ctx, source=d.name))
                diags.extend(sl.check_types(t.post, post_ctx, source=d.name))
                for tpl in t.outputs:
                    diags.extend(_check_template(d, tpl, t, merged, params))

    mscs = {d.name: d for d in docs if isinstance(d, MscDoc)}
    for d in docs:
        if isinstance(d, MscDoc):
            for role, cls in d.roles:
                if not table.has(cls):
                    fail(d, f"role {role}: unknown class {cls}")
            _check_msc_messages(d, table, diags)
            try:
                nfa = build_automaton(d, mscs)
            except ParseError as err:
                diags.extend(err.diagnostics)
                continue
            firsts = nfa.first_messages()
            if not firsts:
                fail(d, "msc has no starting message to act as trigger")
            elif len(firsts) > 1 or nfa.nullable():
                fail(d, "msc body must begin with a determinate basic message")
    return diags


def _check_template(doc: StdDoc, tpl: OutTemplate, t: Transition,
                    merged: MergedModel, params: Mapping[str, Domain]) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    table = merged.table

    def fail(message: str):
        line, col = tpl.pos or (t.pos or (0, 0))
        diags.append(Diagnostic(message, line, col, doc.name))

    if tpl.receiver_kind == "self":
        rcv_class: str | None = doc.subject
    elif tpl.receiver_kind == "param":
        dom = params.get(tpl.receiver)
        if dom is None:
            fail(f"output receiver {tpl.receiver} is not a parameter")
            return diags
        if not isinstance(dom, RefDomain):
            fail(f"output receiver {tpl.receiver} is not object-valued")
            return diags
        rcv_class = dom.class_name
    else:  # nav
        ends = merged.assoc_ends()
        if tpl.receiver not in ends:
            fail(f"unknown association {tpl.receiver}")
            return diags
        src_cls, tgt_cls = ends[tpl.receiver]
        if not table.is_kind_of(doc.subject, src_cls):
            fail(f"{doc.subject} cannot navigate {tpl.receiver}")
        rcv_class = tgt_cls
    if rcv_class is None or not table.has(rcv_class):
        return diags
    sig = table.find_op(rcv_class, tpl.op)
    if sig is None:
        fail(f"operation {tpl.op} not declared for class {rcv_class}")
        return diags
    if len(sig.params) != len(tpl.args):
        fail(f"output {tpl.op}: expected {len(sig.params)} arguments")
        return diags
    ctx = merged.sl_context(sl.SINGLE, params, {"self": doc.subject})
    for arg in tpl.args:
        checker = sl._Checker(ctx, doc.name)
        checker.check(arg, ctx)
        diags.extend(checker.diags)
    return diags


def _check_msc_messages(doc: MscDoc, table: ClassTable,
                        diags: list[Diagnostic]) -> None:
    def fail(message: str, pos):
        line, col = pos or (0, 0)
        diags.append(Diagnostic(message, line, col, doc.name))

    def walk(body: MscBody):
        if isinstance(body, MscBasic):
            executor = body.receiver if body.msg_kind == "call" else body.sender
            cls = doc.role_class(executor)
            if cls is None or not table.has(cls):
                return
            sig = table.find_op(cls, body.op)
            if sig is None:
                fail(f"operation {body.op} not declared for class {cls}", body.pos)
                return
            if body.msg_kind == "call":
                if len(sig.params) != len(body.args):
                    fail(f"message {body.op}: expected {len(sig.params)} arguments",
                         body.pos)
                else:
                    for k, (arg, dom) in enumerate(zip(body.args, sig.params)):
                        ok = (isinstance(dom, RefDomain) and arg is None) or \
                             _literal_conforms(arg, dom)
                        if not ok:
                            fail(f"message {body.op}: argument {k + 1} outside "
                                 f"{render_domain(dom)}", body.pos)
        elif isinstance(body, MscSeq):
            for item in body.items:
                walk(item)
        elif isinstance(body, MscAlt):
            for b in body.branches:
                walk(b)
        elif isinstance(body, MscLoop):
            walk(body.body)

    walk(doc.body)


def _literal_conforms(value: Value, dom: Domain) -> bool:
    if isinstance(dom, BoolDomain):
        return isinstance(value, bool)
    if isinstance(dom, IntDomain):
        return isinstance(value, int) and not isinstance(value, bool) \
            and dom.lo <= value <= dom.hi
    if isinstance(dom, EnumDomain):
        return isinstance(value, str) and value in dom.literals
    return value is None  # Ref: only nil can appear literally
