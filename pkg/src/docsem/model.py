"""Finite system model: class tables, snapshots, message events, traces.

A system trace is one finite member of the system universe: an initial
snapshot followed by alternating message events and successor snapshots.
Everything here is immutable and safe to share across threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .diagnostics import Diagnostic, ParseError
from . import lex

ENV = "env"

# Runtime values: bool, int, enum literal (str), object id (str), nil (None).
Value = bool | int | str | None


# ---------------------------------------------------------------------------
# Value domains


@dataclass(frozen=True)
class BoolDomain:
    def values(self, objects: tuple[str, ...] = ()) -> tuple[Value, ...]:
        return (False, True)

    def __str__(self) -> str:
        return "Bool"


@dataclass(frozen=True)
class IntDomain:
    lo: int
    hi: int

    def values(self, objects: tuple[str, ...] = ()) -> tuple[Value, ...]:
        return tuple(range(self.lo, self.hi + 1))

    def __str__(self) -> str:
        return f"Int[{self.lo}..{self.hi}]"


@dataclass(frozen=True)
class EnumDomain:
    literals: tuple[str, ...]

    def values(self, objects: tuple[str, ...] = ()) -> tuple[Value, ...]:
        return self.literals

    def __str__(self) -> str:
        return "Enum{" + ",".join(self.literals) + "}"


@dataclass(frozen=True)
class RefDomain:
    class_name: str

    def values(self, objects: tuple[str, ...] = ()) -> tuple[Value, ...]:
        return (None,) + objects

    def __str__(self) -> str:
        return f"Ref {self.class_name}"


Domain = BoolDomain | IntDomain | EnumDomain | RefDomain

_RESERVED_LITERALS = {"true", "false", "nil", ENV}


@dataclass(frozen=True)
class OpSig:
    name: str
    params: tuple[Domain, ...] = ()


@dataclass(frozen=True)
class ClassDecl:
    name: str
    attrs: tuple[tuple[str, Domain], ...] = ()
    ops: tuple[OpSig, ...] = ()


@dataclass(frozen=True)
class ClassTable:
    """Finite class structure of a system: declarations plus generalization."""

    classes: tuple[ClassDecl, ...] = ()
    generalization: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {c.name: c for c in self.classes})

    def decl(self, name: str) -> ClassDecl:
        return self._by_name[name]

    def has(self, name: str) -> bool:
        return name in self._by_name

    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)

    def superclasses(self, name: str) -> frozenset[str]:
        """Reflexive-transitive superclass closure of ``name``."""
        seen = {name}
        frontier = [name]
        while frontier:
            cur = frontier.pop()
            for sub, sup in self.generalization:
                if sub == cur and sup not in seen:
                    seen.add(sup)
                    frontier.append(sup)
        return frozenset(seen)

    def subclasses(self, name: str) -> frozenset[str]:
        """Reflexive-transitive subclass closure of ``name``."""
        return frozenset(c.name for c in self.classes if name in self.superclasses(c.name))

    def is_kind_of(self, cls: str, ancestor: str) -> bool:
        return ancestor in self.superclasses(cls)

    def effective_attrs(self, name: str) -> tuple[tuple[str, Domain], ...]:
        """Own plus inherited attributes, superclass-first, declaration order."""
        out: list[tuple[str, Domain]] = []
        for cls in self._linearized(name):
            out.extend(self.decl(cls).attrs)
        return tuple(out)

    def effective_ops(self, name: str) -> tuple[OpSig, ...]:
        out: list[OpSig] = []
        for cls in self._linearized(name):
            out.extend(self.decl(cls).ops)
        return tuple(out)

    def find_op(self, cls: str, op: str) -> OpSig | None:
        for sig in self.effective_ops(cls):
            if sig.name == op:
                return sig
        return None

    def _linearized(self, name: str) -> list[str]:
        # Superclasses in declaration order, then the class itself.
        sups = self.superclasses(name) - {name}
        return [c.name for c in self.classes if c.name in sups] + [name]

    def validate(self) -> list[str]:
        """All structural problems with this table (empty = well formed)."""
        problems: list[str] = []
        seen: set[str] = set()
        for c in self.classes:
            if c.name in seen:
                problems.append(f"class {c.name} declared twice")
            seen.add(c.name)
        for sub, sup in sorted(self.generalization):
            for end in (sub, sup):
                if end not in seen:
                    problems.append(f"generalization mentions unknown class {end}")
        # Acyclicity via repeated leaf stripping over the declared pairs.
        pairs = {(a, b) for a, b in self.generalization if a in seen and b in seen}
        nodes = {a for a, _ in pairs} | {b for _, b in pairs}
        while True:
            leaves = {x for x in nodes if not any(a == x for a, _ in pairs)}
            if not leaves:
                break
            nodes -= leaves
            pairs = {(a, b) for a, b in pairs if b not in leaves and a not in leaves}
        if nodes:
            problems.append("generalization relation is cyclic: " + ", ".join(sorted(nodes)))
            return problems
        for c in self.classes:
            names = [a for a, _ in c.attrs] + [o.name for o in c.ops]
            dup = {x for x in names if names.count(x) > 1}
            for d in sorted(dup):
                problems.append(f"class {c.name}: member {d} declared twice")
            inherited: set[str] = set()
            for sup in sorted(self.superclasses(c.name) - {c.name}):
                if self.has(sup):
                    decl = self.decl(sup)
                    inherited |= {a for a, _ in decl.attrs} | {o.name for o in decl.ops}
            for x in sorted(set(names) & inherited):
                problems.append(f"class {c.name}: member {x} shadows an inherited member")
            for attr, dom in c.attrs:
                problems.extend(f"class {c.name}, attribute {attr}: {p}"
                                for p in self._domain_problems(dom))
            for op in c.ops:
                for dom in op.params:
                    problems.extend(f"class {c.name}, operation {op.name}: {p}"
                                    for p in self._domain_problems(dom))
        return problems

    def _domain_problems(self, dom: Domain) -> list[str]:
        if isinstance(dom, IntDomain) and dom.lo > dom.hi:
            return [f"empty integer range [{dom.lo}..{dom.hi}]"]
        if isinstance(dom, EnumDomain):
            if not dom.literals:
                return ["empty enumeration"]
            bad = [l for l in dom.literals if l in _RESERVED_LITERALS]
            if bad:
                return [f"reserved enum literal {bad[0]}"]
        if isinstance(dom, RefDomain) and not self.has(dom.class_name):
            return [f"reference to unknown class {dom.class_name}"]
        return []


# ---------------------------------------------------------------------------
# Snapshots and events


@dataclass(frozen=True)
class ObjectState:
    attrs: tuple[tuple[str, Value], ...] = ()
    active: frozenset[str] = frozenset()

    def attr(self, name: str) -> Value:
        for a, v in self.attrs:
            if a == name:
                return v
        raise KeyError(name)

    def attr_names(self) -> frozenset[str]:
        return frozenset(a for a, _ in self.attrs)


@dataclass(frozen=True)
class Snapshot:
    # objects: (object id, class name, state), in creation order.
    objects: tuple[tuple[str, str, ObjectState], ...] = ()
    links: frozenset[tuple[str, str, str]] = frozenset()  # (assoc, src, tgt)

    def __post_init__(self):
        object.__setattr__(self, "_index", {o: (c, st) for o, c, st in self.objects})

    def has_object(self, oid: str) -> bool:
        return oid in self._index

    def class_of(self, oid: str) -> str:
        return self._index[oid][0]

    def state_of(self, oid: str) -> ObjectState:
        return self._index[oid][1]

    def object_ids(self) -> tuple[str, ...]:
        return tuple(o for o, _, _ in self.objects)


@dataclass(frozen=True)
class MsgEvent:
    kind: str  # "call" | "return"
    sender: str
    receiver: str
    op: str
    args: tuple[Value, ...] = ()      # call arguments
    result: Value = None              # return payload (nil allowed)


@dataclass(frozen=True)
class SystemTrace:
    class_table: ClassTable
    initial: Snapshot
    steps: tuple[tuple[MsgEvent, Snapshot], ...] = ()

    def snapshots(self) -> tuple[Snapshot, ...]:
        return (self.initial,) + tuple(s for _, s in self.steps)

    def snapshot(self, index: int) -> Snapshot:
        return self.snapshots()[index]

    def events(self) -> tuple[MsgEvent, ...]:
        return tuple(e for e, _ in self.steps)


@dataclass(frozen=True)
class Violation:
    message: str
    step: int  # snapshot/event index the problem was detected at

    def __str__(self) -> str:
        return f"step {self.step}: {self.message}"


def conforms(value: Value, dom: Domain, snapshot: Snapshot, table: ClassTable) -> bool:
    """Does ``value`` belong to ``dom`` (references resolved in ``snapshot``)?"""
    if isinstance(dom, BoolDomain):
        return isinstance(value, bool)
    if isinstance(dom, IntDomain):
        return isinstance(value, int) and not isinstance(value, bool) and dom.lo <= value <= dom.hi
    if isinstance(dom, EnumDomain):
        return isinstance(value, str) and value in dom.literals
    if isinstance(dom, RefDomain):
        if value is None:
            return True
        return (isinstance(value, str) and snapshot.has_object(value)
                and table.is_kind_of(snapshot.class_of(value), dom.class_name))
    return False


def _check_snapshot(trace: SystemTrace, snap: Snapshot, index: int,
                    out: list[Violation]) -> None:
    table = trace.class_table
    for oid, cls, state in snap.objects:
        if oid == ENV:
            out.append(Violation("'env' may not appear as an object", index))
            continue
        if not table.has(cls):
            out.append(Violation(f"object {oid} has unknown class {cls}", index))
            continue
        declared = table.effective_attrs(cls)
        declared_names = [a for a, _ in declared]
        have = state.attr_names()
        for a in declared_names:
            if a not in have:
                out.append(Violation(f"object {oid} misses attribute {a}", index))
        for a in sorted(have - set(declared_names)):
            out.append(Violation(f"object {oid} has undeclared attribute {a}", index))
        for a, dom in declared:
            if a in have and not conforms(state.attr(a), dom, snap, table):
                out.append(Violation(
                    f"object {oid}: value of {a} outside {dom}", index))
        declared_ops = {o.name for o in table.effective_ops(cls)}
        for op in sorted(state.active - declared_ops):
            out.append(Violation(f"object {oid}: active operation {op} not declared", index))
    for assoc, src, tgt in sorted(snap.links):
        for end in (src, tgt):
            if not snap.has_object(end):
                out.append(Violation(f"link ({assoc}, {src}, {tgt}) mentions missing object {end}", index))


def validate_system(trace: SystemTrace) -> list[Violation]:
    """Every violated well-formedness invariant, with a locating step index."""
    out: list[Violation] = []
    out.extend(Violation(p, 0) for p in trace.class_table.validate())

    snaps = trace.snapshots()
    for i, snap in enumerate(snaps):
        _check_snapshot(trace, snap, i, out)

    # Population monotone, classes stable per object.
    for i in range(1, len(snaps)):
        prev, cur = snaps[i - 1], snaps[i]
        for oid, cls, _ in prev.objects:
            if not cur.has_object(oid):
                out.append(Violation(f"object population decreased: {oid} disappeared", i))
            elif cur.class_of(oid) != cls:
                out.append(Violation(f"object {oid} changed class", i))

    # Replay call/return matching; expect each snapshot's active sets to agree.
    pending: dict[tuple[str, str], str] = {}  # (receiver, op) -> caller
    expected: dict[str, set[str]] = {oid: set() for oid in snaps[0].object_ids()}
    for i, (event, snap) in enumerate(trace.steps, start=1):
        for oid in snap.object_ids():
            expected.setdefault(oid, set())
        if event.kind == "call":
            if event.receiver != ENV and not snap.has_object(event.receiver):
                out.append(Violation(f"call receiver {event.receiver} does not exist after the step", i))
            key = (event.receiver, event.op)
            if key in pending:
                out.append(Violation(
                    f"concurrent invocation of {event.op} on {event.receiver}", i))
            else:
                pending[key] = event.sender
                if event.receiver != ENV:
                    expected[event.receiver].add(event.op)
            if event.receiver != ENV and snap.has_object(event.receiver):
                cls = snap.class_of(event.receiver)
                if trace.class_table.has(cls):
                    sig = trace.class_table.find_op(cls, event.op)
                    if sig is None:
                        out.append(Violation(
                            f"operation {event.op} not declared for class {cls}", i))
                    elif len(sig.params) != len(event.args):
                        out.append(Violation(
                            f"call to {event.op}: expected {len(sig.params)} arguments", i))
                    else:
                        for k, (arg, dom) in enumerate(zip(event.args, sig.params)):
                            if not conforms(arg, dom, snap, trace.class_table):
                                out.append(Violation(
                                    f"call to {event.op}: argument {k + 1} outside {dom}", i))
        else:  # return
            key = (event.sender, event.op)
            if key not in pending:
                out.append(Violation(
                    f"unmatched return of {event.op} from {event.sender}", i))
            else:
                del pending[key]
                if event.sender != ENV:
                    expected[event.sender].discard(event.op)
        for oid, _, state in snap.objects:
            if state.active != frozenset(expected.get(oid, set())):
                out.append(Violation(
                    f"object {oid}: active set {sorted(state.active)} does not match "
                    f"call/return bookkeeping {sorted(expected.get(oid, set()))}", i))
    # Initial snapshot must be quiescent.
    for oid, _, state in snaps[0].objects:
        if state.active:
            out.append(Violation(f"object {oid}: active operations before any call", 0))
    return out


def objects_of(trace: SystemTrace, step: int, cls: str) -> frozenset[str]:
    """Objects whose class is ``cls`` or a transitive subclass, at ``step``."""
    if not trace.class_table.has(cls):
        raise KeyError(f"unknown class {cls}")
    snaps = trace.snapshots()
    if not 0 <= step < len(snaps):
        raise IndexError(f"snapshot index {step} out of range")
    kinds = trace.class_table.subclasses(cls)
    return frozenset(o for o, c, _ in snaps[step].objects if c in kinds)


def link_partners(snap: Snapshot, assoc: str, oid: str, end: str) -> frozenset[str]:
    """Objects linked to ``oid`` under ``assoc``; ``end`` names the position
    ``oid`` occupies ("source" or "target")."""
    if not snap.has_object(oid):
        raise KeyError(f"unknown object {oid}")
    if end == "source":
        return frozenset(t for a, s, t in snap.links if a == assoc and s == oid)
    if end == "target":
        return frozenset(s for a, s, t in snap.links if a == assoc and t == oid)
    raise ValueError(f"end must be 'source' or 'target', not {end!r}")


# ---------------------------------------------------------------------------
# Trace text format


def render_value(v: Value) -> str:
    if v is None:
        return "nil"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def render_domain(dom: Domain) -> str:
    return str(dom)


def _render_class_decl(c: ClassDecl, extends: str | None) -> str:
    parts = []
    for a, dom in c.attrs:
        parts.append(f"{a}: {render_domain(dom)}")
    for op in c.ops:
        parts.append(f"op {op.name}(" + ", ".join(render_domain(d) for d in op.params) + ")")
    head = c.name + (f" extends {extends}" if extends else "")
    if parts:
        return head + "(" + "; ".join(parts) + ")"
    return head


def _render_snapshot(snap: Snapshot, indent: str) -> str:
    lines = [indent + "snapshot {"]
    for oid, cls, state in snap.objects:
        attrs = "; ".join(f"{a} = {render_value(v)}" for a, v in state.attrs)
        lines.append(f"{indent}  obj {oid}: {cls} {{ {attrs} }}".replace("{  }", "{ }"))
    links = ", ".join(f"({a}, {s}, {t})" for a, s, t in sorted(snap.links))
    lines.append(f"{indent}  links {{ {links} }}".replace("{  }", "{ }"))
    active = ", ".join(f"{oid}.{op}" for oid, _, st in snap.objects for op in sorted(st.active))
    lines.append(f"{indent}  active {{ {active} }}".replace("{  }", "{ }"))
    lines.append(indent + "}")
    return "\n".join(lines)


def render_trace(trace: SystemTrace) -> str:
    """Canonical text form; ``parse_trace`` inverts it."""
    t = trace.class_table
    sup_of = {}
    for sub, sup in sorted(t.generalization):
        sup_of.setdefault(sub, sup)
    extra_gen = [(sub, sup) for sub, sup in sorted(t.generalization)
                 if sup_of.get(sub) != sup]
    lines = ["system {", "  classes {"]
    decls = [_render_class_decl(c, sup_of.get(c.name)) for c in t.classes]
    for i, d in enumerate(decls):
        lines.append("    " + d + (" ;" if i < len(decls) - 1 else ""))
    if extra_gen:
        # Multiple superclasses render as bare generalization entries.
        for sub, sup in extra_gen:
            lines[-1] += " ;"
            lines.append(f"    {sub} extends {sup}")
    lines.append("  }")
    lines.append(_render_snapshot(trace.initial, "  "))
    for event, snap in trace.steps:
        if event.kind == "call":
            args = ", ".join(render_value(a) for a in event.args)
            lines.append(f"  event call {event.sender} -> {event.receiver} : {event.op}({args})")
        else:
            lines.append(f"  event return {event.sender} -> {event.receiver} : "
                         f"{event.op}({render_value(event.result)})")
        lines.append(_render_snapshot(snap, "  "))
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_domain(ts: lex.TokenStream) -> Domain:
    tok = ts.peek()
    if ts.accept("ident", "Bool"):
        return BoolDomain()
    if ts.accept("ident", "Int"):
        ts.expect("[")
        lo = _parse_int(ts)
        ts.expect("..")
        hi = _parse_int(ts)
        ts.expect("]")
        if lo > hi:
            raise ts.error(f"empty integer range [{lo}..{hi}]", tok)
        return IntDomain(lo, hi)
    if ts.accept("ident", "Enum"):
        ts.expect("{")
        lits = [ts.ident()]
        while ts.accept(","):
            lits.append(ts.ident())
        ts.expect("}")
        return EnumDomain(tuple(lits))
    if ts.accept("ident", "Ref"):
        return RefDomain(ts.ident())
    raise ts.error(f"expected a value domain, found {tok.text!r}")


def _parse_int(ts: lex.TokenStream) -> int:
    neg = ts.accept("-") is not None
    tok = ts.expect("int")
    return -int(tok.text) if neg else int(tok.text)


def parse_value(ts: lex.TokenStream) -> Value:
    if ts.accept("ident", "true"):
        return True
    if ts.accept("ident", "false"):
        return False
    if ts.accept("ident", "nil"):
        return None
    if ts.at("int") or ts.at("-"):
        return _parse_int(ts)
    return ts.ident()  # enum literal or object id


def _parse_class_entries(ts: lex.TokenStream) -> ClassTable:
    decls: list[ClassDecl] = []
    gen: set[tuple[str, str]] = set()
    declared: set[str] = set()
    while not ts.at("}"):
        name = ts.ident()
        if ts.accept("ident", "extends"):
            gen.add((name, ts.ident()))
        attrs: list[tuple[str, Domain]] = []
        ops: list[OpSig] = []
        if ts.accept("("):
            while not ts.at(")"):
                if ts.accept("ident", "op"):
                    op_name = ts.ident()
                    ts.expect("(")
                    params: list[Domain] = []
                    while not ts.at(")"):
                        params.append(parse_domain(ts))
                        if not ts.accept(","):
                            break
                    ts.expect(")")
                    ops.append(OpSig(op_name, tuple(params)))
                else:
                    attr = ts.ident()
                    ts.expect(":")
                    attrs.append((attr, parse_domain(ts)))
                if not ts.accept(";"):
                    break
            ts.expect(")")
        if name not in declared:
            declared.add(name)
            decls.append(ClassDecl(name, tuple(attrs), tuple(ops)))
        elif attrs or ops:
            raise ts.error(f"class {name} declared twice")
        if not ts.accept(";"):
            break
    ts.expect("}")
    return ClassTable(tuple(decls), frozenset(gen))


def _parse_snapshot(ts: lex.TokenStream) -> Snapshot:
    ts.expect_keyword("snapshot")
    ts.expect("{")
    objects: list[tuple[str, str, list[tuple[str, Value]]]] = []
    while ts.at_keyword("obj"):
        ts.next()
        oid = ts.ident()
        ts.expect(":")
        cls = ts.ident()
        ts.expect("{")
        attrs: list[tuple[str, Value]] = []
        while not ts.at("}"):
            a = ts.ident()
            ts.expect("=")
            attrs.append((a, parse_value(ts)))
            if not ts.accept(";"):
                break
        ts.expect("}")
        objects.append((oid, cls, attrs))
    links: set[tuple[str, str, str]] = set()
    ts.expect_keyword("links")
    ts.expect("{")
    while not ts.at("}"):
        ts.expect("(")
        a = ts.ident()
        ts.expect(",")
        s = ts.ident()
        ts.expect(",")
        t = ts.ident()
        ts.expect(")")
        links.add((a, s, t))
        if not ts.accept(","):
            break
    ts.expect("}")
    active: dict[str, set[str]] = {}
    ts.expect_keyword("active")
    ts.expect("{")
    while not ts.at("}"):
        oid = ts.ident()
        ts.expect(".")
        op = ts.ident()
        active.setdefault(oid, set()).add(op)
        if not ts.accept(","):
            break
    ts.expect("}")
    ts.expect("}")  # closes the snapshot block
    return Snapshot(
        tuple((oid, cls, ObjectState(tuple(attrs), frozenset(active.get(oid, ()))))
              for oid, cls, attrs in objects),
        frozenset(links))


def parse_trace(text: str, source: str | None = None) -> SystemTrace:
    """Parse the system trace text format (one ``system { ... }`` block)."""
    ts = lex.stream(text, source)
    ts.expect_keyword("system")
    ts.expect("{")
    ts.expect_keyword("classes")
    ts.expect("{")
    table = _parse_class_entries(ts)
    initial = _parse_snapshot(ts)
    steps: list[tuple[MsgEvent, Snapshot]] = []
    while ts.at_keyword("event"):
        ts.next()
        kind_tok = ts.expect("ident")
        if kind_tok.text not in ("call", "return"):
            raise ts.error("event kind must be 'call' or 'return'", kind_tok)
        sender = ts.ident()
        ts.expect("->")
        receiver = ts.ident()
        ts.expect(":")
        op = ts.ident()
        ts.expect("(")
        values: list[Value] = []
        while not ts.at(")"):
            values.append(parse_value(ts))
            if not ts.accept(","):
                break
        ts.expect(")")
        if kind_tok.text == "call":
            event = MsgEvent("call", sender, receiver, op, tuple(values))
        else:
            if len(values) > 1:
                raise ts.error("a return carries a single result", kind_tok)
            event = MsgEvent("return", sender, receiver, op,
                             result=values[0] if values else None)
        steps.append((event, _parse_snapshot(ts)))
    ts.expect("}")
    if not ts.at_eof():
        raise ts.error("trailing input after system block")
    return SystemTrace(table, initial, tuple(steps))
