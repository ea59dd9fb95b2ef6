"""Satisfaction relations and bounded enumeration of the system universe.

A document denotes the set of all system traces obeying its constraints;
a document set denotes the intersection.  Within explicit finiteness bounds
both sets become enumerable: ``universe`` yields every well-formed trace
inside the bounds, ``enumerate_traces`` filters it by satisfaction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from . import sl
from .diagnostics import ContextError, Diagnostic, EmptyUniverseError, EvalError
from .documents import (AssocDecl, Document, ItdDoc, MergedModel, MscBasic,
                        MscDoc, OmDoc, OutTemplate, StdDoc, build_automaton,
                        check_context, merge_oms)
from .model import (ENV, BoolDomain, ClassDecl, ClassTable, Domain, MsgEvent,
                    ObjectState, OpSig, RefDomain, Snapshot, SystemTrace,
                    Value, link_partners, objects_of, validate_system)

EXTRA_ATTR = "flag"


# ---------------------------------------------------------------------------
# Bounds


@dataclass(frozen=True)
class Bounds:
    """Finite-universe parameters: population and trace-length caps plus the
    class structure traces may use (base classes and optional extras)."""

    max_objects: int
    trace_len: int
    extra_classes: int
    base: MergedModel
    extra_names: tuple[str, ...] = ()

    def __post_init__(self):
        if min(self.max_objects, self.trace_len, self.extra_classes) < 0:
            raise ValueError("bounds must be non-negative")
        if len(self.extra_names) != self.extra_classes:
            raise ValueError("one extra class name per extra class")

    def table_with_extras(self, count: int) -> ClassTable:
        extras = tuple(ClassDecl(name, ((EXTRA_ATTR, BoolDomain()),), ())
                       for name in self.extra_names[:count])
        return ClassTable(self.base.table.classes + extras,
                          self.base.table.generalization)

    def tables(self) -> Iterator[ClassTable]:
        for j in range(self.extra_classes + 1):
            yield self.table_with_extras(j)

    def describe(self) -> str:
        return (f"objects={self.max_objects} trace={self.trace_len} "
                f"extras={self.extra_classes}")


def _extra_names(taken: set[str], pool: Sequence[str], count: int) -> tuple[str, ...]:
    names: list[str] = []
    for candidate in pool:
        if len(names) == count:
            break
        if candidate not in taken and candidate not in names:
            names.append(candidate)
    i = 1
    while len(names) < count:
        candidate = f"X{i}"
        if candidate not in taken and candidate not in names:
            names.append(candidate)
        i += 1
    return tuple(names)


def derive_bounds(docs: Sequence[Document], max_objects: int, trace_len: int,
                  extra_classes: int = 0,
                  name_pool: Sequence[str] = ()) -> Bounds:
    """Build bounds whose class structure is the merge of ``docs``.

    ``name_pool`` donates names for the extra classes before fresh ones are
    invented; extra classes always carry one boolean attribute and no
    operations, whatever their name.
    """
    merged, diags = merge_oms(docs)
    if diags:
        raise ContextError(diags)
    taken = set(merged.table.names())
    return Bounds(max_objects, trace_len, extra_classes, merged,
                  _extra_names(taken, name_pool, extra_classes))


def refinement_bounds(old: Sequence[Document], new: Sequence[Document],
                      max_objects: int, trace_len: int,
                      extra_classes: int = 0) -> Bounds:
    """Bounds for checking that ``new`` refines ``old``.

    The universe is built over the classes the refining set mentions; extra
    slots borrow the names the refined set mentions on top of that, so the
    search can exhibit systems where such a class exists with a different
    shape — the loose reading under which unmentioned classes may exist but
    need not match anything.
    """
    pool = [c.name for d in old if isinstance(d, OmDoc) for c in d.classes]
    return derive_bounds(new, max_objects, trace_len, extra_classes, pool)


# ---------------------------------------------------------------------------
# Satisfaction: object models


def _multiplicity_ok(snap: Snapshot, table: ClassTable, assoc: AssocDecl) -> bool:
    def members(cls: str) -> frozenset[str]:
        if not table.has(cls):
            return frozenset()
        kinds = table.subclasses(cls)
        return frozenset(o for o, c, _ in snap.objects if c in kinds)

    sources = members(assoc.source.class_name)
    targets = members(assoc.target.class_name)
    for a, s, t in snap.links:
        if a != assoc.name:
            continue
        if s not in sources or t not in targets:
            return False  # link endpoints outside the declared end classes
    for o in sources:
        n = sum(1 for a, s, _ in snap.links if a == assoc.name and s == o)
        lo, hi = assoc.target.lo, assoc.target.hi
        if n < lo or (hi is not None and n > hi):
            return False
    for o in targets:
        n = sum(1 for a, _, t in snap.links if a == assoc.name and t == o)
        lo, hi = assoc.source.lo, assoc.source.hi
        if n < lo or (hi is not None and n > hi):
            return False
    return True


def _aggregates_acyclic(snap: Snapshot, aggregate_names: frozenset[str]) -> bool:
    edges = [(s, t) for a, s, t in snap.links if a in aggregate_names]
    adjacency: dict[str, set[str]] = {}
    for s, t in edges:
        adjacency.setdefault(s, set()).add(t)
    visited: set[str] = set()
    path: set[str] = set()

    def dfs(node: str) -> bool:
        visited.add(node)
        path.add(node)
        for nxt in adjacency.get(node, ()):
            if nxt in path:
                return False
            if nxt not in visited and not dfs(nxt):
                return False
        path.discard(node)
        return True

    return all(dfs(n) for n in list(adjacency) if n not in visited)


def satisfies_om(trace: SystemTrace, doc: OmDoc) -> bool:
    """Signature inclusion, multiplicities, aggregate acyclicity, invariants."""
    table = trace.class_table
    for c in doc.classes:
        if not table.has(c.name):
            return False
        have_attrs = dict(table.effective_attrs(c.name))
        for a, dom in c.attrs:
            if have_attrs.get(a) != dom:
                return False
        have_ops = {o.name: o.params for o in table.effective_ops(c.name)}
        for op in c.ops:
            if have_ops.get(op.name) != op.params:
                return False
        if c.extends and not table.is_kind_of(c.name, c.extends):
            return False
    aggregate_names = frozenset(a.name for a in doc.assocs if a.aggregate)
    for snap in trace.snapshots():
        for assoc in doc.assocs:
            if not _multiplicity_ok(snap, table, assoc):
                return False
        if aggregate_names and not _aggregates_acyclic(snap, aggregate_names):
            return False
    for inv in doc.invariants:
        for step in range(len(trace.snapshots())):
            try:
                if not sl.eval_single(inv.expr, trace, step):
                    return False
            except EvalError:
                return False  # an undefined invariant does not hold
    return True


# ---------------------------------------------------------------------------
# Satisfaction: state transition documents


def _std_context_diags(trace: SystemTrace, doc: StdDoc) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    table = trace.class_table
    if not table.has(doc.subject):
        return [Diagnostic(f"unknown class {doc.subject}", source=doc.name)]
    for t in doc.transitions:
        sig = table.find_op(doc.subject, t.op)
        if sig is None or len(sig.params) != len(t.params):
            diags.append(Diagnostic(
                f"transition {t.label()}: operation {t.op} not declared "
                f"for class {doc.subject}", *(t.pos or (0, 0)), doc.name))
    return diags


def _instantiate_outputs(trace: SystemTrace, doc: StdDoc, outputs: Sequence[OutTemplate],
                         pre_step: int, oid: str,
                         params: Mapping[str, Value]) -> list[tuple[frozenset[str], str, tuple[Value, ...]]] | None:
    """Resolve templates to (allowed receivers, op, argument values) at the
    snapshot preceding the triggering call; None = not instantiable."""
    snap = trace.snapshot(pre_step)
    out = []
    for tpl in outputs:
        if tpl.receiver_kind == "self":
            receivers = frozenset({oid})
        elif tpl.receiver_kind == "param":
            v = params.get(tpl.receiver)
            if not isinstance(v, str) or v is None:
                return None
            receivers = frozenset({v})
        else:
            if not snap.has_object(oid):
                return None
            receivers = link_partners(snap, tpl.receiver, oid, "source")
            if not receivers:
                return None
        try:
            args = tuple(sl.eval_term(a, trace, pre_step,
                                      env={"self": oid} if snap.has_object(oid) else {},
                                      params=params)
                         for a in tpl.args)
        except EvalError:
            return None
        out.append((receivers, tpl.op, args))
    return out


def satisfies_std(trace: SystemTrace, doc: StdDoc) -> bool:
    """Every subject-class object admits an accepting run of the lifecycle.

    A run starts in the initial control state at creation; each received
    call must take some transition whose precondition, postcondition (over
    the step's snapshot pair), and output obligations hold.  Calls the
    object sends are legal exactly as transition outputs, in order, before
    its next received call; returns it sends are completion bookkeeping and
    are exempt.  Objects of other classes are unconstrained.
    """
    diags = _std_context_diags(trace, doc)
    if diags:
        raise ContextError(diags)
    events = trace.events()
    last = len(trace.snapshots()) - 1
    for oid in sorted(objects_of(trace, last, doc.subject)):
        received = [i for i, e in enumerate(events, start=1)
                    if e.kind == "call" and e.receiver == oid]
        sent = [i for i, e in enumerate(events, start=1)
                if e.kind == "call" and e.sender == oid]
        windows: list[list[int]] = []
        boundaries = received + [len(events) + 1]
        if any(j < boundaries[0] for j in sent):
            return False  # sends with no authorizing transition
        for k in range(len(received)):
            lo, hi = boundaries[k], boundaries[k + 1]
            windows.append([j for j in sent if lo < j < hi])
        states = {doc.initial}
        for k, i in enumerate(received):
            event = events[i - 1]
            window = [events[j - 1] for j in windows[k]]
            nxt: set[str] = set()
            for t in doc.transitions:
                if t.source not in states or t.op != event.op:
                    continue
                if len(t.params) != len(event.args):
                    continue
                params = dict(zip(t.params, event.args))
                env = {"self": oid}
                try:
                    if not sl.eval_single(t.pre, trace, i - 1, env, params):
                        continue
                except EvalError:
                    continue
                try:
                    if not sl.eval_pair(t.post, trace, i - 1, i, params, env):
                        continue
                except EvalError:
                    continue
                resolved = _instantiate_outputs(trace, doc, t.outputs, i - 1, oid, params)
                if resolved is None or len(resolved) != len(window):
                    continue
                ok = all(w.receiver in receivers and w.op == op and w.args == args
                         for w, (receivers, op, args) in zip(window, resolved))
                if ok:
                    nxt.add(t.dest)
            if not nxt:
                return False
            states = nxt
    return True


# ---------------------------------------------------------------------------
# Satisfaction: message sequence documents


def _msc_context_diags(trace: SystemTrace, doc: MscDoc,
                       others: Mapping[str, MscDoc]) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    for role, cls in doc.roles:
        if not trace.class_table.has(cls):
            diags.append(Diagnostic(f"role {role}: unknown class {cls}",
                                    source=doc.name))
    return diags


def _message_matches(label: MscBasic, event: MsgEvent,
                     binding: Mapping[str, str]) -> bool:
    if label.msg_kind != event.kind or label.op != event.op:
        return False
    if binding[label.sender] != event.sender or binding[label.receiver] != event.receiver:
        return False
    if event.kind == "call":
        return tuple(label.args) == tuple(event.args)
    return not label.args or label.args[0] == event.result


def satisfies_msc(trace: SystemTrace, doc: MscDoc,
                  others: Sequence[Document] = ()) -> bool:
    """Universal triggered reading: wherever the starting message occurs
    between suitably bound objects, some branch or unrolling of the body
    must complete.  Events between two bound objects that deviate from the
    expected next message defeat that attempt (completeness over the bound
    objects); all other events interleave freely.
    """
    resolver = {d.name: d for d in others if isinstance(d, MscDoc)}
    resolver.setdefault(doc.name, doc)
    diags = _msc_context_diags(trace, doc, resolver)
    if diags:
        raise ContextError(diags)
    nfa = build_automaton(doc, resolver)  # raises ContextError-grade ParseError
    firsts = nfa.first_messages()
    if len(firsts) != 1 or nfa.nullable():
        raise ContextError([Diagnostic(
            "msc body must begin with a determinate basic message",
            source=doc.name)])
    (trigger,) = firsts

    events = trace.events()
    for i, event in enumerate(events, start=1):
        if event.kind != trigger.msg_kind or event.op != trigger.op:
            continue
        if event.kind == "call" and tuple(trigger.args) != tuple(event.args):
            continue
        if event.kind == "return" and trigger.args and trigger.args[0] != event.result:
            continue
        base = {}
        if trigger.sender == trigger.receiver:
            continue  # roles are distinct objects; such a trigger never binds
        base[trigger.sender] = event.sender
        base[trigger.receiver] = event.receiver
        if event.sender == event.receiver or ENV in (event.sender, event.receiver):
            continue
        ok_classes = True
        for role, oid in base.items():
            cls = doc.role_class(role)
            if oid not in objects_of(trace, i, cls):
                ok_classes = False
                break
        if not ok_classes:
            continue
        free_roles = [(r, c) for r, c in doc.roles if r not in base]
        candidate_sets = [sorted(objects_of(trace, i, c)) for _, c in free_roles]
        for choice in itertools.product(*candidate_sets):
            bound = list(base.values()) + list(choice)
            if len(set(bound)) != len(bound):
                continue  # bindings are injective
            binding = dict(base)
            binding.update({r: o for (r, _), o in zip(free_roles, choice)})
            if not _match_from(nfa, trace, i, binding):
                return False
    return True


def _match_from(nfa, trace: SystemTrace, start: int,
                binding: Mapping[str, str]) -> bool:
    bound = set(binding.values())
    events = trace.events()
    states = nfa.initial()
    for j in range(start, len(events) + 1):
        event = events[j - 1]
        if event.sender not in bound or event.receiver not in bound:
            continue
        nxt: set[int] = set()
        for s in states:
            for label, target in nfa.edges[s]:
                if _message_matches(label, event, binding):
                    nxt.add(target)
        if not nxt:
            return False
        states = nfa.closure(nxt)
        if states & nfa.accepts:
            return True
    return False


# ---------------------------------------------------------------------------
# Dispatch and document sets


def satisfies(trace: SystemTrace, doc: Document,
              others: Sequence[Document] = ()) -> bool:
    """Kind dispatch; informal documents constrain nothing.

    Raises :class:`ContextError` when the document has no semantics against
    this trace (unknown subject class, unresolved reference, ...).
    """
    if isinstance(doc, ItdDoc):
        return True
    if isinstance(doc, OmDoc):
        from .documents import intra_document_problems
        problems = intra_document_problems(doc)
        if problems:
            raise ContextError(problems)
        return satisfies_om(trace, doc)
    if isinstance(doc, StdDoc):
        return satisfies_std(trace, doc)
    if isinstance(doc, MscDoc):
        return satisfies_msc(trace, doc, others)
    raise TypeError(f"not a document: {doc!r}")


def satisfies_set(trace: SystemTrace, docs: Sequence[Document],
                  checked: bool = False) -> bool:
    """Membership in the intersection semantics of ``docs``.

    A member document that has no semantics against this trace's class
    structure counts as unsatisfied.  Pass ``checked=True`` when the set's
    context conditions were already verified.
    """
    if not checked:
        diags = check_context(list(docs))
        if diags:
            raise ContextError(diags)
    for doc in docs:
        try:
            if not satisfies(trace, doc, others=docs):
                return False
        except (ContextError,) as _:
            return False
    return True


# ---------------------------------------------------------------------------
# Bounded universe


def _canonical_objects(table: ClassTable, counts: Mapping[str, int]) -> tuple[tuple[str, str], ...]:
    out: list[tuple[str, str]] = []
    for cls in table.names():
        for i in range(1, counts.get(cls, 0) + 1):
            out.append((f"{cls}_{i}", cls))
    return tuple(out)


def _ref_candidates(objects: Sequence[tuple[str, str]], table: ClassTable,
                    cls: str) -> tuple[str, ...]:
    return tuple(o for o, c in objects if table.is_kind_of(c, cls))


def _domain_values(dom: Domain, objects: Sequence[tuple[str, str]],
                   table: ClassTable) -> tuple[Value, ...]:
    if isinstance(dom, RefDomain):
        return (None,) + _ref_candidates(objects, table, dom.class_name)
    return dom.values()


def _valuations(objects: Sequence[tuple[str, str]],
                table: ClassTable) -> Iterator[dict[str, tuple[tuple[str, Value], ...]]]:
    slots: list[tuple[str, str, Domain]] = []
    for oid, cls in objects:
        for attr, dom in table.effective_attrs(cls):
            slots.append((oid, attr, dom))
    value_lists = [_domain_values(dom, objects, table) for _, _, dom in slots]
    for combo in itertools.product(*value_lists):
        valuation: dict[str, list[tuple[str, Value]]] = {oid: [] for oid, _ in objects}
        for (oid, attr, _), v in zip(slots, combo):
            valuation[oid].append((attr, v))
        yield {oid: tuple(pairs) for oid, pairs in valuation.items()}


def _link_pairs(objects: Sequence[tuple[str, str]], table: ClassTable,
                assocs: Sequence[AssocDecl]) -> list[tuple[str, str, str]]:
    pairs: list[tuple[str, str, str]] = []
    for a in assocs:
        for src in _ref_candidates(objects, table, a.source.class_name):
            for tgt in _ref_candidates(objects, table, a.target.class_name):
                pairs.append((a.name, src, tgt))
    return pairs


def _link_sets(pairs: Sequence[tuple[str, str, str]]) -> Iterator[frozenset[tuple[str, str, str]]]:
    for mask in range(1 << len(pairs)):
        yield frozenset(p for k, p in enumerate(pairs) if mask >> k & 1)


def _snapshot(objects: Sequence[tuple[str, str]],
              valuation: Mapping[str, tuple[tuple[str, Value], ...]],
              links: frozenset[tuple[str, str, str]],
              active: Mapping[str, frozenset[str]]) -> Snapshot:
    return Snapshot(tuple((oid, cls, ObjectState(valuation[oid], active.get(oid, frozenset())))
                          for oid, cls in objects), links)


def _events(table: ClassTable, objects: Sequence[tuple[str, str]],
            pending: Mapping[tuple[str, str], str]) -> Iterator[MsgEvent]:
    for receiver, cls in objects:
        for sig in table.effective_ops(cls):
            if (receiver, sig.name) in pending:
                continue
            value_lists = [_domain_values(d, objects, table) for d in sig.params]
            for sender in (ENV,) + tuple(o for o, _ in objects):
                for args in itertools.product(*value_lists):
                    yield MsgEvent("call", sender, receiver, sig.name, tuple(args))
    for (receiver, op), caller in pending.items():
        yield MsgEvent("return", receiver, caller, op, result=None)


def universe(bounds: Bounds) -> Iterator[SystemTrace]:
    """Every well-formed trace within ``bounds``, deterministically ordered.

    The family is exhaustive over class tables (base plus up to the allowed
    extras), constant canonically-named populations, attribute valuations,
    link sets over the declared associations, and event sequences: calls to
    live objects from the environment or a live object with conforming
    arguments, and returns (carrying nil) to the original caller.
    """
    assocs = bounds.base.assocs
    for table in bounds.tables():
        count_ranges = [range(bounds.max_objects + 1) for _ in table.names()]
        for counts in itertools.product(*count_ranges):
            population = dict(zip(table.names(), counts))
            objects = _canonical_objects(table, population)
            pairs = _link_pairs(objects, table, assocs)
            for valuation in _valuations(objects, table):
                for links in _link_sets(pairs):
                    initial = _snapshot(objects, valuation, links, {})
                    yield from _extend(bounds, table, objects, pairs,
                                       SystemTrace(table, initial), {})


def _extend(bounds: Bounds, table: ClassTable,
            objects: Sequence[tuple[str, str]],
            pairs: Sequence[tuple[str, str, str]],
            trace: SystemTrace,
            pending: Mapping[tuple[str, str], str]) -> Iterator[SystemTrace]:
    yield trace
    if len(trace.steps) == bounds.trace_len:
        return
    active: dict[str, frozenset[str]] = {}
    for receiver, op in pending:
        active[receiver] = active.get(receiver, frozenset()) | {op}
    for event in _events(table, objects, pending):
        if event.kind == "call":
            nxt_pending = dict(pending)
            nxt_pending[(event.receiver, event.op)] = event.sender
            nxt_active = dict(active)
            nxt_active[event.receiver] = nxt_active.get(event.receiver, frozenset()) | {event.op}
        else:
            nxt_pending = {k: v for k, v in pending.items()
                           if k != (event.sender, event.op)}
            nxt_active = dict(active)
            nxt_active[event.sender] = nxt_active.get(event.sender, frozenset()) - {event.op}
        for valuation in _valuations(objects, table):
            for links in _link_sets(pairs):
                snap = _snapshot(objects, valuation, links, nxt_active)
                extended = SystemTrace(table, trace.initial,
                                       trace.steps + ((event, snap),))
                yield from _extend(bounds, table, objects, pairs,
                                   extended, nxt_pending)


def within_bounds(trace: SystemTrace, bounds: Bounds) -> bool:
    """Membership in the bounded universe family enumerated above."""
    if trace.class_table not in set(bounds.tables()):
        return False
    if len(trace.steps) > bounds.trace_len:
        return False
    if validate_system(trace):
        return False
    table = trace.class_table
    counts: dict[str, int] = {}
    for _, cls, _ in trace.initial.objects:
        counts[cls] = counts.get(cls, 0) + 1
    if any(n > bounds.max_objects for n in counts.values()):
        return False
    expected = _canonical_objects(table, counts)
    if tuple((o, c) for o, c, _ in trace.initial.objects) != expected:
        return False
    allowed_pairs = set(_link_pairs(expected, table, bounds.base.assocs))
    for snap in trace.snapshots():
        if tuple((o, c) for o, c, _ in snap.objects) != expected:
            return False  # only constant populations are enumerated
        if not set(snap.links) <= allowed_pairs:
            return False
    pending: dict[tuple[str, str], str] = {}
    for event, _ in trace.steps:
        if event.kind == "call":
            if event.receiver == ENV:
                return False
            pending[(event.receiver, event.op)] = event.sender
        else:
            caller = pending.pop((event.sender, event.op), None)
            if caller != event.receiver or event.result is not None:
                return False
    return True


def enumerate_traces(docs: Sequence[Document], bounds: Bounds,
                     checked: bool = False) -> Iterator[SystemTrace]:
    """Exactly the universe members satisfying every document in ``docs``,
    without duplicates, in the universe's deterministic order."""
    if not checked:
        diags = check_context(list(docs))
        if diags:
            raise ContextError(diags)
    if not bounds.base.table.classes and bounds.extra_classes == 0:
        raise EmptyUniverseError(
            "empty universe: no classes within bounds " + bounds.describe())
    for trace in universe(bounds):
        if satisfies_set(trace, docs, checked=True):
            yield trace
