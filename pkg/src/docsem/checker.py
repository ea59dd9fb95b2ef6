"""Bounded refinement, redundancy, and consistency verdicts, plus a seeded
simulator that builds witness traces from the lifecycle documents.

Verdicts are always "holds within the stated bounds", never proofs: the
search is exhaustive over the bounded universe and nothing more.
"""

from __future__ import annotations

import itertools
import random
import time
from collections import deque
from dataclasses import dataclass
from typing import Sequence

from . import sl
from .diagnostics import ContextError, SimulationError
from .documents import Document, MscDoc, OmDoc, StdDoc, check_context
from .model import (ENV, ClassTable, MsgEvent, ObjectState, Snapshot,
                    SystemTrace, Value, link_partners, render_trace,
                    validate_system)
from .semantics import (Bounds, _canonical_objects, _domain_values,
                        _link_pairs, _link_sets, _snapshot, _valuations,
                        satisfies_om, satisfies_set, universe)

HOLDS = "holds-within-bounds"
FAILS = "fails"

_CASCADE_LIMIT = 100  # events one top-level trigger may unleash


@dataclass
class Verdict:
    outcome: str  # HOLDS | FAILS
    counterexample: SystemTrace | None
    bounds: Bounds
    examined: int
    elapsed: float

    @property
    def holds(self) -> bool:
        return self.outcome == HOLDS


def render_verdict(verdict: Verdict, witness_label: str = "counterexample") -> str:
    """Deterministic text report (elapsed time deliberately omitted)."""
    lines = [f"verdict: {verdict.outcome}",
             f"bounds: {verdict.bounds.describe()}",
             f"examined: {verdict.examined} traces"]
    if verdict.counterexample is not None:
        lines.append(f"{witness_label}:")
        lines.append(render_trace(verdict.counterexample).rstrip("\n"))
    return "\n".join(lines) + "\n"


def _require_context(docs: Sequence[Document]) -> None:
    diags = check_context(list(docs))
    if diags:
        raise ContextError(diags)


def _search(old: Sequence[Document], new: Sequence[Document],
            bounds: Bounds) -> Verdict:
    """First universe member satisfying ``new`` but not ``old``; generation
    order is canonical, so the first hit is the canonically smallest
    counterexample."""
    started = time.perf_counter()
    examined = 0
    for trace in universe(bounds):
        examined += 1
        if satisfies_set(trace, new, checked=True) and \
                not satisfies_set(trace, old, checked=True):
            return Verdict(FAILS, trace, bounds, examined,
                           time.perf_counter() - started)
    return Verdict(HOLDS, None, bounds, examined, time.perf_counter() - started)


def check_refines(old: Sequence[Document], new: Sequence[Document],
                  bounds: Bounds) -> Verdict:
    """Does every bounded system satisfying ``new`` satisfy ``old``?"""
    _require_context(old)
    _require_context(new)
    return _search(old, new, bounds)


def check_redundant(doc: Document, rest: Sequence[Document],
                    bounds: Bounds) -> Verdict:
    """Is ``doc`` implied by ``rest`` throughout the bounded universe?"""
    _require_context([doc, *rest])
    return _search([doc], rest, bounds)


def check_consistent(docs: Sequence[Document], bounds: Bounds) -> Verdict:
    """Is the intersection semantics nonempty within bounds?  The verdict
    carries the first trace found as witness."""
    _require_context(docs)
    started = time.perf_counter()
    examined = 0
    for trace in universe(bounds):
        examined += 1
        if satisfies_set(trace, docs, checked=True):
            return Verdict(HOLDS, trace, bounds, examined,
                           time.perf_counter() - started)
    return Verdict(FAILS, None, bounds, examined, time.perf_counter() - started)


# ---------------------------------------------------------------------------
# Simulation


class _Trial:
    """Tentative continuation of the simulated trace, discarded on failure."""

    def __init__(self, table: ClassTable, initial: Snapshot,
                 steps: list[tuple[MsgEvent, Snapshot]],
                 control: dict[tuple[str, str], str]):
        self.table = table
        self.initial = initial
        self.base_len = len(steps)
        self.steps = list(steps)
        self.control = dict(control)

    def snapshot(self) -> Snapshot:
        return self.steps[-1][1] if self.steps else self.initial

    def pre_index(self) -> int:
        return len(self.steps)

    def trace(self) -> SystemTrace:
        return SystemTrace(self.table, self.initial, tuple(self.steps))

    def append(self, event: MsgEvent, snap: Snapshot) -> None:
        self.steps.append((event, snap))

    def new_steps(self) -> list[tuple[MsgEvent, Snapshot]]:
        return self.steps[self.base_len:]


class _Simulator:
    """Runs the documents: picks a population the object models allow, then
    repeatedly fires an enabled lifecycle transition chosen by the seeded
    generator, emitting declared outputs and completion returns."""

    def __init__(self, docs: Sequence[Document], bounds: Bounds, seed: int):
        self.docs = list(docs)
        self.oms = [d for d in docs if isinstance(d, OmDoc)]
        self.stds = [d for d in docs if isinstance(d, StdDoc)]
        self.bounds = bounds
        self.table: ClassTable = bounds.table_with_extras(bounds.extra_classes)
        self.rng = random.Random(seed)
        self.objects: tuple[tuple[str, str], ...] = ()
        self.control: dict[tuple[str, str], str] = {}  # (object, std) -> state
        self.steps: list[tuple[MsgEvent, Snapshot]] = []
        self.initial: Snapshot | None = None

    def governing(self, cls: str) -> list[StdDoc]:
        sups = self.table.superclasses(cls)
        return [d for d in self.stds if d.subject in sups]

    def pick_initial(self) -> None:
        candidates: list[Snapshot] = []
        count_ranges = [range(self.bounds.max_objects + 1) for _ in self.table.names()]
        for counts in itertools.product(*count_ranges):
            population = dict(zip(self.table.names(), counts))
            objects = _canonical_objects(self.table, population)
            pairs = _link_pairs(objects, self.table, self.bounds.base.assocs)
            for valuation in _valuations(objects, self.table):
                for links in _link_sets(pairs):
                    snap = _snapshot(objects, valuation, links, {})
                    probe = SystemTrace(self.table, snap)
                    if all(satisfies_om(probe, om) for om in self.oms):
                        candidates.append(snap)
        if not candidates:
            raise SimulationError(
                "no initial state within bounds satisfies the object models")
        self.initial = self.rng.choice(candidates)
        self.objects = tuple((o, c) for o, c, _ in self.initial.objects)
        for oid, cls in self.objects:
            for std in self.governing(cls):
                self.control[(oid, std.name)] = std.initial

    # -- snapshot surgery ---------------------------------------------------

    @staticmethod
    def _with_active(snap: Snapshot, oid: str, op: str, on: bool) -> Snapshot:
        objs = []
        for o, c, state in snap.objects:
            if o == oid:
                active = state.active | {op} if on else state.active - {op}
                state = ObjectState(state.attrs, active)
            objs.append((o, c, state))
        return Snapshot(tuple(objs), snap.links)

    @staticmethod
    def _revalue(snap: Snapshot, oid: str,
                 attrs: tuple[tuple[str, Value], ...]) -> Snapshot:
        objs = []
        for o, c, state in snap.objects:
            if o == oid:
                state = ObjectState(attrs, state.active)
            objs.append((o, c, state))
        return Snapshot(tuple(objs), snap.links)

    # -- processing one call -------------------------------------------------

    def _process_call(self, trial: _Trial, sender: str, receiver: str,
                      op: str, args: tuple[Value, ...]):
        """Append the call with its successor snapshot; choose and apply the
        receiver's transitions greedily.  Returns the instantiated outputs
        the receiver must now emit, or None when the call is not receivable.
        Raises when a precondition fires but no snapshot satisfies the
        postconditions (a defect in the documents)."""
        snap = trial.snapshot()
        if op in snap.state_of(receiver).active:
            return None
        call = MsgEvent("call", sender, receiver, op, args)
        stds = self.governing(snap.class_of(receiver))
        if not stds:
            trial.append(call, self._with_active(snap, receiver, op, True))
            return []

        pre_index = trial.pre_index()
        choices: list[list] = []
        for std in stds:
            state = trial.control[(receiver, std.name)]
            enabled = []
            for t in std.transitions:
                if t.source != state or t.op != op or len(t.params) != len(args):
                    continue
                params = dict(zip(t.params, args))
                try:
                    if sl.eval_single(t.pre, trial.trace(), pre_index,
                                      {"self": receiver}, params):
                        enabled.append((std, t, params))
                except Exception:
                    continue
            if not enabled:
                return None
            choices.append(enabled)

        for combo in itertools.product(*choices):
            outputs = self._instantiate(trial, receiver, combo)
            if outputs is None:
                continue
            candidate = self._find_successor(trial, call, combo)
            if candidate is None:
                continue
            trial.append(call, candidate)
            for std, t, _ in combo:
                trial.control[(receiver, std.name)] = t.dest
            return outputs
        label = choices[0][0][1].label()
        raise SimulationError(
            f"postcondition of transition '{label}' on {receiver} is "
            f"unsatisfiable within the finite domains")

    def _instantiate(self, trial: _Trial, receiver: str, combo):
        """Outputs every lifecycle in the combo agrees on, or None."""
        snap = trial.snapshot()
        pre_index = trial.pre_index()
        agreed = None
        for std, t, params in combo:
            outs = []
            for tpl in t.outputs:
                if tpl.receiver_kind == "self":
                    rcv = receiver
                elif tpl.receiver_kind == "param":
                    v = params.get(tpl.receiver)
                    if not isinstance(v, str):
                        return None
                    rcv = v
                else:
                    partners = sorted(link_partners(snap, tpl.receiver,
                                                    receiver, "source"))
                    if not partners:
                        return None
                    rcv = partners[0]
                try:
                    vals = tuple(sl.eval_term(a, trial.trace(), pre_index,
                                              {"self": receiver}, params)
                                 for a in tpl.args)
                except Exception:
                    return None
                outs.append((rcv, tpl.op, vals))
            if agreed is None:
                agreed = outs
            elif agreed != outs:
                return None
        return agreed or []

    def _find_successor(self, trial: _Trial, call: MsgEvent, combo) -> Snapshot | None:
        """First snapshot (only the receiver's attributes change) satisfying
        every postcondition in the combo and all object-model constraints."""
        receiver = call.receiver
        snap = trial.snapshot()
        base = self._with_active(snap, receiver, call.op, True)
        attr_decls = self.table.effective_attrs(snap.class_of(receiver))
        value_lists = [_domain_values(dom, self.objects, self.table)
                       for _, dom in attr_decls]
        for values in itertools.product(*value_lists):
            attrs = tuple((a, v) for (a, _), v in zip(attr_decls, values))
            candidate = self._revalue(base, receiver, attrs)
            probe = SystemTrace(self.table, trial.initial,
                                tuple(trial.steps) + ((call, candidate),))
            post_index = len(trial.steps) + 1
            ok = True
            for std, t, params in combo:
                try:
                    if not sl.eval_pair(t.post, probe, post_index - 1, post_index,
                                        params, {"self": receiver}):
                        ok = False
                        break
                except Exception:
                    ok = False
                    break
            if ok and all(satisfies_om(SystemTrace(self.table, candidate), om)
                          for om in self.oms):
                return candidate
        return None

    # -- one top-level trigger ------------------------------------------------

    def fire(self, oid: str, op: str, args: tuple[Value, ...]) -> _Trial | None:
        """Process ``env -> oid : op(args)`` with its full output cascade.

        Outputs run breadth-first so each object's emissions stay
        consecutive among the events it sends; completion returns follow,
        innermost first.
        """
        assert self.initial is not None
        trial = _Trial(self.table, self.initial, self.steps, self.control)
        agenda: deque[tuple[str, str, str, tuple[Value, ...]]] = deque()
        agenda.append((ENV, oid, op, args))
        completed: list[tuple[str, str, str]] = []  # sender, receiver=caller, op
        while agenda:
            if len(trial.new_steps()) >= _CASCADE_LIMIT:
                raise SimulationError("output cascade exceeded the event limit")
            sender, receiver, o, a = agenda.popleft()
            outputs = self._process_call(trial, sender, receiver, o, a)
            if outputs is None:
                return None
            completed.append((receiver, sender, o))
            for rcv, out_op, vals in outputs:
                agenda.append((receiver, rcv, out_op, vals))
        for sender, caller, o in reversed(completed):
            snap = self._with_active(trial.snapshot(), sender, o, False)
            trial.append(MsgEvent("return", sender, caller, o), snap)
        return trial

    def enabled_moves(self) -> list[tuple[str, str, tuple[Value, ...]]]:
        moves = []
        snap = self.initial if not self.steps else self.steps[-1][1]
        for oid, cls in self.objects:
            stds = self.governing(cls)
            if not stds:
                continue
            for sig in self.table.effective_ops(cls):
                if sig.name in snap.state_of(oid).active:
                    continue
                structurally = all(
                    any(t.op == sig.name and len(t.params) == len(sig.params)
                        and t.source == self.control[(oid, d.name)]
                        for t in d.transitions)
                    for d in stds)
                if not structurally:
                    continue
                value_lists = [_domain_values(d, self.objects, self.table)
                               for d in sig.params]
                for args in itertools.product(*value_lists):
                    if self.fire(oid, sig.name, tuple(args)) is not None:
                        moves.append((oid, sig.name, tuple(args)))
        return moves

    def run(self, max_steps: int) -> SystemTrace:
        self.pick_initial()
        for _ in range(max_steps):
            moves = self.enabled_moves()
            if not moves:
                break
            oid, op, args = self.rng.choice(moves)
            trial = self.fire(oid, op, args)
            assert trial is not None, "selected move stopped being feasible"
            self.steps = trial.steps
            self.control = trial.control
        assert self.initial is not None
        trace = SystemTrace(self.table, self.initial, tuple(self.steps))
        problems = validate_system(trace)
        if problems:  # internal sanity; documents cannot cause this
            raise SimulationError("simulation produced an ill-formed trace: "
                                  + str(problems[0]))
        return trace


def simulate(docs: Sequence[Document], bounds: Bounds, seed: int,
             max_steps: int) -> SystemTrace:
    """Build a pseudo-random trace that satisfies the object models and
    lifecycle documents in ``docs``; deterministic for a fixed seed.

    ``max_steps`` counts environment triggers; each trigger also emits the
    outputs its transitions declare and the matching completion returns.
    Sequence documents are not consulted during construction; check them
    afterwards with :func:`msc_conformance`.
    """
    _require_context(docs)
    if not any(isinstance(d, OmDoc) for d in docs):
        raise SimulationError("simulation needs at least one object model")
    return _Simulator(docs, bounds, seed).run(max_steps)


def msc_conformance(trace: SystemTrace, docs: Sequence[Document]) -> dict[str, bool]:
    """Which sequence documents of ``docs`` the trace satisfies."""
    from .semantics import satisfies_msc
    report: dict[str, bool] = {}
    for d in docs:
        if isinstance(d, MscDoc):
            try:
                report[d.name] = satisfies_msc(trace, d, docs)
            except ContextError:
                report[d.name] = False
    return report
