"""Shared builders, generators, and independent oracles for the test suite.

The oracles here deliberately reimplement evaluation and matching with
different structure than the package so that agreement is meaningful.
"""

from __future__ import annotations

import random
from typing import Mapping

import pytest

from docsem import (BoolDomain, ClassDecl, ClassTable, EnumDomain, IntDomain,
                    MsgEvent, ObjectState, OpSig, RefDomain, Snapshot,
                    SystemTrace)
from docsem import sl as _sl_mod
from docsem.sl import Attr, Bin, Linked, Lit, Name, Not, Quant, SlContext
from docsem.documents import (AssocDecl, AssocEnd, Invariant, ItdDoc, MscAlt,
                              MscBasic, MscDoc, MscLoop, MscRef, MscSeq,
                              OmClass, OmDoc, OutTemplate, StdDoc, Transition)


# ---------------------------------------------------------------------------
# A fixed model shared by expression tests

COLORS = ("red", "green", "blue")


def rich_table() -> ClassTable:
    return ClassTable(
        classes=(
            ClassDecl("C", attrs=(("b", BoolDomain()), ("n", IntDomain(0, 3)),
                                  ("color", EnumDomain(COLORS)),
                                  ("r", RefDomain("D"))),
                      ops=(OpSig("m", (IntDomain(0, 3),)),)),
            ClassDecl("D", attrs=(("flag", BoolDomain()),)),
            ClassDecl("E", attrs=(("k", IntDomain(0, 2)),)),
        ),
        generalization=frozenset({("E", "D")}),
    )


RICH_ASSOCS = {"Owns": ("C", "D")}


def rich_context(mode: str = _sl_mod.SINGLE) -> SlContext:
    params = {"p": IntDomain(0, 3), "q": BoolDomain(),
              "e": EnumDomain(COLORS), "rd": RefDomain("D")}
    return SlContext(mode, rich_table(), RICH_ASSOCS, params, {})


def random_snapshot(rng: random.Random, table: ClassTable,
                    max_objects: int = 3) -> Snapshot:
    """A random population with conforming attributes and random links."""
    objects: list[tuple[str, str]] = []
    for cls in table.names():
        for i in range(1, rng.randint(0, max_objects) + 1):
            objects.append((f"{cls.lower()}{i}", cls))
    entries = []
    for oid, cls in objects:
        attrs = []
        for a, dom in table.effective_attrs(cls):
            if isinstance(dom, RefDomain):
                pool = [o for o, c in objects
                        if dom.class_name in _closure(table, c)]
                attrs.append((a, rng.choice([None] + pool)))
            else:
                attrs.append((a, rng.choice(list(dom.values()))))
        entries.append((oid, cls, ObjectState(tuple(attrs))))
    links = set()
    for assoc, (src_cls, tgt_cls) in RICH_ASSOCS.items():
        for s, sc in objects:
            for t, tc in objects:
                if src_cls in _closure(table, sc) and tgt_cls in _closure(table, tc) \
                        and rng.random() < 0.3:
                    links.add((assoc, s, t))
    return Snapshot(tuple(entries), frozenset(links))


def _closure(table: ClassTable, cls: str) -> set[str]:
    # Independent reflexive-transitive superclass closure (BFS over pairs).
    out = {cls}
    changed = True
    while changed:
        changed = False
        for sub, sup in table.generalization:
            if sub in out and sup not in out:
                out.add(sup)
                changed = True
    return out


# ---------------------------------------------------------------------------
# Independent expression oracle: explicit quantifier expansion


class OracleError(Exception):
    pass


def oracle_eval(expr, trace: SystemTrace, pre: int, post: int | None,
                env: Mapping[str, str], params: Mapping[str, object]):
    snapshots = trace.snapshots()

    def lookup(name: str):
        if name in env:
            return env[name]
        if name in params:
            return params[name]
        return name

    def attr_value(snap_index: int, oid, attr: str):
        if oid is None:
            raise OracleError("nil dereference")
        snap = snapshots[snap_index]
        for o, _, state in snap.objects:
            if o == oid:
                for a, v in state.attrs:
                    if a == attr:
                        return v
                raise OracleError("missing attribute")
        raise OracleError("missing object")

    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Name):
        return lookup(expr.ident)
    if isinstance(expr, Attr):
        index = post if expr.primed else pre
        assert index is not None
        return attr_value(index, lookup(expr.base), expr.attr)
    if isinstance(expr, Not):
        return not oracle_eval(expr.operand, trace, pre, post, env, params)
    if isinstance(expr, Linked):
        x, y = lookup(expr.source), lookup(expr.target)
        if x is None or y is None:
            raise OracleError("nil in linked")
        return (expr.assoc, x, y) in snapshots[pre].links
    if isinstance(expr, Quant):
        if not trace.class_table.has(expr.class_name):
            raise OracleError("unknown class")
        members = [o for o, c, _ in snapshots[pre].objects
                   if expr.class_name in _closure(trace.class_table, c)]
        branches = []
        for oid in members:
            inner = dict(env)
            inner[expr.var] = oid
            branches.append(bool(oracle_eval(expr.body, trace, pre, post,
                                             inner, params)))
        # Explicit finite expansion: conjunction or disjunction of branches.
        if expr.kind == "forall":
            result = True
            for b in branches:
                result = result and b
            return result
        result = False
        for b in branches:
            result = result or b
        return result
    if isinstance(expr, Bin):
        l = oracle_eval(expr.left, trace, pre, post, env, params)
        if expr.op == "&&":
            return bool(l) and bool(oracle_eval(expr.right, trace, pre, post, env, params))
        if expr.op == "||":
            return bool(l) or bool(oracle_eval(expr.right, trace, pre, post, env, params))
        if expr.op == "=>":
            return (not l) or bool(oracle_eval(expr.right, trace, pre, post, env, params))
        r = oracle_eval(expr.right, trace, pre, post, env, params)
        table = {"+": lambda: l + r, "-": lambda: l - r, "*": lambda: l * r,
                 "==": lambda: l == r, "!=": lambda: l != r,
                 "<": lambda: l < r, "<=": lambda: l <= r,
                 ">": lambda: l > r, ">=": lambda: l >= r}
        return table[expr.op]()
    raise AssertionError(f"unhandled node {expr!r}")


# ---------------------------------------------------------------------------
# Type-directed random expression generator over the rich model


class ExprGen:
    def __init__(self, rng: random.Random, two_state: bool = False,
                 param_derefs: bool = True):
        self.rng = rng
        self.two_state = two_state
        self.param_derefs = param_derefs
        self.table = rich_table()

    def expr(self, depth: int = 4, vars_: tuple[tuple[str, str], ...] = ()):
        return self.boolean(depth, vars_)

    def _vars_of(self, vars_, cls: str):
        return [v for v, c in vars_ if cls in _closure(self.table, c)]

    def boolean(self, depth, vars_):
        rng = self.rng
        options = ["lit", "not", "bin", "cmpint", "eq"]
        if depth > 0:
            options += ["quant", "quant"]
        if self._vars_of(vars_, "C"):
            options += ["battr", "battr"]
        if self._vars_of(vars_, "C") and self._vars_of(vars_, "D"):
            options.append("linked")
        kind = rng.choice(options)
        if kind == "lit" or depth <= 0:
            return Lit(rng.choice([True, False]))
        if kind == "not":
            return Not(self.boolean(depth - 1, vars_))
        if kind == "bin":
            op = rng.choice(["&&", "||", "=>"])
            return Bin(op, self.boolean(depth - 1, vars_),
                       self.boolean(depth - 1, vars_))
        if kind == "cmpint":
            op = rng.choice(["<", "<=", ">", ">=", "==", "!="])
            return Bin(op, self.integer(depth - 1, vars_),
                       self.integer(depth - 1, vars_))
        if kind == "eq":
            op = rng.choice(["==", "!="])
            pick = rng.choice(["bool", "enum", "ref"])
            if pick == "bool":
                return Bin(op, self.boolean(0, vars_), self.boolean(0, vars_))
            if pick == "enum":
                return Bin(op, self.enum(vars_), self.enum(vars_))
            left, right = self.ref(vars_), self.ref(vars_)
            if left is None or right is None:
                return Lit(True)
            return Bin(op, left, right)
        if kind == "quant":
            var = f"x{len(vars_)}"
            cls = rng.choice(self.table.names())
            return Quant(rng.choice(["forall", "exists"]), var, cls,
                         self.boolean(depth - 1, vars_ + ((var, cls),)))
        if kind == "battr":
            v = rng.choice(self._vars_of(vars_, "C"))
            return Attr(v, "b", primed=self._primed())
        if kind == "linked":
            x = rng.choice(self._vars_of(vars_, "C"))
            y = rng.choice(self._vars_of(vars_, "D"))
            return Linked("Owns", x, y)
        raise AssertionError(kind)

    def _primed(self) -> bool:
        return self.two_state and self.rng.random() < 0.4

    def integer(self, depth, vars_):
        rng = self.rng
        options = ["lit", "param"]
        if depth > 0:
            options.append("arith")
        if self._vars_of(vars_, "C"):
            options += ["nattr", "nattr"]
        if self._vars_of(vars_, "E"):
            options.append("kattr")
        kind = rng.choice(options)
        if kind == "lit" or depth <= 0:
            return Lit(rng.randint(0, 3))
        if kind == "param":
            return Name("p")
        if kind == "arith":
            op = rng.choice(["+", "-", "*"])
            return Bin(op, self.integer(depth - 1, vars_),
                       self.integer(depth - 1, vars_))
        if kind == "nattr":
            return Attr(rng.choice(self._vars_of(vars_, "C")), "n",
                        primed=self._primed())
        if kind == "kattr":
            return Attr(rng.choice(self._vars_of(vars_, "E")), "k",
                        primed=self._primed())
        raise AssertionError(kind)

    def enum(self, vars_):
        rng = self.rng
        choices = [Name(rng.choice(COLORS)), Name("e")]
        cs = self._vars_of(vars_, "C")
        if cs:
            choices.append(Attr(rng.choice(cs), "color", primed=self._primed()))
        return rng.choice(choices)

    def ref(self, vars_):
        rng = self.rng
        choices: list = [Lit(None)]
        ds = self._vars_of(vars_, "D")
        if ds:
            choices.append(Name(rng.choice(ds)))
        if self.param_derefs:
            choices.append(Name("rd"))
        cs = self._vars_of(vars_, "C")
        if cs:
            choices.append(Attr(rng.choice(cs), "r", primed=self._primed()))
        return rng.choice(choices)


def random_params(rng: random.Random, snapshot: Snapshot):
    ds = [o for o, c, _ in snapshot.objects if c in ("D", "E")]
    return {"p": rng.randint(0, 3), "q": rng.choice([True, False]),
            "e": rng.choice(list(COLORS)),
            "rd": rng.choice([None] + ds)}


# ---------------------------------------------------------------------------
# Random document generators (for round-trip properties)


_NAME_POOL = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta"]


def _domain(rng: random.Random, classes: list[str]):
    kind = rng.randrange(4 if classes else 3)
    if kind == 0:
        return BoolDomain()
    if kind == 1:
        lo = rng.randint(-2, 2)
        return IntDomain(lo, lo + rng.randint(0, 4))
    if kind == 2:
        k = rng.randint(1, 3)
        return EnumDomain(tuple(rng.sample(["lo", "mid", "hi", "off", "on"], k)))
    return RefDomain(rng.choice(classes))


def gen_om(rng: random.Random) -> OmDoc:
    n_classes = rng.randint(1, 3)
    names = rng.sample(_NAME_POOL, n_classes)
    classes = []
    for i, name in enumerate(names):
        attrs = tuple((f"a{j}", _domain(rng, names[:i + 1]))
                      for j in range(rng.randint(0, 3)))
        ops = tuple(OpSig(f"m{j}", tuple(_domain(rng, names[:i + 1])
                                         for _ in range(rng.randint(0, 2))))
                    for j in range(rng.randint(0, 2)))
        extends = rng.choice(names[:i]) if i and rng.random() < 0.4 else None
        classes.append(OmClass(name, extends, attrs, ops))
    assocs = []
    for j in range(rng.randint(0, 2)):
        lo1, lo2 = rng.randint(0, 1), rng.randint(0, 1)
        assocs.append(AssocDecl(
            f"A{j}",
            AssocEnd(rng.choice(names), lo1,
                     rng.choice([None, lo1 + rng.randint(0, 2)])),
            AssocEnd(rng.choice(names), lo2,
                     rng.choice([None, lo2 + rng.randint(0, 2)])),
            aggregate=rng.random() < 0.3))
    invariants = []
    bool_attrs = [(c.name, a) for c in classes for a, d in c.attrs
                  if isinstance(d, BoolDomain)]
    for j in range(rng.randint(0, 2)):
        if bool_attrs and rng.random() < 0.7:
            cls, attr = rng.choice(bool_attrs)
            body = Attr("x", attr) if rng.random() < 0.5 else Not(Attr("x", attr))
            expr = Quant(rng.choice(["forall", "exists"]), "x", cls, body)
        else:
            expr = Bin(rng.choice(["&&", "||", "=>"]),
                       Lit(rng.choice([True, False])),
                       Lit(rng.choice([True, False])))
        invariants.append(Invariant(f"I{j}", expr))
    return OmDoc(rng.choice(["Billing", "Core", "Shape", "World"]),
                 tuple(classes), tuple(assocs), tuple(invariants))


def gen_std(rng: random.Random) -> StdDoc:
    states = tuple(rng.sample(["Idle", "Busy", "Done", "Wait"], rng.randint(1, 3)))
    transitions = []
    for _ in range(rng.randint(0, 3)):
        params = tuple(f"p{i}" for i in range(rng.randint(0, 2)))
        pre = Lit(True) if rng.random() < 0.5 else \
            Bin(">=", Name(params[0]) if params else Lit(1), Lit(0))
        post = Bin("==", Attr("self", "a0", primed=True),
                   Attr("self", "a0")) if rng.random() < 0.5 else Lit(True)
        outs = []
        for j in range(rng.randint(0, 2)):
            kind = rng.choice(["self", "param", "nav"])
            if kind == "param" and not params:
                kind = "self"
            receiver = {"self": "", "param": params[0] if params else "",
                        "nav": "A0"}[kind]
            outs.append(OutTemplate(kind, receiver, f"m{j}",
                                    tuple(Lit(rng.randint(0, 2))
                                          for _ in range(rng.randint(0, 2)))))
        transitions.append(Transition(
            rng.choice(states), rng.choice(["set", "get", "go"]), params,
            pre, tuple(outs), post, rng.choice(states)))
    return StdDoc(rng.choice(["Life", "Flow", "Drive"]),
                  rng.choice(_NAME_POOL), states, states[0], tuple(transitions))


def _gen_msc_item(rng: random.Random, roles: list[str], depth: int):
    kind = rng.randrange(6) if depth > 0 else rng.randrange(2)
    if kind in (0, 1):
        s, r = rng.sample(roles, 2) if len(roles) > 1 else (roles[0], roles[0])
        if rng.random() < 0.3:
            args = (rng.randint(0, 2),) if rng.random() < 0.5 else ()
            return MscBasic(s, r, "return", "m", args)
        args = tuple(rng.choice([True, False, 0, 1, None])
                     for _ in range(rng.randint(0, 2)))
        return MscBasic(s, r, "call", rng.choice(["m", "n"]), args)
    if kind == 2:
        return MscSeq(tuple(_gen_msc_item(rng, roles, depth - 1)
                            for _ in range(rng.randint(0, 3))))
    if kind == 3:
        return MscAlt(tuple(_gen_msc_item(rng, roles, depth - 1)
                            for _ in range(rng.randint(2, 3))))
    if kind == 4:
        return MscLoop(_gen_msc_item(rng, roles, depth - 1))
    return MscRef(rng.choice(["Other", "Shared", "Tail"]))


def gen_msc(rng: random.Random) -> MscDoc:
    roles = [f"r{i}" for i in range(rng.randint(1, 3))]
    decls = tuple((r, rng.choice(_NAME_POOL)) for r in roles)
    return MscDoc(rng.choice(["Greet", "Trade", "Ping"]), decls,
                  _gen_msc_item(rng, roles, 2))


def gen_itd(rng: random.Random) -> ItdDoc:
    fragments = ["requirement text", "see diagram // not a comment", "{nested}",
                 "tables:\n  - a\n  - b", "отзыв", "TODO later", ""]
    text = " ".join(rng.sample(fragments, rng.randint(0, 3)))
    return ItdDoc(rng.choice(["Notes", "Vision", "Memo"]),
                  rng.choice(["unvalidated", "validated", "redundant"]), text)


# ---------------------------------------------------------------------------
# Canonical documents used across modules


BANK_OM = """
objectmodel Bank {
  class Account {
    attr balance: Int[0..3]
    attr open: Bool
    op deposit(Int[0..3])
  }
  class Savings extends Account { }
  class Customer {
    attr vip: Bool
  }
  assoc Owns end1: Customer[0..*] end2: Account[0..*]
  inv NonNegative: forall a: Account . a.balance >= 0
}
"""

FLIP_OM = """
objectmodel Flip {
  class C {
    attr b: Bool
    op m()
  }
}
"""

FLIP_STD = """
std FlipLife for C {
  states { A }
  initial A
  trans A -> A on m() post self.b' == !self.b
}
"""


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20260810)
