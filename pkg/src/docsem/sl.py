"""First-order specification expressions over snapshots and snapshot pairs.

Expressions are total on type-correct input except for nil dereference and
unknown-object access, which raise :class:`EvalError` — deliberately distinct
from evaluating to false.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from . import lex
from .diagnostics import Diagnostic, EvalError, ParseError, TypeError_
from .model import (BoolDomain, ClassTable, Domain, EnumDomain, IntDomain,
                    RefDomain, Snapshot, SystemTrace, Value, objects_of,
                    render_value)

SINGLE = "single-state"
TWO = "two-state"


# ---------------------------------------------------------------------------
# Abstract syntax

_POS = dict(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Lit:
    value: Value  # bool, int, or None (nil)
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Name:
    """A bare identifier: quantified variable, parameter, or enum literal."""

    ident: str
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Attr:
    base: str
    attr: str
    primed: bool = False
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Not:
    operand: "SlExpr"
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Bin:
    op: str  # + - * == != < <= > >= && || =>
    left: "SlExpr"
    right: "SlExpr"
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Quant:
    kind: str  # "forall" | "exists"
    var: str
    class_name: str
    body: "SlExpr"
    pos: tuple[int, int] | None = field(**_POS)


@dataclass(frozen=True)
class Linked:
    assoc: str
    source: str
    target: str
    pos: tuple[int, int] | None = field(**_POS)


SlExpr = Lit | Name | Attr | Not | Bin | Quant | Linked


@dataclass(frozen=True)
class SlContext:
    """Typing context: mode, class structure, and name typings."""

    mode: str = SINGLE
    table: ClassTable = ClassTable()
    assocs: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    params: Mapping[str, Domain] = field(default_factory=dict)
    vars: Mapping[str, str] = field(default_factory=dict)  # variable -> class

    def with_var(self, name: str, cls: str) -> "SlContext":
        return SlContext(self.mode, self.table, self.assocs, self.params,
                         {**self.vars, name: cls})


# ---------------------------------------------------------------------------
# Parser

_KEYWORDS = {"forall", "exists", "true", "false", "nil", "linked"}


def parse_expr(ts: lex.TokenStream) -> SlExpr:
    """Parse one expression from an open token stream (used by doc parsers)."""
    return _quant(ts)


def _quant(ts: lex.TokenStream) -> SlExpr:
    tok = ts.peek()
    if ts.at_keyword("forall") or ts.at_keyword("exists"):
        kind = ts.next().text
        var = ts.ident()
        ts.expect(":")
        cls = ts.ident()
        ts.expect(".")
        return Quant(kind, var, cls, _quant(ts), pos=(tok.line, tok.col))
    return _impl(ts)


def _impl(ts: lex.TokenStream) -> SlExpr:
    left = _or(ts)
    tok = ts.peek()
    if ts.accept("=>"):
        return Bin("=>", left, _impl_or_quant(ts), pos=(tok.line, tok.col))
    return left


def _impl_or_quant(ts: lex.TokenStream) -> SlExpr:
    if ts.at_keyword("forall") or ts.at_keyword("exists"):
        return _quant(ts)
    return _impl(ts)


def _or(ts: lex.TokenStream) -> SlExpr:
    left = _and(ts)
    while True:
        tok = ts.peek()
        if not ts.accept("||"):
            return left
        left = Bin("||", left, _and(ts), pos=(tok.line, tok.col))


def _and(ts: lex.TokenStream) -> SlExpr:
    left = _not(ts)
    while True:
        tok = ts.peek()
        if not ts.accept("&&"):
            return left
        left = Bin("&&", left, _not(ts), pos=(tok.line, tok.col))


def _not(ts: lex.TokenStream) -> SlExpr:
    tok = ts.peek()
    if ts.accept("!"):
        return Not(_not(ts), pos=(tok.line, tok.col))
    return _cmp(ts)


_CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


def _cmp(ts: lex.TokenStream) -> SlExpr:
    left = _sum(ts)
    tok = ts.peek()
    for op in _CMP_OPS:
        if ts.accept(op):
            return Bin(op, left, _sum(ts), pos=(tok.line, tok.col))
    return left


def _sum(ts: lex.TokenStream) -> SlExpr:
    left = _term(ts)
    while True:
        tok = ts.peek()
        if ts.accept("+"):
            left = Bin("+", left, _term(ts), pos=(tok.line, tok.col))
        elif ts.at("-") and ts.peek(1).kind != "int":
            ts.next()
            left = Bin("-", left, _term(ts), pos=(tok.line, tok.col))
        elif ts.at("-") and ts.peek(1).kind == "int":
            # "a - 1": minus binds as subtraction, not a negative literal.
            ts.next()
            lit_tok = ts.expect("int")
            right: SlExpr = Lit(int(lit_tok.text), pos=(lit_tok.line, lit_tok.col))
            right = _term_tail(ts, right)
            left = Bin("-", left, right, pos=(tok.line, tok.col))
        else:
            return left


def _term(ts: lex.TokenStream) -> SlExpr:
    return _term_tail(ts, _atom(ts))


def _term_tail(ts: lex.TokenStream, left: SlExpr) -> SlExpr:
    while True:
        tok = ts.peek()
        if not ts.accept("*"):
            return left
        left = Bin("*", left, _atom(ts), pos=(tok.line, tok.col))


def _atom(ts: lex.TokenStream) -> SlExpr:
    tok = ts.peek()
    pos = (tok.line, tok.col)
    if ts.accept("!"):
        # Tightly bound negation, so "x.b' == !x.b" reads naturally.
        return Not(_atom(ts), pos=pos)
    if ts.accept("("):
        e = _quant(ts)
        ts.expect(")")
        return e
    if ts.accept("ident", "true"):
        return Lit(True, pos=pos)
    if ts.accept("ident", "false"):
        return Lit(False, pos=pos)
    if ts.accept("ident", "nil"):
        return Lit(None, pos=pos)
    if ts.at("int"):
        return Lit(int(ts.next().text), pos=pos)
    if ts.accept("-"):
        lit = ts.expect("int")
        return Lit(-int(lit.text), pos=pos)
    if ts.accept("ident", "linked"):
        ts.expect("(")
        assoc = ts.ident()
        ts.expect(",")
        x = ts.ident()
        ts.expect(",")
        y = ts.ident()
        ts.expect(")")
        return Linked(assoc, x, y, pos=pos)
    if ts.at("ident"):
        ident = ts.next().text
        if ts.at(".") and ts.peek(1).kind == "ident":
            ts.next()
            attr = ts.ident()
            primed = ts.accept("'") is not None
            return Attr(ident, attr, primed, pos=pos)
        return Name(ident, pos=pos)
    raise ts.error(f"expected an expression, found {tok.text or tok.kind!r}")


# ---------------------------------------------------------------------------
# Rendering

_PREC = {"=>": 1, "||": 2, "&&": 3,
         "==": 5, "!=": 5, "<": 5, "<=": 5, ">": 5, ">=": 5,
         "+": 6, "-": 6, "*": 7}


def _prec(e: SlExpr) -> int:
    if isinstance(e, Quant):
        return 0
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Not):
        return 4
    return 9


def render_expr(e: SlExpr) -> str:
    """Canonical text; ``parse_expr`` inverts it up to positions."""
    if isinstance(e, Lit):
        return render_value(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Attr):
        return f"{e.base}.{e.attr}" + ("'" if e.primed else "")
    if isinstance(e, Linked):
        return f"linked({e.assoc}, {e.source}, {e.target})"
    if isinstance(e, Not):
        inner = render_expr(e.operand)
        if _prec(e.operand) < 4:
            inner = f"({inner})"
        return "!" + inner
    if isinstance(e, Quant):
        return f"{e.kind} {e.var}: {e.class_name} . {render_expr(e.body)}"
    if isinstance(e, Bin):
        p = _PREC[e.op]
        left, right = render_expr(e.left), render_expr(e.right)
        right_assoc = e.op == "=>"
        lp = _prec(e.left) < p or (not right_assoc and _prec(e.left) == p and e.op in _CMP_OPS)
        rp = _prec(e.right) < p or (_prec(e.right) == p and not right_assoc)
        # A negative literal on the right of +/- or * needs parentheses to
        # survive re-tokenization as subtraction.
        if (isinstance(e.right, Lit) and isinstance(e.right.value, int)
                and not isinstance(e.right.value, bool) and e.right.value < 0):
            rp = True
        if lp:
            left = f"({left})"
        if rp:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Type checking

# Expression types: "bool", "int", ("enum", literals), ("ref", class),
# "nil" (the type of the nil literal), ("enumlit", literal).


def _domain_type(dom: Domain):
    if isinstance(dom, BoolDomain):
        return "bool"
    if isinstance(dom, IntDomain):
        return "int"
    if isinstance(dom, EnumDomain):
        return ("enum", dom.literals)
    return ("ref", dom.class_name)


def _describe(t) -> str:
    if isinstance(t, tuple):
        if t[0] == "enum":
            return "Enum{" + ",".join(t[1]) + "}"
        if t[0] == "enumlit":
            return f"enum literal {t[1]}"
        return f"Ref {t[1]}"
    return t


class _Checker:
    def __init__(self, ctx: SlContext, source: str | None):
        self.ctx = ctx
        self.source = source
        self.diags: list[Diagnostic] = []

    def fail(self, e: SlExpr, message: str):
        line, col = e.pos or (0, 0)
        self.diags.append(Diagnostic(message, line, col, self.source))
        return None

    def object_class(self, ident: str, e: SlExpr, ctx: SlContext) -> str | None:
        """Class of an object-valued name, or None plus a diagnostic."""
        if ident in ctx.vars:
            return ctx.vars[ident]
        if ident in ctx.params:
            dom = ctx.params[ident]
            if isinstance(dom, RefDomain):
                return dom.class_name
            self.fail(e, f"{ident} is not object-valued")
            return None
        self.fail(e, f"unknown name {ident}")
        return None

    def check(self, e: SlExpr, ctx: SlContext):
        if isinstance(e, Lit):
            if e.value is None:
                return "nil"
            return "bool" if isinstance(e.value, bool) else "int"
        if isinstance(e, Name):
            if e.ident in ctx.vars:
                return ("ref", ctx.vars[e.ident])
            if e.ident in ctx.params:
                return _domain_type(ctx.params[e.ident])
            for c in ctx.table.classes:
                for _, dom in c.attrs:
                    if isinstance(dom, EnumDomain) and e.ident in dom.literals:
                        return ("enumlit", e.ident)
                for op in c.ops:
                    for dom in op.params:
                        if isinstance(dom, EnumDomain) and e.ident in dom.literals:
                            return ("enumlit", e.ident)
            return self.fail(e, f"unknown name {e.ident}")
        if isinstance(e, Attr):
            if e.primed and ctx.mode != TWO:
                self.fail(e, "primed access only allowed in two-state mode")
            cls = self.object_class(e.base, e, ctx)
            if cls is None:
                return None
            if not ctx.table.has(cls):
                return self.fail(e, f"unknown class {cls}")
            for a, dom in ctx.table.effective_attrs(cls):
                if a == e.attr:
                    return _domain_type(dom)
            return self.fail(e, f"class {cls} has no attribute {e.attr}")
        if isinstance(e, Not):
            t = self.check(e.operand, ctx)
            if t is not None and t != "bool":
                self.fail(e, f"! applied to {_describe(t)}")
            return "bool"
        if isinstance(e, Quant):
            if not ctx.table.has(e.class_name):
                self.fail(e, f"unknown class {e.class_name}")
                return "bool"
            t = self.check(e.body, ctx.with_var(e.var, e.class_name))
            if t is not None and t != "bool":
                self.fail(e, f"quantifier body has type {_describe(t)}")
            return "bool"
        if isinstance(e, Linked):
            if e.assoc not in ctx.assocs:
                self.fail(e, f"unknown association {e.assoc}")
            else:
                src_cls, tgt_cls = ctx.assocs[e.assoc]
                for ident, end_cls, role in ((e.source, src_cls, "source"),
                                             (e.target, tgt_cls, "target")):
                    cls = self.object_class(ident, e, ctx)
                    if cls is not None and ctx.table.has(cls) \
                            and not ctx.table.is_kind_of(cls, end_cls):
                        self.fail(e, f"{ident}: {cls} cannot occupy the "
                                     f"{role} end of {e.assoc} ({end_cls})")
            return "bool"
        if isinstance(e, Bin):
            lt = self.check(e.left, ctx)
            rt = self.check(e.right, ctx)
            if e.op in ("&&", "||", "=>"):
                for t in (lt, rt):
                    if t is not None and t != "bool":
                        self.fail(e, f"{e.op} applied to {_describe(t)}")
                return "bool"
            if e.op in ("+", "-", "*"):
                for t in (lt, rt):
                    if t is not None and t != "int":
                        self.fail(e, f"{e.op} applied to {_describe(t)}")
                return "int"
            if e.op in ("<", "<=", ">", ">="):
                for t in (lt, rt):
                    if t is not None and t != "int":
                        self.fail(e, f"{e.op} compares only integers, got {_describe(t)}")
                return "bool"
            # == / !=
            if lt is not None and rt is not None and not _comparable(lt, rt):
                self.fail(e, f"cannot compare {_describe(lt)} with {_describe(rt)}")
            return "bool"
        raise TypeError(f"not an expression: {e!r}")


def _comparable(lt, rt) -> bool:
    def is_ref(t):
        return t == "nil" or (isinstance(t, tuple) and t[0] == "ref")

    def is_enum(t):
        return isinstance(t, tuple) and t[0] in ("enum", "enumlit")

    if lt == rt and lt in ("bool", "int"):
        return True
    if is_ref(lt) and is_ref(rt):
        return True
    if is_enum(lt) and is_enum(rt):
        if lt[0] == "enum" and rt[0] == "enumlit":
            return rt[1] in lt[1]
        if lt[0] == "enumlit" and rt[0] == "enum":
            return lt[1] in rt[1]
        if lt[0] == "enum" and rt[0] == "enum":
            return bool(set(lt[1]) & set(rt[1]))
        return True
    return False


def check_types(e: SlExpr, ctx: SlContext, source: str | None = None) -> list[Diagnostic]:
    """All typing problems of ``e`` under ``ctx`` (empty = well typed)."""
    checker = _Checker(ctx, source)
    t = checker.check(e, ctx)
    if not checker.diags and t != "bool":
        checker.fail(e, f"expression has type {_describe(t)}, expected bool")
    return checker.diags


def parse_sl(text: str, ctx: SlContext, source: str | None = None) -> SlExpr:
    """Parse and type-check a complete expression."""
    ts = lex.stream(text, source)
    expr = parse_expr(ts)
    if not ts.at_eof():
        raise ts.error("trailing input after expression")
    diags = check_types(expr, ctx, source)
    if diags:
        raise TypeError_(diags)
    return expr


render_sl = render_expr


# ---------------------------------------------------------------------------
# Evaluation


class _Eval:
    def __init__(self, trace: SystemTrace, pre: int, post: int | None,
                 params: Mapping[str, Value], env: Mapping[str, str]):
        self.trace = trace
        self.pre = pre
        self.post = post
        self.params = dict(params)
        self.env = dict(env)
        self.pre_snap: Snapshot = trace.snapshot(pre)
        self.post_snap: Snapshot | None = trace.snapshot(post) if post is not None else None

    def resolve(self, ident: str) -> Value:
        if ident in self.env:
            return self.env[ident]
        if ident in self.params:
            return self.params[ident]
        return ident  # enum literal (validated by the type checker)

    def run(self, e: SlExpr) -> Value:
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Name):
            if e.ident not in self.env and e.ident not in self.params:
                # Enum literal; anything else is a type-checker escapee.
                return e.ident
            return self.resolve(e.ident)
        if isinstance(e, Attr):
            base = self.resolve(e.base)
            if base is None:
                raise EvalError(f"nil dereference at {e.base}.{e.attr}")
            snap = self.post_snap if e.primed else self.pre_snap
            assert snap is not None
            if not isinstance(base, str) or not snap.has_object(base):
                raise EvalError(f"object {base!r} does not exist in the "
                                f"{'post' if e.primed else 'pre'} snapshot")
            try:
                return snap.state_of(base).attr(e.attr)
            except KeyError:
                raise EvalError(f"object {base} has no attribute {e.attr}") from None
        if isinstance(e, Not):
            return not self.run(e.operand)
        if isinstance(e, Quant):
            population = sorted(objects_of(self.trace, self.pre, e.class_name))
            saved = self.env.get(e.var, _MISSING)
            try:
                results = []
                for oid in population:
                    self.env[e.var] = oid
                    results.append(bool(self.run(e.body)))
                return all(results) if e.kind == "forall" else any(results)
            finally:
                if saved is _MISSING:
                    self.env.pop(e.var, None)
                else:
                    self.env[e.var] = saved
        if isinstance(e, Linked):
            x, y = self.resolve(e.source), self.resolve(e.target)
            if x is None or y is None:
                raise EvalError(f"nil argument to linked({e.assoc}, ...)")
            return (e.assoc, x, y) in self.pre_snap.links
        if isinstance(e, Bin):
            left = self.run(e.left)
            if e.op == "&&":
                return bool(left) and bool(self.run(e.right))
            if e.op == "||":
                return bool(left) or bool(self.run(e.right))
            if e.op == "=>":
                return (not left) or bool(self.run(e.right))
            right = self.run(e.right)
            if e.op == "+":
                return left + right
            if e.op == "-":
                return left - right
            if e.op == "*":
                return left * right
            if e.op == "==":
                return left == right
            if e.op == "!=":
                return left != right
            if e.op == "<":
                return left < right
            if e.op == "<=":
                return left <= right
            if e.op == ">":
                return left > right
            if e.op == ">=":
                return left >= right
        raise TypeError(f"not an expression: {e!r}")


_MISSING = object()


def eval_single(e: SlExpr, trace: SystemTrace, step: int,
                env: Mapping[str, str] | None = None,
                params: Mapping[str, Value] | None = None) -> bool:
    """Evaluate a single-state expression at snapshot ``step``."""
    return bool(_Eval(trace, step, None, params or {}, env or {}).run(e))


def eval_pair(e: SlExpr, trace: SystemTrace, pre_step: int, post_step: int,
              params: Mapping[str, Value] | None = None,
              env: Mapping[str, str] | None = None) -> bool:
    """Evaluate a two-state expression; unprimed access reads ``pre_step``,
    primed access reads ``post_step``; quantifiers range over ``pre_step``."""
    if not pre_step < post_step:
        raise ValueError("pre_step must precede post_step")
    return bool(_Eval(trace, pre_step, post_step, params or {}, env or {}).run(e))


def eval_term(e: SlExpr, trace: SystemTrace, step: int,
              env: Mapping[str, str] | None = None,
              params: Mapping[str, Value] | None = None) -> Value:
    """Evaluate a (possibly non-boolean) term at one snapshot."""
    return _Eval(trace, step, None, params or {}, env or {}).run(e)
