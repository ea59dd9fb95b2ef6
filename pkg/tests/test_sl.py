"""Expression language: parsing, typing, rendering, evaluation, oracles."""

import random

import pytest

from docsem import (BoolDomain, ClassDecl, ClassTable, IntDomain, ObjectState,
                    Snapshot, SystemTrace, eval_pair, eval_single, parse_sl,
                    render_sl)
from docsem.diagnostics import EvalError, ParseError, TypeError_
from docsem.sl import (SINGLE, TWO, Attr, Bin, Lit, Name, Not, Quant,
                       SlContext, check_types, parse_expr)
from docsem import lex

from conftest import (ExprGen, OracleError, oracle_eval, random_params,
                      random_snapshot, rich_context, rich_table)


def bool_ctx(mode=SINGLE) -> SlContext:
    table = ClassTable((ClassDecl("C", (("b", BoolDomain()),)),))
    return SlContext(mode, table)


class TestParse:
    def test_connectives(self):
        e = parse_sl("true && !false", bool_ctx())
        assert e == Bin("&&", Lit(True), Not(Lit(False)))

    def test_quantifier_over_account(self):
        table = ClassTable((ClassDecl("Account", (("balance", IntDomain(0, 3)),)),))
        ctx = SlContext(SINGLE, table)
        e = parse_sl("forall a: Account . a.balance >= 0", ctx)
        assert e == Quant("forall", "a", "Account",
                          Bin(">=", Attr("a", "balance"), Lit(0)))

    def test_primed_in_single_state_mode_is_type_error(self):
        table = ClassTable((ClassDecl("Account",
                                      (("balance", IntDomain(0, 9)),
                                       ("amount", IntDomain(0, 9)),)),))
        ctx = SlContext(SINGLE, table, vars={"self": "Account"})
        with pytest.raises(TypeError_) as err:
            parse_sl("self.balance' == self.balance + self.amount", ctx)
        assert "two-state" in str(err.value)

    def test_precedence_implication_right_associative(self):
        e = parse_sl("true => false => true", bool_ctx())
        assert e == Bin("=>", Lit(True), Bin("=>", Lit(False), Lit(True)))

    def test_arithmetic_precedence(self):
        ctx = rich_context()
        e = parse_sl("p + p * 2 == 3", ctx)
        assert e == Bin("==", Bin("+", Name("p"), Bin("*", Name("p"), Lit(2))),
                        Lit(3))

    def test_negative_literal_and_subtraction(self):
        ctx = rich_context()
        assert parse_sl("p - 1 >= -2", ctx) == \
            Bin(">=", Bin("-", Name("p"), Lit(1)), Lit(-2))

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as err:
            parse_sl("true &&", bool_ctx())
        assert err.value.diagnostics[0].col == 8

    def test_nil_and_linked(self):
        ctx = rich_context()
        e = parse_sl("forall c: C . c.r == nil || linked(Owns, c, rd)", ctx)
        assert isinstance(e, Quant)


class TestTyping:
    def test_enum_vs_int_comparison_rejected(self):
        ctx = rich_context()
        with pytest.raises(TypeError_) as err:
            parse_sl("e == 3", ctx)
        assert "cannot compare" in str(err.value)

    def test_unknown_attribute(self):
        ctx = rich_context()
        with pytest.raises(TypeError_):
            parse_sl("forall c: C . c.missing", ctx)

    def test_unknown_class_in_quantifier(self):
        with pytest.raises(TypeError_):
            parse_sl("forall x: Ghost . true", bool_ctx())

    def test_unknown_name(self):
        with pytest.raises(TypeError_):
            parse_sl("mystery", bool_ctx())

    def test_linked_end_class_mismatch(self):
        ctx = rich_context()
        with pytest.raises(TypeError_) as err:
            parse_sl("forall d: D . linked(Owns, d, d)", ctx)
        assert "source end" in str(err.value)

    def test_non_boolean_top_level_rejected(self):
        ctx = rich_context()
        with pytest.raises(TypeError_) as err:
            parse_sl("p + 1", ctx)
        assert "expected bool" in str(err.value)

    def test_enum_literal_against_attribute(self):
        ctx = rich_context()
        parse_sl("forall c: C . c.color == red", ctx)  # must not raise


def one_object_trace(b: bool) -> SystemTrace:
    table = ClassTable((ClassDecl("C", (("b", BoolDomain()),)),))
    return SystemTrace(table, Snapshot((("c1", "C", ObjectState((("b", b),))),)))


class TestEvalSingle:
    def test_vacuous_forall_true(self):
        table = ClassTable((ClassDecl("C", (("b", BoolDomain()),)),))
        trace = SystemTrace(table, Snapshot())
        e = parse_sl("forall x: C . x.b", SlContext(SINGLE, table))
        assert eval_single(e, trace, 0) is True

    def test_forall_false_when_witness_false(self):
        trace = one_object_trace(False)
        e = parse_sl("forall x: C . x.b", SlContext(SINGLE, trace.class_table))
        assert eval_single(e, trace, 0) is False

    def test_exists_with_expansion_oracle(self):
        # Objects carry n = 0 and n = 2; the expansion (0==2) or (2==2) is
        # true, frozen here as the expected value.
        table = ClassTable((ClassDecl("C", (("n", IntDomain(0, 3)),)),))
        trace = SystemTrace(table, Snapshot((
            ("c1", "C", ObjectState((("n", 0),))),
            ("c2", "C", ObjectState((("n", 2),))))))
        e = parse_sl("exists x: C . x.n == 2", SlContext(SINGLE, table))
        assert eval_single(e, trace, 0) is True
        assert oracle_eval(e, trace, 0, None, {}, {}) is True

    def test_nil_dereference_is_an_error_not_false(self):
        ctx = rich_context()
        trace = SystemTrace(rich_table(), Snapshot())
        e = parse_sl("rd.flag", ctx)
        with pytest.raises(EvalError):
            eval_single(e, trace, 0, params={"rd": None})

    def test_arithmetic_is_exact_beyond_domains(self):
        ctx = rich_context()
        trace = SystemTrace(rich_table(), Snapshot())
        e = parse_sl("p * p * p * p * p * p * p * p * p * p < 1048577", ctx)
        assert eval_single(e, trace, 0, params={"p": 2}) is True


class TestEvalPair:
    def two_step_trace(self, before: int, after: int) -> SystemTrace:
        table = ClassTable((ClassDecl("Account",
                                      (("balance", IntDomain(0, 3)),),
                                      (OpSig("deposit", (IntDomain(0, 3),)),))),)
        from docsem import MsgEvent, OpSig as _  # noqa: F401
        from docsem import ENV, MsgEvent
        return SystemTrace(
            table,
            Snapshot((("a1", "Account", ObjectState((("balance", before),))),)),
            ((MsgEvent("call", ENV, "a1", "deposit", (1,)),
              Snapshot((("a1", "Account",
                         ObjectState((("balance", after),), frozenset({"deposit"}))),))),))

    def test_boolean_flip(self):
        from docsem import ENV, MsgEvent, OpSig
        table = ClassTable((ClassDecl("C", (("b", BoolDomain()),),
                                      (OpSig("m"),)),))
        trace = SystemTrace(
            table,
            Snapshot((("c1", "C", ObjectState((("b", False),))),)),
            ((MsgEvent("call", ENV, "c1", "m"),
              Snapshot((("c1", "C", ObjectState((("b", True),),
                                                frozenset({"m"}))),))),))
        ctx = SlContext(TWO, table, vars={"self": "C"})
        e = parse_sl("self.b' == !self.b", ctx)
        assert eval_pair(e, trace, 0, 1, env={"self": "c1"}) is True

    def test_balance_post_matches_amount(self):
        trace = self.two_step_trace(0, 1)
        ctx = SlContext(TWO, trace.class_table,
                        params={"amount": IntDomain(0, 3)},
                        vars={"self": "Account"})
        e = parse_sl("self.balance' == self.balance + amount", ctx)
        assert eval_pair(e, trace, 0, 1, params={"amount": 1},
                         env={"self": "a1"}) is True
        assert eval_pair(e, trace, 0, 1, params={"amount": 2},
                         env={"self": "a1"}) is False

    def test_pre_must_precede_post(self):
        trace = self.two_step_trace(0, 1)
        ctx = SlContext(TWO, trace.class_table, vars={"self": "Account"})
        e = parse_sl("self.balance' >= self.balance", ctx)
        with pytest.raises(ValueError):
            eval_pair(e, trace, 1, 1, env={"self": "a1"})


from docsem import OpSig  # noqa: E402


class TestRenderRoundTrip:
    def test_hand_cases(self):
        ctx = rich_context(TWO)
        cases = [
            "true && !false",
            "forall c: C . c.n + 1 <= 3 => c.b",
            "exists c: C . exists d: D . linked(Owns, c, d) && c.r == d",
            "p - 1 >= -2",
            "forall c: C . c.b' == !c.b",
            "(true || false) && true",
            "forall c: C . !(c.b && c.n == 0)",
        ]
        for text in cases:
            ast = parse_sl(text, ctx)
            again = parse_sl(render_sl(ast), ctx)
            assert again == ast, text

    def test_generated_round_trip(self, rng):
        ctx = rich_context(TWO)
        gen = ExprGen(rng, two_state=True)
        for _ in range(400):
            ast = gen.expr(depth=4)
            assert not check_types(ast, ctx), render_sl(ast)
            text = render_sl(ast)
            assert parse_sl(text, ctx) == ast, text


class TestOracleAgreement:
    def test_eval_matches_explicit_expansion(self, rng):
        ctx = rich_context()
        gen = ExprGen(rng, two_state=False)
        table = rich_table()
        agreements = 0
        for _ in range(500):
            snap = random_snapshot(rng, table, max_objects=3)
            trace = SystemTrace(table, snap)
            expr = gen.expr(depth=3)
            assert not check_types(expr, ctx)
            params = random_params(rng, snap)
            try:
                expected = oracle_eval(expr, trace, 0, None, {}, params)
                got = eval_single(expr, trace, 0, params=params)
                assert got == bool(expected)
            except (OracleError, EvalError):
                # Both routes must agree that evaluation is undefined.
                with pytest.raises(EvalError):
                    eval_single(expr, trace, 0, params=params)
            agreements += 1
        assert agreements == 500

    def test_total_without_nil_dereference(self, rng):
        # No ref-typed parameter access: type-correct evaluation never raises.
        ctx = rich_context()
        gen = ExprGen(rng, two_state=False, param_derefs=False)
        table = rich_table()
        for _ in range(300):
            snap = random_snapshot(rng, table, max_objects=2)
            # Strip nil references so attribute chains stay defined.
            entries = []
            for oid, cls, state in snap.objects:
                attrs = tuple((a, v) for a, v in state.attrs)
                entries.append((oid, cls, ObjectState(attrs, state.active)))
            trace = SystemTrace(table, Snapshot(tuple(entries), snap.links))
            expr = gen.expr(depth=3)
            params = random_params(rng, snap)
            params["rd"] = None
            try:
                result = eval_single(expr, trace, 0, params=params)
            except EvalError as err:
                assert "nil" in str(err) or "does not exist" in str(err)
                continue
            assert isinstance(result, bool)
