"""System model: well-formedness, queries, and the trace text format."""

import pytest

from docsem import (ENV, BoolDomain, ClassDecl, ClassTable, EnumDomain,
                    IntDomain, MsgEvent, ObjectState, OpSig, RefDomain,
                    Snapshot, SystemTrace, link_partners, objects_of,
                    parse_trace, render_trace, validate_system)
from docsem.diagnostics import ParseError


def flip_table() -> ClassTable:
    return ClassTable(
        classes=(ClassDecl("C", (("b", BoolDomain()),),
                           (OpSig("m", (IntDomain(0, 3),)),)),
                 ClassDecl("D")),
        generalization=frozenset({("D", "C")}))


def obj(b: bool, active=()) -> ObjectState:
    return ObjectState((("b", b),), frozenset(active))


def snap(*objects, links=frozenset()) -> Snapshot:
    return Snapshot(tuple(objects), frozenset(links))


def flip_trace() -> SystemTrace:
    """c1 receives m(1), flips b, then returns to the environment."""
    return SystemTrace(
        flip_table(),
        snap(("c1", "C", obj(False))),
        ((MsgEvent("call", ENV, "c1", "m", (1,)),
          snap(("c1", "C", obj(True, {"m"})))),
         (MsgEvent("return", "c1", ENV, "m"),
          snap(("c1", "C", obj(True))))))


class TestValidate:
    def test_single_object_no_events_is_valid(self):
        trace = SystemTrace(flip_table(), snap(("c1", "C", obj(True))))
        assert validate_system(trace) == []

    def test_call_return_bookkeeping_is_valid(self):
        assert validate_system(flip_trace()) == []

    def test_dropped_object_is_population_decrease(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("call", ENV, "c1", "m", (0,)), snap()),))
        messages = [v.message for v in validate_system(trace)]
        assert any("population decreased" in m for m in messages)

    def test_unmatched_return(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("return", "c1", ENV, "m"),
              snap(("c1", "C", obj(False)))),))
        messages = [v.message for v in validate_system(trace)]
        assert any("unmatched return" in m for m in messages)

    def test_concurrent_same_operation_rejected(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("call", ENV, "c1", "m", (0,)),
              snap(("c1", "C", obj(False, {"m"})))),
             (MsgEvent("call", ENV, "c1", "m", (1,)),
              snap(("c1", "C", obj(False, {"m"})))),))
        messages = [v.message for v in validate_system(trace)]
        assert any("concurrent invocation" in m for m in messages)

    def test_active_set_must_match_replay(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("call", ENV, "c1", "m", (0,)),
              snap(("c1", "C", obj(False)))),))  # active {m} missing
        messages = [v.message for v in validate_system(trace)]
        assert any("bookkeeping" in m for m in messages)

    def test_active_before_any_call_rejected(self):
        trace = SystemTrace(flip_table(), snap(("c1", "C", obj(False, {"m"}))))
        messages = [v.message for v in validate_system(trace)]
        assert any("before any call" in m for m in messages)

    def test_value_outside_domain(self):
        state = ObjectState((("b", 7),))
        trace = SystemTrace(flip_table(), snap(("c1", "C", state)))
        messages = [v.message for v in validate_system(trace)]
        assert any("outside Bool" in m for m in messages)

    def test_missing_and_undeclared_attributes(self):
        state = ObjectState((("z", 1),))
        trace = SystemTrace(flip_table(), snap(("c1", "C", state)))
        messages = [v.message for v in validate_system(trace)]
        assert any("misses attribute b" in m for m in messages)
        assert any("undeclared attribute z" in m for m in messages)

    def test_env_cannot_be_an_object(self):
        trace = SystemTrace(flip_table(), snap((ENV, "C", obj(False))))
        messages = [v.message for v in validate_system(trace)]
        assert any("'env'" in m for m in messages)

    def test_call_argument_outside_domain(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("call", ENV, "c1", "m", (9,)),
              snap(("c1", "C", obj(False, {"m"})))),))
        messages = [v.message for v in validate_system(trace)]
        assert any("argument 1 outside" in m for m in messages)

    def test_violations_carry_step_indices(self):
        trace = SystemTrace(
            flip_table(),
            snap(("c1", "C", obj(False))),
            ((MsgEvent("return", "c1", ENV, "m"),
              snap(("c1", "C", obj(False)))),))
        steps = [v.step for v in validate_system(trace)]
        assert 1 in steps


class TestClassTable:
    def test_cyclic_generalization_reported(self):
        table = ClassTable(
            (ClassDecl("A"), ClassDecl("B")),
            frozenset({("A", "B"), ("B", "A")}))
        assert any("cyclic" in p for p in table.validate())

    def test_duplicate_member_reported(self):
        table = ClassTable((ClassDecl("A", (("x", BoolDomain()),
                                            ("x", BoolDomain()))),))
        assert any("declared twice" in p for p in table.validate())

    def test_shadowing_inherited_member_reported(self):
        table = ClassTable(
            (ClassDecl("A", (("x", BoolDomain()),)),
             ClassDecl("B", (("x", IntDomain(0, 1)),))),
            frozenset({("B", "A")}))
        assert any("shadows" in p for p in table.validate())

    def test_bad_domains_reported(self):
        table = ClassTable((ClassDecl("A", (("e", EnumDomain(())),
                                            ("i", IntDomain(3, 1)),
                                            ("r", RefDomain("Nope")))),))
        problems = "\n".join(table.validate())
        assert "empty enumeration" in problems
        assert "empty integer range" in problems
        assert "unknown class Nope" in problems

    def test_inherited_members_visible(self):
        table = flip_table()
        assert dict(table.effective_attrs("D")) == {"b": BoolDomain()}
        assert table.find_op("D", "m") is not None


class TestQueries:
    def test_objects_of_includes_subclasses(self):
        table = flip_table()
        trace = SystemTrace(table, snap(("d1", "D", obj(True))))
        assert objects_of(trace, 0, "C") == {"d1"}

    def test_objects_of_empty_snapshot(self):
        trace = SystemTrace(flip_table(), snap())
        assert objects_of(trace, 0, "C") == frozenset()

    def test_objects_of_two_instances(self):
        trace = SystemTrace(flip_table(),
                            snap(("c1", "C", obj(True)), ("c2", "C", obj(False))))
        assert objects_of(trace, 0, "C") == {"c1", "c2"}

    def test_objects_of_errors(self):
        trace = SystemTrace(flip_table(), snap())
        with pytest.raises(KeyError):
            objects_of(trace, 0, "Nope")
        with pytest.raises(IndexError):
            objects_of(trace, 5, "C")

    def test_objects_of_monotone_under_creation(self):
        table = flip_table()
        trace = SystemTrace(
            table,
            snap(("c1", "C", obj(False))),
            ((MsgEvent("call", ENV, "d1", "m", (0,)),
              snap(("c1", "C", obj(False)),
                   ("d1", "D", obj(True, {"m"})))),))
        assert validate_system(trace) == []
        earlier = objects_of(trace, 0, "C")
        later = objects_of(trace, 1, "C")
        assert earlier <= later

    def test_link_partners(self):
        s = snap(("c1", "C", obj(True)), ("a1", "D", obj(True)),
                 ("a2", "D", obj(True)),
                 links={("Owns", "c1", "a1"), ("Owns", "c1", "a2")})
        assert link_partners(s, "Owns", "c1", "source") == {"a1", "a2"}
        assert link_partners(s, "Owns", "a1", "target") == {"c1"}
        assert link_partners(s, "Other", "c1", "source") == frozenset()

    def test_link_partners_unknown_object(self):
        with pytest.raises(KeyError):
            link_partners(snap(), "Owns", "ghost", "source")


class TestTraceFormat:
    def test_round_trip(self):
        trace = flip_trace()
        text = render_trace(trace)
        assert parse_trace(text) == trace

    def test_round_trip_with_links_and_refs(self):
        table = ClassTable(
            (ClassDecl("C", (("r", RefDomain("D")),)),
             ClassDecl("D", (("color", EnumDomain(("red", "blue"))),))))
        trace = SystemTrace(
            table,
            Snapshot((("c1", "C", ObjectState((("r", "d1"),))),
                      ("d1", "D", ObjectState((("color", "red"),)))),
                     frozenset({("Owns", "c1", "d1")})))
        assert parse_trace(render_trace(trace)) == trace

    def test_parse_reports_position(self):
        with pytest.raises(ParseError) as err:
            parse_trace("system {\n  classes { C }\n  snapshot { oops }\n}")
        diag = err.value.diagnostics[0]
        assert diag.line == 3

    def test_comments_and_whitespace_ignored(self):
        text = """
        // a trace
        system { classes { C(b: Bool) }
          snapshot { obj c1: C { b = true } links { } active { } } }
        """
        trace = parse_trace(text)
        assert trace.initial.state_of("c1").attr("b") is True

    def test_example_from_format_sketch(self):
        text = ("system { classes { C(a: Int[0..3]; op m(Int[0..3])) ; "
                "D extends C } snapshot { obj a1: C { a = 0 } links { } "
                "active { } } event call env -> a1 : m(1) snapshot { "
                "obj a1: C { a = 1 } links { } active { a1.m } } }")
        trace = parse_trace(text)
        assert trace.class_table.is_kind_of("D", "C")
        assert trace.events()[0].args == (1,)
        assert validate_system(trace) == []
