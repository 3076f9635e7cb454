import pytest

from pathgauge.msr import (
    Fact,
    FreshSupply,
    Rule,
    RuleError,
    StaleInstance,
    State,
    Trace,
    TraceStep,
    applicable_instances,
    apply_rule,
    eval_restrictions,
    fact,
)
from pathgauge.terms import Sort, SortError, Var, app, fresh, pub

A, B = Var("A", Sort.PUB), Var("B", Sort.PUB)
k, x = Var("k", Sort.FRESH), Var("x")

gen = Rule("Gen", (fact("Fr", k),), (), (fact("!Ltk", A, k), fact("!Pk", A, app("pk", k))), "setup")
send = Rule("Send", (fact("Tok", A),), (fact("Sent", A),), (fact("Net", A),), "construction")
recv = Rule("Recv", (fact("Net", x),), (), (fact("!Got", x),), "receive")


def test_fresh_values_are_never_reused():
    s0 = State()
    s1, st1, full1 = apply_rule(s0, gen, {A: pub("a")})
    s2, st2, full2 = apply_rule(s1, gen, {A: pub("b")})
    assert full1[k] is not full2[k]
    assert st1.time == 1 and st2.time == 2
    with pytest.raises(StaleInstance):
        apply_rule(s2, gen, {A: pub("c"), k: full1[k]})


def test_fresh_variable_must_be_fresh_sorted():
    with pytest.raises((StaleInstance, SortError)):
        apply_rule(State(), gen, {A: pub("a"), k: pub("oops")})


def test_linear_facts_are_consumed_and_persistent_kept():
    s = State.build([fact("Tok", pub("a")), fact("Tok", pub("a"))])
    s, step, _ = apply_rule(s, send, {A: pub("a")})
    assert s.count(fact("Tok", pub("a"))) == 1
    assert step.events == (fact("Sent", pub("a")),)
    s, _, _ = apply_rule(s, send, {A: pub("a")})
    assert s.count(fact("Tok", pub("a"))) == 0
    with pytest.raises(StaleInstance):
        apply_rule(s, send, {A: pub("a")})
    s, _, _ = apply_rule(s, recv, {x: pub("a")})
    s, _, _ = apply_rule(s, recv, {x: pub("a")})
    assert s.count(fact("!Got", pub("a"))) == 1


def test_conclusions_are_normalized():
    r = Rule("Dec", (fact("In", x),), (), (fact("Out", app("fst", x)),), "forwarding")
    s = State.build([fact("In", app("pair", pub("a"), pub("b")))])
    s, _, _ = apply_rule(s, r, {x: app("pair", pub("a"), pub("b"))})
    assert s.count(fact("Out", pub("a"))) == 1


def test_learned_terms_recorded():
    r = Rule("Learn", (fact("Net", x),), (fact("K", x),), (fact("!K", x),), "adversary")
    s = State.build([fact("Net", pub("m"))])
    s, step, _ = apply_rule(s, r, {x: pub("m")})
    assert step.learned == frozenset({pub("m")})
    assert s.knowledge() == frozenset({pub("m")})
    assert step.adversarial


def test_applicable_instances_multiset_semantics():
    two = Rule("Two", (fact("Tok", A), fact("Tok", B)), (), (), "forwarding")
    s = State.build([fact("Tok", pub("a"))])
    assert applicable_instances(s, [two]) == []
    s = State.build([fact("Tok", pub("a")), fact("Tok", pub("a"))])
    assert [sub for _, sub in applicable_instances(s, [two])] == [{A: pub("a"), B: pub("a")}]


def test_applicable_instances_range_free_publics():
    r = Rule("Pick", (), (fact("Chose", A),), (), "forwarding")
    got = applicable_instances(State(), [r], publics=[pub("a"), pub("b")])
    assert [s[A] for _, s in got] == [pub("a"), pub("b")]


def test_unbound_conclusion_variable_rejected():
    with pytest.raises(RuleError):
        Rule("Bad", (), (), (fact("Out", x),), "forwarding")


def test_only_fresh_makes_fr():
    with pytest.raises(RuleError):
        Rule("Bad", (), (), (fact("Fr", k),), "forwarding")


def test_unknown_phase_rejected():
    with pytest.raises(RuleError):
        Rule("Bad", (), (), (), "nonsense")


def test_trace_markers_strictly_increase():
    t = Trace().append(TraceStep(1, "r", (), ()))
    with pytest.raises(RuleError):
        t.append(TraceStep(1, "r", (), ()))


def test_knowledge_upto():
    t = Trace((TraceStep(1, "a", (), (), frozenset({pub("x")})),
               TraceStep(2, "b", (), (), frozenset({pub("y")}))))
    assert t.knowledge_upto(1) == {pub("x")}
    assert t.knowledge_upto(2) == {pub("x"), pub("y")}


def test_equal_restriction():
    ok = [fact("Equal", app("fst", app("pair", pub("a"), pub("b"))), pub("a"))]
    bad = [fact("Equal", pub("a"), pub("b"))]
    assert eval_restrictions(ok)
    assert not eval_restrictions(bad)


def test_fact_helpers():
    f = fact("!Ltk", pub("a"), fresh("k"))
    assert f.persistent and f.name == "Ltk"
    assert str(f) == "!Ltk('a', ~k)"
    assert Fact("X", (x,)).variables == {x}
    assert not Fact("X", (x,)).is_ground


def test_fresh_supply():
    s = FreshSupply("t")
    assert [s(), s()] == [fresh("t1"), fresh("t2")]
