import pytest

from conftest import TOY_SCENARIO, planted_for
from pathgauge.explorer import (
    AttackFound,
    Bounds,
    NoAttackWithinBound,
    RestrictionUnsatisfiable,
    Scenario,
    canonical_path,
    check_protocol,
    counted,
    enumerate_scenarios,
    explore,
    honest_execution,
    minimize_trace,
    replay,
    rule_applications,
)
from pathgauge.msr import Rule, fact
from pathgauge.properties import check_path_integrity
from pathgauge.protocols import MODELS, instantiate_model
from pathgauge.protocols.base import ProtocolSpec
from pathgauge.terms import EMPTY, Sort, Var, pub


class TestBounds:
    @pytest.mark.parametrize("kw", [
        {"min_path_length": 1}, {"max_path_length": 1}, {"max_agents": 1},
        {"max_steps": 0}, {"max_corrupt": -1}, {"recombination_depth": -1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Bounds(**kw)

    def test_defaults_match_the_acceptance_bounds(self):
        b = Bounds()
        assert (b.max_agents, b.max_path_length, b.max_steps, b.max_corrupt, b.recombination_depth) == (5, 4, 40, 2, 2)


class TestScenarios:
    def test_canonical_names(self):
        assert canonical_path(4) == (pub("A"), pub("M1"), pub("M2"), pub("E"))

    def test_enumeration_counts_corruption_patterns(self):
        # length n has n-1 corruptible agents; choose at most two of them
        got = enumerate_scenarios(Bounds())
        assert len(got) == (1 + 1) + (1 + 2 + 1) + (1 + 3 + 3)
        assert all(sc.initiator not in sc.corrupt for sc in got)
        assert len({(sc.path, sc.corrupt) for sc in got}) == len(got)

    def test_agent_budget_caps_path_length(self):
        got = enumerate_scenarios(Bounds(max_agents=3, max_path_length=4))
        assert max(len(sc.path) for sc in got) == 3

    def test_corrupt_initiator_rejected(self):
        with pytest.raises(ValueError):
            Scenario((pub("A"), pub("E")), frozenset({pub("A")}))

    def test_repeated_agent_rejected(self):
        with pytest.raises(ValueError):
            Scenario((pub("A"), pub("M"), pub("A")))

    def test_label(self):
        sc = Scenario((pub("A"), pub("M1"), pub("E")), frozenset({pub("M1")}))
        assert sc.label() == "A-M1*-E"


def test_step_counting():
    assert counted("Wrap") and counted("Inject")
    assert not any(counted(r) for r in ("Block", "Fun_senc", "Adv_Fr", "Corrupt_Ltk", "Corrupt_L"))


@pytest.mark.parametrize("k", [5, 8, 12])
def test_planted_violation_needs_exactly_k_steps(k):
    spec = planted_for(k)
    hit = explore(spec, TOY_SCENARIO, "path-integrity", Bounds(max_steps=k))
    miss = explore(spec, TOY_SCENARIO, "path-integrity", Bounds(max_steps=k - 1))
    assert isinstance(hit, AttackFound)
    assert rule_applications(hit.trace) == k
    assert isinstance(miss, NoAttackWithinBound)
    assert not miss.stats.truncated


def test_planted_violation_found_beyond_k():
    assert isinstance(explore(planted_for(8), TOY_SCENARIO, "path-integrity", Bounds(max_steps=20)), AttackFound)


@pytest.mark.parametrize("name", sorted(MODELS))
@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_honest_execution_reaches_the_final_agent(name, n):
    spec = instantiate_model(name)
    path = canonical_path(n)

    def everyone_forwarded(tr):
        adds = {(e.args[1],) + e.args[2:] for _, e in tr.events("Add")}
        done = {e.args[0] for _, e in tr.events("Forward") if e.args in adds}
        return done >= set(path[1:])

    # the shortest run may skip hops (mcTLS allows that), so ask for all of them
    trace = honest_execution(spec, Scenario(path), Bounds(max_steps=80), goal=everyone_forwarded)
    assert trace is not None
    assert check_path_integrity(trace, spec.theory) is None


def test_unsatisfiable_prologue():
    A, E = Var("A", Sort.PUB), Var("E", Sort.PUB)
    rules = (
        Rule("Create", (fact("!Missing", A),), (fact("StartBuild", A, A),), (), "construction",
             (("A", "initiator"), ("E", "final"))),
    )
    v = explore(ProtocolSpec("broken", rules), Scenario((pub("A"), pub("E"))))
    assert isinstance(v, RestrictionUnsatisfiable)
    assert "Create" in v.reason


def test_attack_replays_and_minimizes():
    spec = instantiate_model("mctls")
    v = check_protocol(spec, "path-integrity")
    assert isinstance(v, AttackFound)
    _, again, _ = replay(spec, v.steps)
    assert again.steps == v.trace.steps
    steps, tr, viol = minimize_trace(spec, v.steps, "path-integrity", v.violation.clause)
    assert viol.clause == v.violation.clause
    assert len(steps) <= len(v.steps)
    _, again, _ = replay(spec, [(r.name, st.subst) for (r, _), st in zip(steps, tr.steps)])
    assert again.steps == tr.steps


def test_minimize_rejects_non_violating_steps():
    spec = instantiate_model("chaum")
    trace = honest_execution(spec, Scenario(canonical_path(3)))
    steps = [(st.rule, st.subst) for st in trace.steps]
    with pytest.raises(ValueError):
        minimize_trace(spec, steps, "path-integrity")


def test_search_is_deterministic():
    spec = instantiate_model("mbtls")
    a = check_protocol(spec, "path-integrity")
    b = check_protocol(spec, "path-integrity")
    assert a.trace.steps == b.trace.steps and a.scenario == b.scenario
    assert a.stats.to_dict() == b.stats.to_dict()


def test_state_cap_is_reported():
    spec = instantiate_model("example_pk")
    sc = Scenario(canonical_path(4), frozenset({pub("M1")}))
    v = explore(spec, sc, "path-integrity", Bounds(max_states=3))
    assert isinstance(v, NoAttackWithinBound) and v.stats.truncated


def test_empty_payload_constant_is_public():
    assert EMPTY.sort is Sort.PUB
