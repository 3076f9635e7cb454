import random

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ATOMS, terms
from pathgauge.adversary import (
    INJECT,
    Knowledge,
    adversary_rules,
    analz,
    construction_plan,
    derivable,
    saturate,
    synth,
)
from pathgauge.explorer import Scenario, honest_execution
from pathgauge.msr import State, apply_rule, fact
from pathgauge.properties import eval_trace_formula, secrecy_formula
from pathgauge.protocols import instantiate_model
from pathgauge.terms import DEFAULT_THEORY as TH, Name, Sort, app, depth, fresh, pair, pub, subterms

KEYS = [fresh("k1"), fresh("k2"), fresh("k3")]
SECRETS = [fresh("s1"), fresh("s2"), pub("a"), pub("b")]


def random_message(rng, depth):
    if depth <= 1 or rng.random() < 0.3:
        return rng.choice(SECRETS + KEYS)
    f = rng.choice(["pair", "senc", "aenc", "sign", "h", "pk"])
    if f == "senc":
        return app("senc", random_message(rng, depth - 1), rng.choice(KEYS + [random_message(rng, 2)]))
    if f == "aenc":
        return app("aenc", random_message(rng, depth - 1), app("pk", rng.choice(KEYS)))
    if f == "sign":
        return app("sign", random_message(rng, depth - 1), rng.choice(KEYS))
    if f in ("h", "pk"):
        return app(f, random_message(rng, depth - 1))
    return pair(random_message(rng, depth - 1), random_message(rng, depth - 1))


def goals_for(rng, known):
    subs = sorted({s for t in known for s in subterms(t)}, key=str)
    pool = subs + SECRETS + KEYS
    out = set(pool)
    for _ in range(12):
        a, b = rng.choice(pool), rng.choice(pool)
        out.add(rng.choice([pair(a, b), app("senc", a, b), app("h", a), app("aenc", a, app("pk", b))]))
    return sorted(out, key=str)


def test_derivable_agrees_with_saturation_on_1000_sets():
    rng = random.Random(7)
    disagreements = []
    checked = 0
    for _ in range(1000):
        known = [random_message(rng, rng.randint(1, 4)) for _ in range(rng.randint(1, 6))]
        goals = goals_for(rng, known)
        universe = {s for t in list(known) + goals for s in subterms(t)}
        publics = [t for t in universe if isinstance(t, Name) and t.sort is Sort.PUB]
        sat = saturate(known, max(depth(g) for g in goals), TH, publics=publics, universe=universe)
        k = Knowledge(known)
        for g in goals:
            checked += 1
            if k.derivable(g) != (g in sat):
                disagreements.append((known, g))
    assert checked > 10_000
    assert disagreements == []


def test_saturation_without_universe_is_constructor_only():
    k = [pub("a"), fresh("k")]
    sat = saturate(k, 1)
    assert app("senc", pub("a"), fresh("k")) in sat
    assert not any(isinstance(t, type(app("h", pub("a")))) and t.fn in TH.destructors for t in sat)


@settings(max_examples=60, deadline=None)
@given(st.lists(terms(3, destructors=False), min_size=1, max_size=3),
       st.lists(terms(3, destructors=False), max_size=2))
def test_saturation_is_monotone(k1, k2):
    assert saturate(k1, 1) <= saturate(k1 + k2, 1)


@settings(max_examples=200, deadline=None)
@given(st.lists(terms(4, destructors=False), min_size=1, max_size=5))
def test_analz_is_closed_and_extensive(known):
    c = analz(known)
    assert set(known) <= c
    assert analz(c) == c


@settings(max_examples=200, deadline=None)
@given(st.lists(terms(4, destructors=False), min_size=1, max_size=5), terms(4, destructors=False))
def test_opens_matches_its_definition(known, t):
    k = Knowledge(known)
    more = set(k.closure) | {t}
    grows = any(not synth(u, more) for u in analz(more))
    assert k.opens(t) == (not synth(t, k.closure) and grows)


def test_decryption_needs_the_key():
    c = app("senc", fresh("s"), fresh("k"))
    assert not derivable(fresh("s"), [c])
    assert derivable(fresh("s"), [c, fresh("k")])
    a = app("aenc", fresh("s"), app("pk", fresh("k")))
    assert not derivable(fresh("s"), [a, app("pk", fresh("k"))])
    assert derivable(fresh("s"), [a, fresh("k")])


def test_key_hidden_inside_pair_is_found():
    c = app("senc", fresh("s"), fresh("k"))
    assert derivable(fresh("s"), [c, pair(pub("x"), fresh("k"))])


def test_publics_are_always_derivable():
    assert derivable(pub("anyone"), [])
    assert not derivable(fresh("n"), [])
    assert derivable(app("h", pair(pub("a"), pub("b"))), [])


def test_signature_does_not_leak_the_key():
    assert not derivable(fresh("k"), [app("sign", pub("m"), fresh("k"))])


def test_destructor_goals_are_normalized():
    assert derivable(app("fst", pair(fresh("s"), pub("b"))), [pair(fresh("s"), pub("b"))])


def test_construction_plan_rebuilds_goal():
    known = {fresh("k"), pub("m")}
    goal = app("senc", pair(pub("m"), fresh("k")), fresh("k"))
    plan = construction_plan(goal, set(known))
    state = State.build([], [fact("!K", t) for t in known])
    for rule, s in plan:
        state, _, _ = apply_rule(state, rule, s)
    assert goal in state.knowledge()


def test_adversary_rule_set():
    names = {r.name for r in adversary_rules()}
    assert {"Inject", "Block", "Adv_Pub", "Adv_Fr", "Fun_senc", "Fun_sdec", "Corrupt_Ltk"} <= names
    assert INJECT.phase == "adversary"


def test_payload_secrecy_baseline():
    spec = instantiate_model("example_pk")
    sc = Scenario((pub("A"), pub("M1"), pub("E")))
    trace = honest_execution(spec, sc)
    assert trace is not None
    (p,) = [e.args[1] for _, e in trace.events("StartBuild")]
    k = Knowledge(trace.knowledge_upto(trace.last_time))
    assert k.closure  # the adversary saw the traffic
    assert not k.derivable(p)
    assert eval_trace_formula(trace, secrecy_formula(p, pub("A"), pub("E"))).holds
