"""Verdicts of the built-in models and the shape of the two showcase attacks."""

import pytest

from conftest import TABLE_ROWS, fixed_result, table_result
from pathgauge.adversary import Knowledge
from pathgauge.explorer import AttackFound, replay, rule_applications
from pathgauge.properties import check, eval_trace_formula, path_integrity_formula
from pathgauge.protocols import MODELS, ROLES, instantiate_model
from pathgauge.terms import pub

M1, M2, M3 = pub("M1"), pub("M2"), pub("M3")


@pytest.mark.parametrize("name,prop,expected", TABLE_ROWS, ids=[f"{n}-{p}" for n, p, _ in TABLE_ROWS])
def test_verdict(name, prop, expected):
    v, seconds = table_result(name, prop)
    assert v.kind == expected
    assert seconds < 120
    assert not v.stats.truncated


@pytest.mark.parametrize("name,prop,expected", [r for r in TABLE_ROWS if r[2] == "AttackFound"],
                         ids=lambda x: x if isinstance(x, str) else "")
def test_table_attacks_replay_exactly(name, prop, expected):
    v, _ = table_result(name, prop)
    spec = instantiate_model(name)
    _, again, _ = replay(spec, v.steps)
    assert again.steps == v.trace.steps
    assert check(prop, again, spec.theory).clause == v.violation.clause


@pytest.mark.parametrize("name,prop", [(n, p) for n, p, e in TABLE_ROWS
                                       if e == "AttackFound" and p == "path-integrity"])
def test_table_attacks_refute_the_generic_formula(name, prop):
    v, _ = table_result(name, prop)
    assert not eval_trace_formula(v.trace, path_integrity_formula(), instantiate_model(name).theory).holds


def test_mbtls_table_attack_skips_an_honest_middlebox():
    v, _ = table_result("mbtls", "path-integrity")
    corrupt = v.scenario.corrupt
    victim = v.violation.binding("M_j")
    assert victim not in corrupt
    path = v.scenario.path
    i = path.index(victim)
    assert path[i - 1] in corrupt and v.violation.binding("M_i") in corrupt


class TestFirewall:
    """mbTLS with two colluding load balancers around an honest firewall."""

    def test_bypass(self):
        r = fixed_result("firewall")
        assert r.verdict == "AttackFound"
        assert r.scenario.corrupt == {M1, M3}
        forwarders = {e.args[0] for _, e in r.trace.events("Forward")}
        assert M3 in forwarders and M2 not in forwarders
        assert r.victims() == [M2]

    def test_minimized_and_replayed(self):
        r = fixed_result("firewall")
        assert r.minimized and r.replay_verified
        assert rule_applications(r.trace) <= 15


class TestWormhole:
    """Lightning unlock phase, A pays D through M1*, M2, M3*."""

    def test_attack_found_and_replayed(self):
        r = fixed_result("wormhole")
        assert r.verdict == "AttackFound" and r.replay_verified
        assert r.violation.property == "path-symmetry"

    def test_corrupt_pair_is_not_adjacent(self):
        r = fixed_result("wormhole")
        path = r.scenario.path
        a, b = sorted(path.index(c) for c in r.scenario.corrupt)
        assert b - a > 1

    def test_preimage_known_to_adversary(self):
        r = fixed_result("wormhole")
        (gen,) = [st for st in r.trace.steps if st.rule == "Gen_Invoice"]
        x = dict(gen.subst)["x:fresh"]
        k = Knowledge(r.trace.knowledge_upto(r.trace.last_time))
        assert any(str(t) == x for t in k.closure)

    def test_honest_hop_forwarded_but_never_settled(self):
        r = fixed_result("wormhole")
        assert r.violation.binding("M_j") == M2
        fw = {e.args[0] for _, e in r.trace.events("Forward")}
        bw = {e.args[0] for _, e in r.trace.events("Backward")}
        assert M2 in fw and M2 not in bw
        assert pub("A") in bw
        assert r.victims() == [M2]


@pytest.mark.parametrize("name", sorted(MODELS))
def test_model_hygiene(name):
    spec = instantiate_model(name)
    assert spec.name == name and spec.description
    assert {"construction", "receive"} <= spec.phases
    for r in spec.rules:
        assert all(role in ROLES for _, role in r.roles)
    assert instantiate_model(name) is spec


def test_unknown_model():
    with pytest.raises(KeyError):
        instantiate_model("nosuch")


def _backward_follows_forward(trace, corrupt):
    first_fw = {}
    for t, e in trace.events("Forward"):
        first_fw.setdefault(e.args[0], t)
    for t, e in trace.events("Backward"):
        a = e.args[0]
        if a in corrupt or a == pub("A"):
            continue
        assert a in first_fw and first_fw[a] <= t, f"{a} returned at {t} without forwarding"


def test_lightning_backward_needs_prior_forward():
    from pathgauge.explorer import Scenario, canonical_path, honest_execution

    spec = instantiate_model("lightning_unlock")
    for n in (2, 3, 4, 5):
        tr = honest_execution(spec, Scenario(canonical_path(n)))
        _backward_follows_forward(tr, set())
    r = fixed_result("wormhole")
    _backward_follows_forward(r.trace, r.scenario.corrupt)
