"""Shared fixtures: a planted-violation toy protocol, term strategies and the
verdict table (computed once per session, it is the slowest part)."""

from __future__ import annotations

import time

import pytest
from hypothesis import strategies as st

from pathgauge import properties as props
from pathgauge.explorer import Bounds, Scenario, check_protocol
from pathgauge.msr import Rule, fact
from pathgauge.protocols import firewall_scenario, instantiate_model, wormhole_scenario
from pathgauge.protocols.base import ProtocolSpec
from pathgauge.terms import EMPTY, Sort, Var, app, fresh, pair, pub

# -- toy protocol --------------------------------------------------------------

A, M, N, E = Var("A", Sort.PUB), Var("M", Sort.PUB), Var("N", Sort.PUB), Var("E", Sort.PUB)
p, m, c = Var("p", Sort.FRESH), Var("m"), Var("c")
ZERO = pub("0")


def tower(j: int):
    t = ZERO
    for _ in range(j):
        t = app("h", t)
    return t


def planted(ticks: int) -> ProtocolSpec:
    """Path protocol whose final agent may accept without the middle hop,
    but only after ``ticks`` private counter steps.

    The prologue costs three counted steps (Create, Wrap, Send), so the
    skip needs exactly ``ticks + 4`` rule applications.
    """
    rules = (
        Rule("Create", (fact("Fr", p),), (fact("Add", p, E, p, EMPTY), fact("StartBuild", A, p)),
             (fact("Build", p, E, p), fact("Ctr", p, ZERO)), "construction",
             (("A", "initiator"), ("E", "final"))),
        Rule("Wrap", (fact("Build", p, N, m),), (fact("Add", p, M, app("h", m), m),),
             (fact("Build", p, M, app("h", m)),), "construction", (("M", "hop"),)),
        Rule("Send", (fact("Build", p, N, m),), (), (fact("Net", m),), "construction"),
        Rule("Tick", (fact("Ctr", p, c),), (), (fact("Ctr", p, app("h", c)),), "forwarding"),
        Rule("Skip", (fact("Ctr", p, tower(ticks)), fact("!Final", E)),
             (fact("Forward", E, p, EMPTY),), (), "receive"),
        Rule("Gen_Final", (), (), (fact("!Final", E),), "setup", (("E", "final"),)),
    )
    return ProtocolSpec(f"planted_{ticks}", rules, constants=(ZERO,))


def planted_for(k: int) -> ProtocolSpec:
    """Toy whose only violation needs exactly ``k`` counted steps (Gen_Final adds one)."""
    return planted(k - 5)


TOY_SCENARIO = Scenario((pub("A"), pub("M1"), pub("E")))


@pytest.fixture
def toy():
    return planted_for


# -- term strategies ----------------------------------------------------------

ATOMS = [pub("a"), pub("b"), fresh("k1"), fresh("k2"), fresh("n"), EMPTY]
CONSTRUCTORS = [("pair", 2), ("senc", 2), ("aenc", 2), ("sign", 2), ("pk", 1), ("h", 1)]
DESTRUCTORS = [("fst", 1), ("snd", 1), ("sdec", 2), ("adec", 2), ("verify", 3)]


def terms(max_depth: int = 6, destructors: bool = True):
    symbols = CONSTRUCTORS + (DESTRUCTORS if destructors else [])

    def extend(children):
        return st.one_of(*[
            st.tuples(*[children] * n).map(lambda args, f=f: app(f, *args)) for f, n in symbols
        ])

    return st.recursive(st.sampled_from(ATOMS), extend, max_leaves=2 ** max_depth).filter(
        lambda t: _depth(t) <= max_depth)


def _depth(t):
    return 1 + max((_depth(a) for a in getattr(t, "args", ())), default=0)


# -- verdict table ------------------------------------------------------------

TABLE_ROWS = [
    ("mctls", "path-integrity", "AttackFound"),
    ("mbtls", "path-integrity", "AttackFound"),
    ("matls", "vd-path-integrity", "NoAttackWithinBound"),
    ("matls", "path-integrity", "AttackFound"),
    ("lightning_setup", "path-integrity", "NoAttackWithinBound"),
    ("lightning_unlock", "path-symmetry", "AttackFound"),
    ("chaum", "path-integrity", "NoAttackWithinBound"),
    ("tor_establish", "path-integrity", "NoAttackWithinBound"),
    ("tor_data", "path-integrity", "NoAttackWithinBound"),
    ("hornet", "path-integrity", "NoAttackWithinBound"),
    ("lightning_sig", "path-integrity", "NoAttackWithinBound"),
    ("lightning_sig", "path-symmetry", "NoAttackWithinBound"),
]

TABLE_BOUNDS = Bounds(max_agents=5, max_path_length=4, max_steps=40, max_corrupt=2, recombination_depth=2)

_TABLE: dict = {}
CROSS_CHECKS: dict = {}  # (name, prop) -> [traces checked, disagreements with the generic formula]


def _cross_checked(spec, prop: str):
    """The property checker, also comparing every trace the search evaluates
    against the generic formula evaluator (path integrity variants only)."""
    fn = props.CHECKERS[prop]
    if prop == props.PATH_SYMMETRY:
        return prop
    formula = props.path_integrity_formula(require_complete=prop == props.VD_PATH_INTEGRITY)
    tally = CROSS_CHECKS.setdefault((spec.name, prop), [0, 0])

    def check(trace):
        v = fn(trace, spec.theory)
        tally[0] += 1
        tally[1] += (v is None) != props.eval_trace_formula(trace, formula, spec.theory).holds
        return v

    return check


def table_result(name: str, prop: str):
    """(verdict, seconds) for one row under the acceptance bounds, memoized."""
    key = (name, prop)
    if key not in _TABLE:
        spec = instantiate_model(name)
        started = time.perf_counter()
        v = check_protocol(spec, _cross_checked(spec, prop), TABLE_BOUNDS)
        _TABLE[key] = (v, time.perf_counter() - started)
    return _TABLE[key]


_FIXED: dict = {}


def fixed_result(which: str):
    """Five-agent attack scenarios, memoized."""
    from pathgauge.report import AnalysisRequest, run_analysis

    if which not in _FIXED:
        if which == "wormhole":
            spec, sc = wormhole_scenario()
            prop = "path-symmetry"
        else:
            spec, sc = firewall_scenario()
            prop = "path-integrity"
        _FIXED[which] = run_analysis(AnalysisRequest(spec, prop, scenario=sc))
    return _FIXED[which]
