"""Bounded search over protocol executions.

A run starts with a deterministic prologue (setup, corruption, and the
initiator's construction of the onion/packet), then explores every
interleaving of honest forwarding, receive, response and verification
steps.  The network is fully adversarial: every Net fact is blocked into
the adversary's knowledge as soon as it appears and every honest Net
premise is satisfied by an explicit Inject step, preceded by whatever
Fun_f/Adv_Pub steps are needed to build the injected term.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from . import properties as props
from .adversary import (
    ADV_FR,
    BLOCK,
    CORRUPT_L,
    CORRUPT_LTK,
    CORRUPT_R,
    INJECT,
    Knowledge,
    adversary_rules,
    analz,
    construction_plan,
    decomposition_plan,
    head_of,
)
from .msr import (
    PHASE_RANK,
    Fact,
    Rule,
    StaleInstance,
    State,
    Trace,
    apply_rule,
    eval_restrictions,
    match_premises,
)
from .protocols.base import ProtocolSpec
from .terms import (
    EMPTY,
    App,
    Name,
    Sort,
    Term,
    TermParser,
    Var,
    apply_substitution,
    format_term,
    match,
    pub,
    subst_key,
    subterms,
)

HONEST_PHASES = ("forwarding", "receive", "response", "verification")
RELEVANT_EVENTS = frozenset({"Forward", "Backward", "Complete", "Add", "StartBuild", "Corrupt"})
UNCOUNTED = frozenset({"Block", "Adv_Pub", "Adv_Fr", "Corrupt_Ltk", "Corrupt_L", "Corrupt_R"})


def counted(rule_name: str) -> bool:
    """Whether a step counts towards the rule-application bound."""
    return rule_name not in UNCOUNTED and not rule_name.startswith("Fun_")


# -- bounds and scenarios ---------------------------------------------------

@dataclass(frozen=True)
class Bounds:
    max_agents: int = 5
    max_path_length: int = 4
    min_path_length: int = 2
    max_steps: int = 40
    max_corrupt: int = 2
    recombination_depth: int = 2
    max_states: int = 20_000
    max_candidates: int = 64

    def __post_init__(self):
        if self.min_path_length < 2:
            raise ValueError("a path has at least an initiator and a final agent")
        if self.max_path_length < self.min_path_length:
            raise ValueError("max_path_length is below min_path_length")
        if self.max_agents < 2:
            raise ValueError("max_agents must be at least 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.max_corrupt < 0 or self.recombination_depth < 0:
            raise ValueError("bounds must be non-negative")

    def to_dict(self) -> dict:
        return {
            "max_agents": self.max_agents,
            "path_length": [self.min_path_length, self.max_path_length],
            "max_steps": self.max_steps,
            "max_corrupt": self.max_corrupt,
            "recombination_depth": self.recombination_depth,
            "max_states": self.max_states,
            "max_candidates": self.max_candidates,
        }


@dataclass(frozen=True)
class Scenario:
    path: tuple[Term, ...]
    corrupt: frozenset = frozenset()

    def __post_init__(self):
        if len(self.path) < 2:
            raise ValueError("a path needs at least two agents")
        if len(set(self.path)) != len(self.path):
            raise ValueError("paths are non-repeating")
        if self.initiator in self.corrupt:
            raise ValueError("the initiator is always honest")
        if not self.corrupt <= set(self.path):
            raise ValueError("corrupt agents must lie on the path")

    @property
    def initiator(self) -> Term:
        return self.path[0]

    @property
    def final(self) -> Term:
        return self.path[-1]

    @property
    def intermediates(self) -> tuple[Term, ...]:
        return self.path[1:-1]

    @property
    def honest(self) -> tuple[Term, ...]:
        return tuple(a for a in self.path if a not in self.corrupt)

    def label(self) -> str:
        marks = [format_term(a).strip("'") + ("*" if a in self.corrupt else "") for a in self.path]
        return "-".join(marks)

    def to_dict(self) -> dict:
        return {
            "path": [format_term(a) for a in self.path],
            "corrupt": sorted(format_term(a) for a in self.corrupt),
        }


def canonical_path(n: int) -> tuple[Term, ...]:
    if n < 2:
        raise ValueError("a path needs at least two agents")
    return (pub("A"),) + tuple(pub(f"M{i}") for i in range(1, n - 1)) + (pub("E"),)


def enumerate_scenarios(bounds: Bounds) -> list[Scenario]:
    """Canonical scenarios: agents are named by path position, so each
    structural class (length, corrupt positions) appears exactly once."""
    out = []
    top = min(bounds.max_path_length, bounds.max_agents)
    for n in range(bounds.min_path_length, top + 1):
        path = canonical_path(n)
        others = path[1:]
        for k in range(0, min(bounds.max_corrupt, len(others)) + 1):
            for combo in itertools.combinations(others, k):
                out.append(Scenario(path, frozenset(combo)))
    return out


# -- verdicts ----------------------------------------------------------------

@dataclass
class Stats:
    states: int = 0
    transitions: int = 0
    scenarios: int = 0
    elapsed: float = 0.0
    truncated: bool = False

    def merge(self, other: Stats) -> None:
        self.states += other.states
        self.transitions += other.transitions
        self.scenarios += other.scenarios
        self.elapsed += other.elapsed
        self.truncated |= other.truncated

    def to_dict(self) -> dict:
        return {"states": self.states, "transitions": self.transitions,
                "scenarios": self.scenarios, "truncated": self.truncated}


@dataclass
class AttackFound:
    scenario: Scenario
    trace: Trace
    steps: list
    violation: props.Violation
    stats: Stats = field(default_factory=Stats)
    kind: str = "AttackFound"


@dataclass
class NoAttackWithinBound:
    bounds: Bounds
    scenarios: list
    stats: Stats = field(default_factory=Stats)
    kind: str = "NoAttackWithinBound"


@dataclass
class RestrictionUnsatisfiable:
    scenario: Scenario
    reason: str
    stats: Stats = field(default_factory=Stats)
    kind: str = "RestrictionUnsatisfiable"


Verdict = AttackFound | NoAttackWithinBound | RestrictionUnsatisfiable


# -- skeleton types ----------------------------------------------------------

HOLE = Var("_")
PUB_SLOT = Var("_p", Sort.PUB)
FRESH_SLOT = Var("_f", Sort.FRESH)
SKELETON_DEPTH = 6


def skeleton(t: Term, depth: int = SKELETON_DEPTH) -> Term:
    """Constructor shape of ``t`` with names replaced by sort slots."""
    if isinstance(t, Name):
        return PUB_SLOT if t.sort is Sort.PUB else FRESH_SLOT
    if isinstance(t, App):
        if depth <= 0:
            return HOLE
        return App(t.fn, tuple(skeleton(a, depth - 1) for a in t.args))
    return HOLE


def fits(t: Term, skel: Term) -> bool:
    if skel is HOLE:
        return True
    if skel is PUB_SLOT:
        return isinstance(t, Name) and t.sort is Sort.PUB
    if skel is FRESH_SLOT:
        return isinstance(t, Name) and t.sort is Sort.FRESH
    if isinstance(skel, App):
        return (isinstance(t, App) and t.fn == skel.fn and len(t.args) == len(skel.args)
                and all(fits(a, s) for a, s in zip(t.args, skel.args)))
    return False


Types = dict  # (rule name, var ident) -> frozenset of skeletons


# -- search nodes ------------------------------------------------------------

@dataclass
class Node:
    state: State
    trace: Trace
    steps: tuple
    cost: int
    knowledge: Knowledge

    def key(self) -> tuple:
        """Dedup key: two nodes with equal keys have the same futures as far
        as the goals are concerned.  Forward events only matter when they
        match an Add (the goals never look at others)."""
        adds = {(e.args[1],) + e.args[2:] for _, e in self.trace.events("Add")}
        events = frozenset(
            e for st in self.trace.steps for e in st.events
            if e.name in RELEVANT_EVENTS and (e.name != "Forward" or e.args in adds))
        pers = frozenset(f for f in self.state.persistent if f.name != "K")
        basis = frozenset(t for t in self.knowledge.basis() if not (isinstance(t, Name) and t.sort is Sort.PUB))
        return (self.state.linear, pers, basis, events)


class PrologueError(RuntimeError):
    pass


class Runner:
    """Applies rules to nodes for one (protocol, scenario) pair."""

    def __init__(self, protocol: ProtocolSpec, scenario: Scenario, bounds: Bounds,
                 types: Types | None = None):
        self.protocol = protocol
        self.scenario = scenario
        self.bounds = bounds
        self.theory = protocol.theory
        self.types = types
        self.publics = tuple(sorted(set(scenario.path) | {EMPTY} | set(protocol.constants), key=str))
        self.honest_rules = sorted(protocol.phase(*HONEST_PHASES),
                                   key=lambda r: (PHASE_RANK[r.phase], r.name))
        self._kcache: dict = {}
        self._add_set: frozenset | None = None
        self._add_terms: frozenset | None = None
        self._add_in: list[Term] | None = None

    # basic application -------------------------------------------------

    def knowledge_of(self, state: State) -> Knowledge:
        terms = state.knowledge()
        k = self._kcache.get(terms)
        if k is None:
            k = self._kcache[terms] = Knowledge(terms, self.theory)
        return k

    def step(self, node: Node, rule: Rule, s: Mapping) -> Node:
        state, tstep, full = apply_rule(node.state, rule, s, self.theory)
        cost = node.cost + (1 if counted(rule.name) else 0)
        return Node(state, node.trace.append(tstep), node.steps + ((rule, full),), cost,
                    self.knowledge_of(state) if tstep.learned or rule is BLOCK else node.knowledge)

    def absorb(self, node: Node) -> Node:
        """Block every pending Net fact, then decompose what was learned."""
        while True:
            nets = [f for f, _ in node.state.linear if f.name == "Net"]
            if not nets:
                break
            for f in nets:
                for _ in range(node.state.count(f)):
                    node = self.step(node, BLOCK, {Var("x"): f.args[0]})
        for rule, s in decomposition_plan(node.state.knowledge(), self.theory):
            node = self.step(node, rule, s)
        return node

    def derive_and(self, node: Node, terms: Iterable[Term]) -> Node:
        known = set(node.knowledge.closure)
        for t in terms:
            for rule, s in construction_plan(t, known):
                node = self.step(node, rule, s)
        return node

    # prologue --------------------------------------------------------------

    def role_bindings(self, rule: Rule) -> list[dict]:
        roles = rule.role_vars()
        sc = self.scenario
        groups: list[list[dict]] = []
        if "agent" in roles:
            groups.append([{roles["agent"]: a} for a in sc.path])
        if "middle" in roles:
            groups.append([{roles["middle"]: a} for a in sc.intermediates])
        if "left" in roles or "right" in roles:
            pairs = []
            for l, r in zip(sc.path, sc.path[1:]):
                b = {}
                if "left" in roles:
                    b[roles["left"]] = l
                if "right" in roles:
                    b[roles["right"]] = r
                pairs.append(b)
            groups.append(pairs)
        fixed = {}
        if "initiator" in roles:
            fixed[roles["initiator"]] = sc.initiator
        if "final" in roles:
            fixed[roles["final"]] = sc.final
        out = []
        for combo in itertools.product(*groups):
            b = dict(fixed)
            for part in combo:
                b.update(part)
            out.append(b)
        return out

    def _fire_all(self, node: Node, rule: Rule, binding: dict, first_only: bool = False) -> Node:
        fired = False
        for s in list(match_premises(rule.premises, node.state, binding)):
            if not self._restrictions_ok(rule, s):
                continue
            try:
                node = self.step(node, rule, s)
            except StaleInstance:
                continue
            fired = True
            if first_only:
                break
        if not fired:
            raise PrologueError(f"{rule.name} is not applicable for {_binding_text(binding)}")
        return self.absorb(node)

    def prologue(self) -> Node:
        node = Node(State(), Trace(), (), 0, Knowledge((), self.theory))
        for rule in self.protocol.phase("setup"):
            for b in self.role_bindings(rule):
                node = self._fire_all(node, rule, b)
        node = self.absorb(self.step(node, ADV_FR, {}))
        node = self.corrupt(node)
        cons = self.protocol.phase("construction")
        create = [r for r in cons if r.roles and "hop" not in dict(r.roles).values()]
        wrap = [r for r in cons if "hop" in dict(r.roles).values()]
        send = [r for r in cons if not r.roles]
        for rule in create:
            for b in self.role_bindings(rule):
                node = self._fire_all(node, rule, b, first_only=True)
        for m in reversed(self.scenario.intermediates):
            for rule in wrap:
                hop = rule.role_vars()["hop"]
                for b in self.role_bindings(rule):
                    b[hop] = m
                    node = self._fire_all(node, rule, b, first_only=True)
        for rule in send:
            node = self._fire_all(node, rule, {}, first_only=True)
        return node

    def corrupt(self, node: Node) -> Node:
        bad = self.scenario.corrupt
        if not bad:
            return node
        for f in sorted(node.state.persistent):
            if f.name == "Ltk" and f.args[0] in bad:
                node = self.step(node, CORRUPT_LTK, {Var("A", Sort.PUB): f.args[0], Var("k"): f.args[1]})
            elif f.name == "ShKey":
                a, b, key = f.args
                sub = {Var("A", Sort.PUB): a, Var("B", Sort.PUB): b, Var("k"): key}
                if a in bad:
                    node = self.step(node, CORRUPT_L, sub)
                if b in bad:
                    node = self.step(node, CORRUPT_R, sub)
        return self.absorb(node)

    # honest transitions ----------------------------------------------------

    def _restrictions_ok(self, rule: Rule, s: Mapping) -> bool:
        for e in rule.events:
            if e.name != "Equal":
                continue
            l = apply_substitution(e.args[0], s)
            r = apply_substitution(e.args[1], s)
            if not (l.is_ground and r.is_ground):
                continue
            if self.theory.normalize(l) is not self.theory.normalize(r):
                return False
        return True

    def transitions(self, node: Node, exact_only: bool = False) -> Iterator[tuple[Rule, dict, tuple]]:
        """(rule, substitution, injected terms), in deterministic order."""
        for rule in self.honest_rules:
            nets = [p for p in rule.premises if p.name == "Net"]
            others = tuple(p for p in rule.premises if p.name != "Net")
            found = []
            for s in match_premises(others, node.state):
                for s2, inj in self._inject(rule, nets, s, node, exact_only):
                    if not self._restrictions_ok(rule, s2):
                        continue
                    forged = any(t not in node.knowledge.closure for t in inj)
                    if self._useless(rule, s2, node, forged):
                        continue
                    found.append((subst_key(s2), s2, inj))
            seen = set()
            for k, s2, inj in sorted(found, key=lambda x: x[0]):
                if k in seen:
                    continue
                seen.add(k)
                yield rule, s2, inj

    def _useless(self, rule: Rule, s: Mapping, node: Node, forged: bool = False) -> bool:
        """True when applying the instance cannot matter to any goal: it
        touches no linear state, teaches the adversary nothing and emits no
        event the goals look at.  Skipping it is the same as deduplicating
        the resulting node against its parent.

        An instance acted out by a corrupt agent may also touch that agent's
        own linear state: the adversary holds the agent's keys and can play
        its part, so only goal-relevant events make such a step worth taking.
        The same holds for an honest agent fed a term the adversary had to
        forge (rather than replay): the local state it leaves behind belongs
        to a session nobody on the path started.
        """
        actors = {apply_substitution(e.args[0], s) for e in rule.events if e.name in ("Forward", "Backward")}
        corrupt_actor = bool(actors) and actors <= self.scenario.corrupt
        puppet = forged or corrupt_actor
        if not puppet and any(not f.persistent and f.name != "Net" for f in rule.premises):
            return False
        adds = self._adds(node)
        for e in rule.events:
            if e.name == "Forward":
                if tuple(self.theory.normalize(apply_substitution(a, s)) for a in e.args) in adds:
                    return False
            elif e.name == "Backward" and corrupt_actor:
                continue
            elif e.name in RELEVANT_EVENTS:
                return False
        for f in rule.conclusions:
            if f.name == "Net":
                out = self.theory.normalize(apply_substitution(f.args[0], s))
                if not node.knowledge.derivable(out) and not self._inert(out, node):
                    return False
            elif not f.persistent:
                if not puppet:
                    return False
            elif f.substitute(s, self.theory) not in node.state.persistent:
                return False
        return True

    def _inert(self, t: Term, node: Node) -> bool:
        """An opaque output nobody on the path expects: no Add mentions it
        and learning it lets the adversary take nothing apart.  Such a term
        can only be replayed as an opaque blob into patterns that, by the
        Add check, never produce a goal-relevant Forward."""
        if self._add_terms is None:
            self._add_terms = frozenset(
                u for _, e in node.trace.events("Add") for a in e.args for u in subterms(a))
        if t in self._add_terms:
            return False
        return not node.knowledge.opens(t)

    def _add_inputs(self, node: Node) -> list[Term]:
        if self._add_in is None:
            self._add_in = sorted({e.args[2] for _, e in node.trace.events("Add")}, key=str)
        return self._add_in

    def _adds(self, node: Node) -> frozenset:
        # Add events are only emitted during the prologue, so every node of
        # one search shares them
        if self._add_set is None:
            self._add_set = frozenset((e.args[1],) + e.args[2:] for _, e in node.trace.events("Add"))
        return self._add_set

    def _inject(self, rule, nets, s, node, exact_only):
        if not nets:
            yield s, ()
            return
        p, rest = nets[0], nets[1:]
        pat = apply_substitution(p.args[0], s)
        for t in self.candidates(rule, pat, s, node, exact_only):
            s2 = match(pat, t, s)
            if s2 is None:
                continue
            for s3, inj in self._inject(rule, rest, s2, node, exact_only):
                yield s3, (t,) + inj

    def candidates(self, rule: Rule, pat: Term, s: Mapping, node: Node, exact_only: bool) -> list[Term]:
        k = node.knowledge
        closure = k.closure
        out: set[Term] = set()
        if isinstance(pat, Var):
            pool = closure
        else:
            pool = k.by_head().get(head_of(pat), ())
        for t in pool:
            if match(pat, t, s) is not None:
                out.add(t)
        if not exact_only:
            # what an agent on the path expects to receive, if the adversary
            # can build it, is always worth offering
            for t in self._add_inputs(node):
                if t not in out and match(pat, t, s) is not None and k.derivable(t):
                    out.add(t)
            free = sorted(pat._vars - set(s), key=lambda v: v.ident)
            if not free:
                g = self.theory.normalize(pat)
                if k.derivable(g):
                    out.add(g)
            else:
                pools = [self.values_for(rule, v, node) for v in free]
                size = 1
                for p in pools:
                    size *= max(1, len(p))
                if size <= self.bounds.max_candidates:
                    for combo in itertools.product(*pools):
                        g = self.theory.normalize(apply_substitution(pat, dict(zip(free, combo))))
                        if g.is_ground and k.derivable(g):
                            out.add(g)
        return sorted(out, key=str)

    def values_for(self, rule: Rule, v: Var, node: Node) -> list[Term]:
        closure = node.knowledge.closure
        skels = None if self.types is None else self.types.get((rule.name, v.ident))
        if not skels:
            return self._untyped(v, closure)
        # typed: only values shaped like the honest run's; known terms that
        # fit the whole pattern are offered by ``candidates`` regardless
        base = sorted((t for t in closure if _sort_ok(t, v) and any(fits(t, sk) for sk in skels)), key=str)
        extra: set[Term] = set()
        for sk in sorted(skels, key=str):
            extra.update(self._generate(sk, self.bounds.recombination_depth, node))
        extra = {t for t in extra if _sort_ok(t, v)} - set(base)
        return base + sorted(extra, key=str)[: self.bounds.max_candidates]

    def _untyped(self, v: Var, closure) -> list[Term]:
        if v.sort is Sort.PUB:
            return sorted(set(self.publics) | {t for t in closure if _sort_ok(t, v)}, key=str)
        if v.sort is Sort.FRESH:
            return sorted((t for t in closure if _sort_ok(t, v)), key=str)
        return sorted(set(closure) | set(self.publics), key=str)

    def _generate(self, skel: Term, depth: int, node: Node) -> set[Term]:
        closure = node.knowledge.closure
        if skel is PUB_SLOT:
            return set(self.publics) | {t for t in closure if isinstance(t, Name) and t.sort is Sort.PUB}
        if skel is FRESH_SLOT:
            return {t for t in closure if isinstance(t, Name) and t.sort is Sort.FRESH}
        if skel is HOLE:
            return set(closure)
        out = {t for t in node.knowledge.by_head().get(skel.fn, ()) if fits(t, skel)}
        if depth > 0 and skel.fn not in self.theory.destructors:
            parts = [sorted(self._generate(a, depth - 1, node), key=str) for a in skel.args]
            size = 1
            for p in parts:
                size *= len(p)
            if 0 < size <= self.bounds.max_candidates * 4:
                for combo in itertools.product(*parts):
                    out.add(self.theory.normalize(App(skel.fn, combo)))
        return out

    def advance(self, node: Node, rule: Rule, s: dict, injected: tuple) -> Node:
        node = self.derive_and(node, injected)
        for t in injected:
            node = self.step(node, INJECT, {Var("x"): t})
        node = self.step(node, rule, s)
        return self.absorb(node)


def _sort_ok(t: Term, v: Var) -> bool:
    if v.sort is Sort.MSG:
        return True
    return isinstance(t, Name) and t.sort is v.sort


def _binding_text(b: Mapping) -> str:
    return ", ".join(f"{format_term(k)}={format_term(v)}" for k, v in sorted(b.items(), key=lambda kv: kv[0].ident)) or "no roles"


# -- reference types ---------------------------------------------------------

_TYPE_CACHE: dict = {}


def reference_types(protocol: ProtocolSpec, path_length: int, bounds: Bounds) -> Types:
    """Skeletons bound to each rule variable in honest, unmodified runs."""
    key = (protocol.name, id(protocol), path_length, bounds.max_steps)
    cached = _TYPE_CACHE.get(key)
    if cached is not None:
        return cached
    runner = Runner(protocol, Scenario(canonical_path(path_length)), bounds, types=None)
    types: dict = {}
    try:
        root = runner.prologue()
    except PrologueError:
        _TYPE_CACHE[key] = types
        return types
    for rule, s in root.steps:
        _record(types, rule, s)
    frontier = [root]
    seen = {root.key()}
    budget = 2_000
    while frontier and budget > 0:
        nxt = []
        for node in frontier:
            for rule, s, inj in runner.transitions(node, exact_only=True):
                budget -= 1
                child = runner.advance(node, rule, s, inj)
                _record(types, rule, s)
                if child.cost > bounds.max_steps:
                    continue
                k = child.key()
                if k in seen:
                    continue
                seen.add(k)
                nxt.append(child)
        frontier = nxt
    frozen = {k: frozenset(v) for k, v in types.items()}
    _TYPE_CACHE[key] = frozen
    return frozen


def _record(types: dict, rule: Rule, s: Mapping) -> None:
    for v, t in s.items():
        types.setdefault((rule.name, v.ident), set()).add(skeleton(t))


def honest_execution(protocol: ProtocolSpec, scenario: Scenario, bounds: Bounds = Bounds(),
                     goal: Callable[[Trace], bool] | None = None) -> Trace | None:
    """Shortest run that only delivers messages honest agents sent.

    The default goal is a Forward by the final agent, plus a Complete event
    whenever the protocol has a rule that emits one.
    """
    if goal is None:
        wants_complete = any(e.name == "Complete" for r in protocol.rules for e in r.events)

        def goal(trace: Trace) -> bool:
            received = any(e.args[0] == scenario.final for _, e in trace.events("Forward"))
            return received and (not wants_complete or any(True for _ in trace.events("Complete")))

    runner = Runner(protocol, scenario, bounds, types=None)
    try:
        root = runner.prologue()
    except PrologueError:
        return None
    frontier, seen = [root], {root.key()}
    while frontier:
        nxt = []
        for node in frontier:
            if goal(node.trace):
                return node.trace
            for rule, s, inj in runner.transitions(node, exact_only=True):
                child = runner.advance(node, rule, s, inj)
                if child.cost > bounds.max_steps:
                    continue
                k = child.key()
                if k not in seen:
                    seen.add(k)
                    nxt.append(child)
        frontier = nxt
    return None


# -- search ------------------------------------------------------------------

PropertyFn = Callable[[Trace], props.Violation | None]


def _property_fn(prop: str | PropertyFn, protocol: ProtocolSpec) -> PropertyFn:
    if callable(prop):
        return prop
    fn = props.CHECKERS.get(prop)
    if fn is None:
        raise ValueError(f"unknown property {prop!r}")
    return lambda tr: fn(tr, protocol.theory)


def explore(protocol: ProtocolSpec, scenario: Scenario, prop: str | PropertyFn = props.PATH_INTEGRITY,
            bounds: Bounds = Bounds(), typed: bool = True) -> Verdict:
    """Search one scenario; first violation in (cost, generation) order wins."""
    started = time.perf_counter()
    check = _property_fn(prop, protocol)
    types = reference_types(protocol, len(scenario.path), bounds) if typed else None
    runner = Runner(protocol, scenario, bounds, types)
    stats = Stats(scenarios=1)
    try:
        root = runner.prologue()
    except PrologueError as exc:
        stats.elapsed = time.perf_counter() - started
        return RestrictionUnsatisfiable(scenario, str(exc), stats)
    if root.cost > bounds.max_steps:
        stats.elapsed = time.perf_counter() - started
        return NoAttackWithinBound(bounds, [scenario], stats)
    v = check(root.trace)
    if v is not None:
        stats.elapsed = time.perf_counter() - started
        return AttackFound(scenario, root.trace, list(root.steps), v, stats)
    seq = itertools.count()
    heap = [(root.cost, next(seq), root)]
    seen = {root.key()}
    while heap:
        _, _, node = heapq.heappop(heap)
        stats.states += 1
        if stats.states > bounds.max_states:
            stats.truncated = True
            break
        for rule, s, inj in runner.transitions(node):
            child_cost = node.cost + len(inj) + 1
            if child_cost > bounds.max_steps:
                continue
            try:
                child = runner.advance(node, rule, s, inj)
            except StaleInstance:
                continue
            stats.transitions += 1
            if child.cost > bounds.max_steps:
                continue
            last = child.trace.steps
            if any(e.name in ("Forward", "Backward", "Complete") for st in last[len(node.trace.steps):] for e in st.events):
                v = check(child.trace)
                if v is not None:
                    stats.elapsed = time.perf_counter() - started
                    return AttackFound(scenario, child.trace, list(child.steps), v, stats)
            k = child.key()
            if k in seen:
                continue
            seen.add(k)
            heapq.heappush(heap, (child.cost, next(seq), child))
    stats.elapsed = time.perf_counter() - started
    return NoAttackWithinBound(bounds, [scenario], stats)


def check_protocol(protocol: ProtocolSpec, prop: str = props.PATH_INTEGRITY,
                   bounds: Bounds = Bounds(), scenarios: Sequence[Scenario] | None = None,
                   typed: bool = True) -> Verdict:
    """Explore scenarios in order; the first attack found is returned."""
    scenarios = list(scenarios) if scenarios is not None else enumerate_scenarios(bounds)
    total = Stats()
    explored = []
    for sc in scenarios:
        v = explore(protocol, sc, prop, bounds, typed)
        total.merge(v.stats)
        if isinstance(v, AttackFound):
            v.stats = total
            return v
        if isinstance(v, NoAttackWithinBound):
            explored.append(sc)
    return NoAttackWithinBound(bounds, explored, total)


# -- replay and minimisation -------------------------------------------------

def rule_table(protocol: ProtocolSpec) -> dict[str, Rule]:
    table = {r.name: r for r in adversary_rules(protocol.theory)}
    table.update({r.name: r for r in protocol.rules})
    return table


def parse_subst(items: Iterable[tuple[str, str]], protocol: ProtocolSpec) -> dict[Var, Term]:
    """Inverse of ``subst_key``: textual (variable, term) pairs to a substitution."""
    parser = TermParser(protocol.theory)
    out = {}
    for v, t in items:
        var = parser.parse_at(v, 0)[0]
        if not isinstance(var, Var):
            raise ValueError(f"{v!r} is not a variable")
        out[var] = parser.parse_at(t, 0)[0]
    return out


def replay(protocol: ProtocolSpec, steps: Sequence[tuple], lenient: bool = False):
    """Re-execute recorded (rule, substitution) steps from the empty state.

    Rules may be given as Rule objects or names, substitutions as dicts or
    as ``subst_key`` tuples.  With ``lenient`` inapplicable steps are dropped
    instead of raising; the applied steps are returned alongside.
    """
    table = rule_table(protocol)
    state, trace, applied = State(), Trace(), []
    for rule, s in steps:
        if isinstance(rule, str):
            rule = table[rule]
        if not isinstance(s, dict):
            s = parse_subst(s, protocol)
        try:
            state, tstep, full = apply_rule(state, rule, s, protocol.theory)
        except StaleInstance:
            if lenient:
                continue
            raise
        trace = trace.append(tstep)
        applied.append((rule, full))
    return state, trace, applied


def minimize_trace(protocol: ProtocolSpec, steps: Sequence[tuple], prop: str | PropertyFn,
                   clause: int | None = None) -> tuple[list, Trace, props.Violation]:
    """Greedily drop steps while the residue still replays and still violates.

    Dropping a step also drops any later step it enabled.  When ``clause``
    is given the violation must keep citing it.
    """
    check = _property_fn(prop, protocol)

    def ok(candidate):
        _, tr, applied = replay(protocol, candidate, lenient=True)
        if not eval_restrictions(tr, protocol.theory):
            return None
        v = check(tr)
        if v is None or (clause is not None and v.clause != clause):
            return None
        return applied, tr, v

    res = ok(list(steps))
    if res is None:
        raise ValueError("the given steps do not replay to a violation")
    cur, tr, v = res
    changed = True
    while changed:
        changed = False
        for i in range(len(cur) - 1, -1, -1):
            cand = cur[:i] + cur[i + 1:]
            r = ok(cand)
            if r is not None and len(r[0]) < len(cur):
                cur, tr, v = r
                changed = True
                break
    return cur, tr, v


def rule_applications(trace: Trace) -> int:
    return sum(1 for st in trace.steps if counted(st.rule))
