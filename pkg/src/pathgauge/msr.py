"""Multiset rewriting: facts, rules, states, traces and rule application."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .terms import (
    DEFAULT_THEORY,
    Name,
    Sort,
    Term,
    Theory,
    Var,
    apply_substitution,
    format_term,
    fresh,
    match,
    subst_key,
)

PHASES = ("setup", "construction", "forwarding", "receive", "response", "verification", "adversary")
PHASE_RANK = {p: i for i, p in enumerate(PHASES)}

# symbol -> (arity, persistent); arity None means declared per protocol
RESERVED_FACTS: dict[str, tuple[int | None, bool]] = {
    "Net": (1, False),
    "K": (1, True),
    "Pk": (2, True),
    "Ltk": (2, True),
    "ShKey": (3, True),
    "Fr": (1, False),
    "Build": (None, False),
    "Add": (4, False),
    "StartBuild": (2, False),
    "Forward": (3, False),
    "Backward": (3, False),
    "Check": (None, False),
    "Complete": (2, False),
    "Corrupt": (1, False),
    "Equal": (2, False),
}


class RuleError(ValueError):
    pass


class StaleInstance(RuleError):
    """The (rule, substitution) pair is not applicable in the given state."""


@dataclass(frozen=True)
class Fact:
    name: str
    args: tuple[Term, ...] = ()
    persistent: bool = False

    def __str__(self) -> str:
        bang = "!" if self.persistent else ""
        return f"{bang}{self.name}(" + ", ".join(format_term(a) for a in self.args) + ")"

    def __lt__(self, other: Fact) -> bool:
        return str(self) < str(other)

    def substitute(self, s: Mapping[Var, Term], theory: Theory | None = None) -> Fact:
        args = tuple(apply_substitution(a, s) for a in self.args)
        if theory is not None:
            args = tuple(theory.normalize(a) for a in args)
        return Fact(self.name, args, self.persistent)

    @property
    def variables(self) -> frozenset[Var]:
        out = frozenset()
        for a in self.args:
            out |= a._vars
        return out

    @property
    def is_ground(self) -> bool:
        return not self.variables


def fact(name: str, *args: Term) -> Fact:
    """``fact('!Ltk', a, k)`` builds a persistent fact."""
    if name.startswith("!"):
        return Fact(name[1:], tuple(args), True)
    return Fact(name, tuple(args), False)


@dataclass(frozen=True)
class Rule:
    name: str
    premises: tuple[Fact, ...]
    events: tuple[Fact, ...]
    conclusions: tuple[Fact, ...]
    phase: str = "forwarding"
    roles: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.phase not in PHASE_RANK:
            raise RuleError(f"rule {self.name}: unknown phase {self.phase!r}")
        if any(c.name == "Fr" for c in self.conclusions):
            raise RuleError(f"rule {self.name}: only Fresh may produce Fr facts")
        bound = frozenset().union(*(p.variables for p in self.premises))
        for f in self.events + self.conclusions:
            for v in f.variables:
                if v not in bound and v.sort is not Sort.PUB:
                    raise RuleError(f"rule {self.name}: variable {format_term(v)} is not bound by a premise")

    @property
    def variables(self) -> frozenset[Var]:
        return frozenset().union(*(f.variables for f in self.premises + self.events + self.conclusions))

    def role_vars(self) -> dict[str, Var]:
        """role name -> variable, resolved against the rule's variables."""
        by_name = {v.ident: v for v in self.variables}
        return {role: by_name[ident] for ident, role in self.roles if ident in by_name}

    def __str__(self) -> str:
        def fs(xs):
            return ", ".join(str(x) for x in xs)
        return f"{self.name}: [{fs(self.premises)}] --[{fs(self.events)}]-> [{fs(self.conclusions)}]"


class FreshSupply:
    """Source of never-before-returned fresh names ``~n1, ~n2, ...``."""

    def __init__(self, prefix: str = "n", start: int = 0):
        self.prefix = prefix
        self.counter = start

    def __call__(self) -> Name:
        self.counter += 1
        return fresh(f"{self.prefix}{self.counter}")


def gen_fresh(supply: FreshSupply) -> Name:
    return supply()


@dataclass(frozen=True)
class TraceStep:
    time: int
    rule: str
    subst: tuple[tuple[str, str], ...]
    events: tuple[Fact, ...]
    learned: frozenset = frozenset()
    phase: str = "forwarding"

    @property
    def adversarial(self) -> bool:
        return self.phase == "adversary"


@dataclass(frozen=True)
class Trace:
    steps: tuple[TraceStep, ...] = ()

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, step: TraceStep) -> Trace:
        if self.steps and step.time <= self.steps[-1].time:
            raise RuleError("time markers must strictly increase")
        return Trace(self.steps + (step,))

    def events(self, name: str | None = None) -> Iterator[tuple[int, Fact]]:
        for st in self.steps:
            for e in st.events:
                if name is None or e.name == name:
                    yield st.time, e

    def knowledge_upto(self, time: int) -> frozenset:
        out = set()
        for st in self.steps:
            if st.time > time:
                break
            out |= st.learned
        return frozenset(out)

    @property
    def last_time(self) -> int:
        return self.steps[-1].time if self.steps else 0


@dataclass(frozen=True)
class State:
    linear: tuple[tuple[Fact, int], ...] = ()
    persistent: frozenset = frozenset()
    clock: int = 0
    used_fresh: frozenset = frozenset()

    @staticmethod
    def build(linear: Iterable[Fact] = (), persistent: Iterable[Fact] = (), clock: int = 0) -> State:
        counts: dict[Fact, int] = {}
        pers = set()
        for f in linear:
            if f.persistent:
                pers.add(f)
            else:
                counts[f] = counts.get(f, 0) + 1
        pers.update(persistent)
        return State(_freeze(counts), frozenset(pers), clock)

    def counts(self) -> dict[Fact, int]:
        return dict(self.linear)

    def facts(self) -> list[Fact]:
        out = []
        for f, n in self.linear:
            out.extend([f] * n)
        return out + sorted(self.persistent)

    def count(self, f: Fact) -> int:
        if f.persistent:
            return int(f in self.persistent)
        return dict(self.linear).get(f, 0)

    def key(self) -> tuple:
        return (self.linear, self.persistent)

    def knowledge(self) -> frozenset:
        return frozenset(f.args[0] for f in self.persistent if f.name == "K")


def _freeze(counts: Mapping[Fact, int]) -> tuple[tuple[Fact, int], ...]:
    return tuple(sorted(((f, n) for f, n in counts.items() if n > 0), key=lambda x: str(x[0])))


def _by_name(state: State):
    lin: dict[str, list[Fact]] = {}
    for f, _ in state.linear:
        lin.setdefault(f.name, []).append(f)
    per: dict[str, list[Fact]] = {}
    for f in state.persistent:
        per.setdefault(f.name, []).append(f)
    return lin, per


def match_premises(premises: Sequence[Fact], state: State,
                   s: Mapping[Var, Term] | None = None,
                   index=None) -> Iterator[dict[Var, Term]]:
    """All substitutions embedding ``premises`` into ``state`` as a sub-multiset.

    Fr premises are skipped (they are produced on demand by rule
    application).  Linear premises respect multiplicities.
    """
    lin, per = index if index is not None else _by_name(state)
    avail = dict(state.linear)
    prem = [p for p in premises if p.name != "Fr"]

    def go(i: int, sub: dict[Var, Term]):
        if i == len(prem):
            yield sub
            return
        p = prem[i]
        pool = per.get(p.name, ()) if p.persistent else lin.get(p.name, ())
        for f in pool:
            if len(f.args) != len(p.args):
                continue
            if not p.persistent and avail.get(f, 0) <= 0:
                continue
            s2 = dict(sub)
            ok = True
            for pa, fa in zip(p.args, f.args):
                s2 = match(pa, fa, s2)
                if s2 is None:
                    ok = False
                    break
            if not ok:
                continue
            if not p.persistent:
                avail[f] -= 1
            yield from go(i + 1, s2)
            if not p.persistent:
                avail[f] += 1

    yield from go(0, dict(s) if s else {})


def _free_pub_vars(rule: Rule, s: Mapping[Var, Term]) -> list[Var]:
    return sorted((v for v in rule.variables if v not in s and v.sort is Sort.PUB), key=lambda v: v.ident)


def applicable_instances(state: State, rules: Iterable[Rule],
                         publics: Sequence[Term] = ()) -> list[tuple[Rule, dict[Var, Term]]]:
    """Every (rule, substitution) whose premises are a sub-multiset of ``state``.

    Public variables not bound by premises range over ``publics``.  The
    result is ordered by rule name, then by the substitution's text.
    """
    index = _by_name(state)
    out = []
    for rule in rules:
        for s in match_premises(rule.premises, state, index=index):
            free = _free_pub_vars(rule, s)
            for s2 in _extend_publics(s, free, publics):
                out.append((rule, s2))
    out.sort(key=lambda rs: (rs[0].name, subst_key(rs[1])))
    dedup = []
    seen = set()
    for r, s in out:
        k = (r.name, subst_key(s))
        if k not in seen:
            seen.add(k)
            dedup.append((r, s))
    return dedup


def _extend_publics(s, free, publics):
    if not free:
        yield s
        return
    v, rest = free[0], free[1:]
    for p in publics:
        s2 = dict(s)
        s2[v] = p
        yield from _extend_publics(s2, rest, publics)


def apply_rule(state: State, rule: Rule, s: Mapping[Var, Term],
               theory: Theory = DEFAULT_THEORY,
               fresh_prefix: str = "n") -> tuple[State, TraceStep, dict[Var, Term]]:
    """Apply ``rule`` under ``s``; returns the new state, the trace step and the full substitution.

    Fr premises whose variable is unbound get a never-used fresh name; a
    bound Fr variable must name a fresh value not used before.
    """
    s = dict(s)
    used = set(state.used_fresh)
    for p in rule.premises:
        if p.name != "Fr":
            continue
        v = p.args[0]
        if isinstance(v, Var) and v not in s:
            i = len(used) + 1
            while f"{fresh_prefix}{i}" in used:
                i += 1
            s[v] = fresh(f"{fresh_prefix}{i}")
        val = apply_substitution(v, s)
        if not isinstance(val, Name) or val.sort is not Sort.FRESH:
            raise StaleInstance(f"{rule.name}: Fr bound to non-fresh {format_term(val)}")
        if val.ident in used:
            raise StaleInstance(f"{rule.name}: fresh value {format_term(val)} already used")
        used.add(val.ident)

    counts = dict(state.linear)
    for p in rule.premises:
        if p.name == "Fr":
            continue
        g = p.substitute(s, theory)
        if not g.is_ground:
            raise StaleInstance(f"{rule.name}: premise {g} not ground")
        if g.persistent:
            if g not in state.persistent:
                raise StaleInstance(f"{rule.name}: missing {g}")
        else:
            if counts.get(g, 0) <= 0:
                raise StaleInstance(f"{rule.name}: missing {g}")
            counts[g] -= 1

    pers = set(state.persistent)
    learned = set()
    for c in rule.conclusions:
        g = c.substitute(s, theory)
        if not g.is_ground:
            raise StaleInstance(f"{rule.name}: conclusion {g} not ground")
        if g.persistent:
            if g.name == "K" and g not in pers:
                learned.add(g.args[0])
            pers.add(g)
        else:
            counts[g] = counts.get(g, 0) + 1
    events = tuple(e.substitute(s, theory) for e in rule.events)
    if any(not e.is_ground for e in events):
        raise StaleInstance(f"{rule.name}: event not ground")
    t = state.clock + 1
    new = State(_freeze(counts), frozenset(pers), t, frozenset(used))
    step = TraceStep(t, rule.name, subst_key(s), events, frozenset(learned), rule.phase)
    return new, step, s


def eval_restrictions(trace: Trace | Iterable[Fact], theory: Theory = DEFAULT_THEORY) -> bool:
    """True iff every Equal(x, y) event relates terms with equal normal forms."""
    events = (e for _, e in trace.events("Equal")) if isinstance(trace, Trace) else trace
    for e in events:
        if e.name == "Equal" and theory.normalize(e.args[0]) is not theory.normalize(e.args[1]):
            return False
    return True
