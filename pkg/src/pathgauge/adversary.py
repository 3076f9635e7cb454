"""Dolev-Yao adversary: rules, knowledge closure and derivability."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .msr import Fact, Rule, State, fact
from .terms import (
    DEFAULT_THEORY,
    App,
    Name,
    Sort,
    Term,
    Theory,
    Var,
    apply_substitution,
    match,
    subterms,
)

_x = Var("x")
_A = Var("A", Sort.PUB)
_B = Var("B", Sort.PUB)
_k = Var("k")
_fr = Var("x", Sort.FRESH)

INJECT = Rule("Inject", (fact("!K", _x),), (), (fact("Net", _x),), "adversary")
BLOCK = Rule("Block", (fact("Net", _x),), (fact("K", _x),), (fact("!K", _x),), "adversary")
ADV_PUB = Rule("Adv_Pub", (), (fact("K", _A),), (fact("!K", _A),), "adversary")
ADV_FR = Rule("Adv_Fr", (fact("Fr", _fr),), (fact("K", _fr),), (fact("!K", _fr),), "adversary")
CORRUPT_LTK = Rule("Corrupt_Ltk", (fact("!Ltk", _A, _k),), (fact("Corrupt", _A),), (fact("!K", _k),), "adversary")
CORRUPT_L = Rule("Corrupt_L", (fact("!ShKey", _A, _B, _k),), (fact("Corrupt", _A),), (fact("!K", _k),), "adversary")
CORRUPT_R = Rule("Corrupt_R", (fact("!ShKey", _A, _B, _k),), (fact("Corrupt", _B),), (fact("!K", _k),), "adversary")

_FUN_CACHE: dict[tuple[str, int], Rule] = {}


def fun_rule(fn: str, arity: int) -> Rule:
    """The Fun_f rule: from !K(x1..xn) learn f(x1..xn)."""
    key = (fn, arity)
    r = _FUN_CACHE.get(key)
    if r is None:
        xs = tuple(Var(f"x{i + 1}") for i in range(arity))
        t = App(fn, xs)
        r = Rule(f"Fun_{fn}", tuple(fact("!K", x) for x in xs), (fact("K", t),), (fact("!K", t),), "adversary")
        _FUN_CACHE[key] = r
    return r


def adversary_rules(theory: Theory = DEFAULT_THEORY) -> list[Rule]:
    funs = [fun_rule(f, n) for f, n in sorted(theory.symbols.items())]
    return [INJECT, BLOCK, ADV_PUB, ADV_FR] + funs + [CORRUPT_LTK, CORRUPT_L, CORRUPT_R]


@dataclass(frozen=True)
class CorruptionScenario:
    initiator: Term
    corrupt: frozenset = frozenset()
    release_ltk: bool = True
    release_left: bool = True
    release_right: bool = True

    def __post_init__(self):
        if self.initiator in self.corrupt:
            raise ValueError("the session initiator is always honest")


# -- decomposition ---------------------------------------------------------

def _decomposers(theory: Theory):
    """(equation, p0, other-args) for equations whose result is a subterm of
    the first argument and whose other arguments are fixed by it."""
    out = []
    for eq in theory.equations:
        lhs = eq.lhs
        if not lhs.args:
            continue
        p0, rest = lhs.args[0], lhs.args[1:]
        if not any(s is eq.rhs for s in subterms(p0)):
            continue
        if any(not (a._vars <= p0._vars) for a in rest):
            continue
        out.append((eq, p0, rest))
    return out


_DECOMP_CACHE: dict[int, list] = {}


def decomposers(theory: Theory):
    key = id(theory)
    d = _DECOMP_CACHE.get(key)
    if d is None:
        d = _DECOMP_CACHE[key] = _decomposers(theory)
    return d


def synth(t: Term, known: frozenset | set) -> bool:
    """Goal-directed composition check against an analz-closed set."""
    if t in known:
        return True
    if isinstance(t, Name):
        return t.sort is Sort.PUB
    if isinstance(t, App):
        return all(synth(a, known) for a in t.args)
    return False


def analz(terms: Iterable[Term], theory: Theory = DEFAULT_THEORY) -> frozenset:
    """Close a term set under the theory's decomposition equations."""
    known = set(terms)
    decs = decomposers(theory)
    changed = True
    while changed:
        changed = False
        for t in list(known):
            for eq, p0, rest in decs:
                s = match(p0, t)
                if s is None:
                    continue
                if all(synth(apply_substitution(a, s), known) for a in rest):
                    r = apply_substitution(eq.rhs, s)
                    if r not in known:
                        known.add(r)
                        changed = True
    return frozenset(known)


def decomposition_plan(terms: Iterable[Term], theory: Theory = DEFAULT_THEORY):
    """Adversary steps closing ``terms`` under decomposition.

    Returns a list of (rule, substitution) applying Fun_d rules (after any
    constructions needed for their key arguments), in a deterministic order.
    """
    known = set(terms)
    plan: list[tuple[Rule, dict]] = []
    decs = decomposers(theory)
    changed = True
    while changed:
        changed = False
        for t in sorted(known, key=str):
            for eq, p0, rest in decs:
                s = match(p0, t)
                if s is None:
                    continue
                others = [apply_substitution(a, s) for a in rest]
                if not all(synth(a, known) for a in others):
                    continue
                r = apply_substitution(eq.rhs, s)
                if r in known:
                    continue
                for a in others:
                    plan.extend(construction_plan(a, known))
                rule = fun_rule(eq.lhs.fn, len(eq.lhs.args))
                sub = {Var(f"x{i + 1}"): a for i, a in enumerate([t] + others)}
                plan.append((rule, sub))
                known.add(r)
                changed = True
    return plan


def construction_plan(t: Term, known: set) -> list[tuple[Rule, dict]]:
    """Fun_f / Adv_Pub steps building ``t`` from ``known``; updates ``known``."""
    if t in known:
        return []
    if isinstance(t, Name):
        if t.sort is not Sort.PUB:
            raise ValueError(f"{t} is not derivable")
        known.add(t)
        return [(ADV_PUB, {_A: t})]
    if not isinstance(t, App):
        raise ValueError(f"{t} is not ground")
    plan = []
    for a in t.args:
        plan.extend(construction_plan(a, known))
    plan.append((fun_rule(t.fn, len(t.args)), {Var(f"x{i + 1}"): a for i, a in enumerate(t.args)}))
    known.add(t)
    return plan


class Knowledge:
    """Adversary knowledge: the terms held as !K facts, with cached closure."""

    __slots__ = ("terms", "theory", "_closed", "_basis", "_heads", "_blocked")

    def __init__(self, terms: Iterable[Term] = (), theory: Theory = DEFAULT_THEORY, closed: bool = False):
        self.terms = frozenset(terms)
        self.theory = theory
        self._closed = self.terms if closed else None
        self._basis = None
        self._heads = None
        self._blocked = None

    @property
    def closure(self) -> frozenset:
        if self._closed is None:
            self._closed = analz(self.terms, self.theory)
        return self._closed

    def derivable(self, t: Term) -> bool:
        return synth(self.theory.normalize(t), self.closure)

    def __contains__(self, t: Term) -> bool:
        return self.derivable(t)

    def basis(self) -> frozenset:
        """Closure minus terms composable from their own arguments.

        Two knowledge sets with the same basis derive the same terms.
        """
        if self._basis is None:
            c = self.closure
            self._basis = frozenset(t for t in c if not (isinstance(t, App) and t.args
                                                          and all(synth(a, c) for a in t.args)))
        return self._basis

    def by_head(self) -> dict[str, list[Term]]:
        if self._heads is None:
            heads: dict[str, list[Term]] = {}
            for t in sorted(self.closure, key=str):
                heads.setdefault(head_of(t), []).append(t)
            self._heads = heads
        return self._heads

    def opens(self, t: Term) -> bool:
        """Would learning ``t`` make anything beyond ``t`` itself derivable?

        Equivalent to comparing analz(closure + t) with closure + t up to
        derivability, but only looks at decompositions of ``t`` and at the
        decompositions of known terms that were waiting for a key.
        """
        c = self.closure
        if synth(t, c):
            return False
        more = c | {t}
        for eq, p0, rest in decomposers(self.theory):
            s = match(p0, t)
            if s is not None and all(synth(apply_substitution(a, s), more) for a in rest):
                if not synth(apply_substitution(eq.rhs, s), more):
                    return True
        if self._blocked is None:
            blocked = []
            for u in c:
                for eq, p0, rest in decomposers(self.theory):
                    s = match(p0, u)
                    if s is None:
                        continue
                    others = [apply_substitution(a, s) for a in rest]
                    if not all(synth(a, c) for a in others):
                        blocked.append((others, apply_substitution(eq.rhs, s)))
            self._blocked = blocked
        return any(all(synth(a, more) for a in others) and not synth(r, more)
                   for others, r in self._blocked)

    def add(self, new: Iterable[Term]) -> Knowledge:
        return Knowledge(self.terms | frozenset(new), self.theory)


def head_of(t: Term) -> str:
    if isinstance(t, App):
        return t.fn
    if isinstance(t, Name):
        return t.sort.value
    return "var"


def derivable(t: Term, k: Knowledge | Iterable[Term], theory: Theory = DEFAULT_THEORY) -> bool:
    if not isinstance(k, Knowledge):
        k = Knowledge(k, theory)
    return k.derivable(t)


def saturate(k: Iterable[Term], depth: int, theory: Theory = DEFAULT_THEORY,
             publics: Iterable[Term] = (), universe: Iterable[Term] | None = None,
             limit: int = 200_000) -> frozenset:
    """Brute-force forward closure.

    Every symbol of the signature is applied to every tuple of known terms
    and the result normalized.  Results that reduce (decomposition) are
    kept at every round; plain constructions count towards ``depth``.  When
    ``universe`` is given, constructed terms outside it are discarded.
    Without a universe, construction rounds only use constructors: an
    irreducible destructor application is derivable but never helps derive
    anything else, and enumerating them is cubic in the set size.
    """
    theory_syms = sorted(theory.symbols.items())
    build_syms = theory_syms if universe is not None else [
        (f, n) for f, n in theory_syms if f not in theory.destructors]
    uni = None if universe is None else frozenset(universe)
    known = set(theory.normalize(t) for t in k) | set(publics)

    def decompose():
        # a destructor applied to normal arguments can only rewrite at the
        # root, so firing the equations directly equals trying every tuple
        changed = True
        while changed:
            changed = False
            for eq in theory.equations:
                lhs = eq.lhs
                if not lhs.args:
                    continue
                for t in sorted(known, key=str):
                    sub = match(lhs.args[0], t)
                    if sub is None:
                        continue
                    for s2 in _extend_in(lhs.args[1:], sub, known):
                        r = theory.normalize(apply_substitution(eq.rhs, s2))
                        if r not in known:
                            known.add(r)
                            changed = True

    decompose()
    for _ in range(depth):
        snapshot = sorted(known, key=str)
        new = set()
        for fn, n in build_syms:
            for args in itertools.product(snapshot, repeat=n):
                r = theory.normalize(App(fn, args))
                if r in known or (uni is not None and r not in uni):
                    continue
                new.add(r)
                if len(new) + len(known) > limit:
                    raise OverflowError("saturation exceeded term limit")
        if not new:
            break
        known |= new
        decompose()
    return frozenset(known)


def _extend_in(patterns, sub, known):
    """Substitutions extending ``sub`` so every pattern lands in ``known``."""
    if not patterns:
        yield sub
        return
    p, rest = patterns[0], patterns[1:]
    if p._vars <= sub.keys():
        if apply_substitution(p, sub) in known:
            yield from _extend_in(rest, sub, known)
        return
    for t in sorted(known, key=str):
        s2 = match(p, t, sub)
        if s2 is not None:
            yield from _extend_in(rest, s2, known)


def adversary_transitions(state: State, k: Knowledge, scenario: CorruptionScenario,
                          inject_candidates: Iterable[Term] = ()) -> list[tuple[Rule, dict]]:
    """Enabled adversary steps in ``state``.

    Inject is offered for known terms plus the caller's shape-guided
    candidates (only those that are derivable).
    """
    out: list[tuple[Rule, dict]] = []
    for f, _ in state.linear:
        if f.name == "Net":
            out.append((BLOCK, {_x: f.args[0]}))
    cands = set(k.terms) | {t for t in inject_candidates if k.derivable(t)}
    for t in sorted(cands, key=str):
        out.append((INJECT, {_x: t}))
    out.append((ADV_FR, {}))
    if scenario.corrupt:
        for f in sorted(state.persistent):
            if f.name == "Ltk" and scenario.release_ltk and f.args[0] in scenario.corrupt:
                out.append((CORRUPT_LTK, {_A: f.args[0], _k: f.args[1]}))
            if f.name == "ShKey":
                a, b, key = f.args
                if scenario.release_left and a in scenario.corrupt:
                    out.append((CORRUPT_L, {_A: a, _B: b, _k: key}))
                if scenario.release_right and b in scenario.corrupt:
                    out.append((CORRUPT_R, {_A: a, _B: b, _k: key}))
    return out
