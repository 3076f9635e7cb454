"""Security goals over traces.

Three specialised checkers (path integrity, its verification-dependent
variant, path symmetry) plus a small evaluator for guarded first-order
trace formulae.  The evaluator is slower but independent, and the test
suite cross-checks one against the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .adversary import Knowledge
from .msr import Fact, Trace, TraceStep
from .terms import (
    DEFAULT_THEORY,
    Term,
    Theory,
    Var,
    apply_substitution,
    format_term,
    match,
    pair,
)

PATH_INTEGRITY = "path-integrity"
VD_PATH_INTEGRITY = "vd-path-integrity"
PATH_SYMMETRY = "path-symmetry"
PROPERTIES = (PATH_INTEGRITY, VD_PATH_INTEGRITY, PATH_SYMMETRY)


class MalformedSession(ValueError):
    pass


class FormulaError(ValueError):
    pass


# -- path orders -------------------------------------------------------------

@dataclass(frozen=True)
class PathOrder:
    session: Term
    agents: tuple[Term, ...]

    @property
    def initial(self) -> Term:
        return self.agents[0]

    @property
    def final(self) -> Term:
        return self.agents[-1]

    @property
    def intermediates(self) -> tuple[Term, ...]:
        return self.agents[1:-1]

    def index(self, agent: Term) -> int:
        return self.agents.index(agent)

    def precedes(self, a: Term, b: Term) -> bool:
        return self.index(a) < self.index(b)

    def __str__(self) -> str:
        return " < ".join(format_term(a) for a in self.agents)


def derive_path_order(trace: Trace, session: Term) -> PathOrder:
    """Initiator first, then the Add-named agents in reverse Add order."""
    starts = [e for _, e in trace.events("StartBuild") if e.args[1] == session]
    if not starts:
        raise MalformedSession(f"no StartBuild for session {format_term(session)}")
    adds = [e.args[1] for _, e in trace.events("Add") if e.args[0] == session]
    if not adds:
        raise MalformedSession(f"no Add events for session {format_term(session)}")
    if len(set(adds)) != len(adds):
        raise MalformedSession(f"session {format_term(session)} names an agent twice")
    agents = (starts[0].args[0],) + tuple(reversed(adds))
    if len(set(agents)) != len(agents):
        raise MalformedSession(f"session {format_term(session)} routes back through its initiator")
    return PathOrder(session, agents)


# -- violations ------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    property: str
    clause: int
    session: Term
    bindings: tuple[tuple[str, Term], ...]
    markers: tuple[tuple[str, int], ...]
    reason: str = ""

    def binding(self, name: str) -> Term:
        return dict(self.bindings)[name]

    def marker(self, name: str) -> int:
        return dict(self.markers)[name]

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "clause": self.clause,
            "session": format_term(self.session),
            "bindings": {k: format_term(v) for k, v in self.bindings},
            "markers": {k: v for k, v in self.markers},
            "reason": self.reason,
        }


def _corrupted(trace: Trace) -> set[Term]:
    return {e.args[0] for _, e in trace.events("Corrupt")}


class _Snapshots:
    """Knowledge at each marker, built lazily from the trace's learned sets."""

    def __init__(self, trace: Trace, theory: Theory):
        self.trace = trace
        self.theory = theory
        self._cache: dict[int, Knowledge] = {}

    def at(self, time: int) -> Knowledge:
        k = self._cache.get(time)
        if k is None:
            k = self._cache[time] = Knowledge(self.trace.knowledge_upto(time), self.theory)
        return k


def _pi_violations(trace: Trace, theory: Theory, sessions: set | None,
                   prop: str) -> Iterator[Violation]:
    corrupt = _corrupted(trace)
    snaps = _Snapshots(trace, theory)
    forwards = list(trace.events("Forward"))
    adds = list(trace.events("Add"))
    for ts, sb in trace.events("StartBuild"):
        a, p = sb.args
        if a in corrupt:
            continue
        if sessions is not None and p not in sessions:
            continue
        mine = [(t, e) for t, e in adds if e.args[0] == p and t >= ts]
        for ta_i, add_i in mine:
            _, mi, fi, ti = add_i.args
            for tk_i, fw in forwards:
                if fw.args != (mi, fi, ti):
                    continue
                for ta_j, add_j in mine:
                    if not ta_i < ta_j:
                        continue
                    _, mj, fj, tj = add_j.args
                    if any(tk_j < tk_i and e.args == (mj, fj, tj) for tk_j, e in forwards):
                        continue
                    if mj in corrupt and snaps.at(tk_i - 1).derivable(pair(fj, tj)):
                        continue
                    clause = 12 if mj in corrupt else 10
                    yield Violation(
                        prop, clause, p,
                        (("A", a), ("M_i", mi), ("M_j", mj), ("f_i", fi), ("t_i", ti),
                         ("f_j", fj), ("t_j", tj)),
                        (("ts", ts), ("ta_i", ta_i), ("ta_j", ta_j), ("tk_i", tk_i)),
                        f"{format_term(mi)} forwarded at {tk_i} but the earlier hop "
                        f"{format_term(mj)} never did"
                        + (" and the adversary could not stand in" if mj in corrupt else ""),
                    )


def _first(vs: Iterable[Violation]) -> Violation | None:
    best = None
    for v in vs:
        k = (v.marker("tk_i"), v.marker("ta_i"), v.marker("ta_j"))
        if best is None or k < best[0]:
            best = (k, v)
    return None if best is None else best[1]


def check_path_integrity(trace: Trace, theory: Theory = DEFAULT_THEORY) -> Violation | None:
    return _first(_pi_violations(trace, theory, None, PATH_INTEGRITY))


def completed_sessions(trace: Trace) -> set[Term]:
    return {e.args[1] for _, e in trace.events("Complete")}


def check_vd_path_integrity(trace: Trace, theory: Theory = DEFAULT_THEORY) -> Violation | None:
    """Path integrity restricted to sessions some endpoint marked Complete."""
    done = completed_sessions(trace)
    if not done:
        return None
    return _first(_pi_violations(trace, theory, done, VD_PATH_INTEGRITY))


def check_path_symmetry(trace: Trace, theory: Theory = DEFAULT_THEORY) -> Violation | None:
    """Return-journey participation must mirror the outbound order.

    For every honest hop M_j that forwarded its own layer of session p at tf,
    and every honest agent M_h before it on the path (the initiator
    included) that takes part in the return at tr > tf, M_j must itself have
    emitted a Backward at some time in [tf, tr).  The closed lower end
    lets a final agent answer in the same step that it receives.
    """
    corrupt = _corrupted(trace)
    forwards = list(trace.events("Forward"))
    backwards = list(trace.events("Backward"))
    adds = list(trace.events("Add"))
    found = []
    for ts, sb in trace.events("StartBuild"):
        a, p = sb.args
        if a in corrupt:
            continue
        mine = [(t, e) for t, e in adds if e.args[0] == p and t >= ts]
        for ta_j, add_j in mine:
            _, mj, fj, tj = add_j.args
            if mj in corrupt:
                continue
            for tf, fw in forwards:
                if fw.args != (mj, fj, tj):
                    continue
                earlier = [(a, ts)] + [(e.args[1], t) for t, e in mine if t > ta_j]
                for mh, _ in earlier:
                    if mh in corrupt or mh == mj:
                        continue
                    for tr, bw in backwards:
                        if bw.args[0] != mh or tr <= tf:
                            continue
                        if any(bj.args[0] == mj and tf <= trj < tr for trj, bj in backwards):
                            continue
                        found.append(Violation(
                            PATH_SYMMETRY, 0, p,
                            (("A", a), ("M_h", mh), ("M_j", mj), ("f_j", fj), ("t_j", tj)),
                            (("tf_j", tf), ("tr_h", tr)),
                            f"{format_term(mh)} took part in the return at {tr} although "
                            f"{format_term(mj)}, which forwarded at {tf}, was skipped",
                        ))
    if not found:
        return None
    return min(found, key=lambda v: (v.marker("tr_h"), v.marker("tf_j"), str(v.binding("M_j"))))


CHECKERS = {
    PATH_INTEGRITY: check_path_integrity,
    VD_PATH_INTEGRITY: check_vd_path_integrity,
    PATH_SYMMETRY: check_path_symmetry,
}


def check(prop: str, trace: Trace, theory: Theory = DEFAULT_THEORY) -> Violation | None:
    try:
        fn = CHECKERS[prop]
    except KeyError:
        raise ValueError(f"unknown property {prop!r}; expected one of {', '.join(PROPERTIES)}") from None
    return fn(trace, theory)


def make_trace(steps: Sequence[Sequence[Fact] | tuple[Sequence[Fact], Iterable[Term]]]) -> Trace:
    """Build a trace directly from event lists, for tests and examples.

    Each item is either a list of events or an (events, learned-terms) pair;
    markers are assigned 1, 2, 3, ...
    """
    out = []
    for i, item in enumerate(steps, 1):
        if isinstance(item, tuple) and len(item) == 2 and not isinstance(item[0], Fact):
            evs, learned = item
        else:
            evs, learned = item, ()
        out.append(TraceStep(i, f"step{i}", (), tuple(evs), frozenset(learned)))
    return Trace(tuple(out))


# -- generic guarded formulae ----------------------------------------------

class Formula:
    pass


@dataclass(frozen=True)
class Atom(Formula):
    """Event ``name(args)`` at time variable ``at``; ``K`` means derivability."""
    name: str
    args: tuple[Term, ...]
    at: str


@dataclass(frozen=True)
class Lt(Formula):
    left: str
    right: str
    strict: bool = True


@dataclass(frozen=True)
class Eq(Formula):
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Formula):
    body: Formula


@dataclass(frozen=True)
class And(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    premise: Formula
    conclusion: Formula


@dataclass(frozen=True)
class Exists(Formula):
    variables: tuple
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    variables: tuple
    body: Formula


def conj(*parts: Formula) -> And:
    return And(tuple(parts))


def disj(*parts: Formula) -> Or:
    return Or(tuple(parts))


def _bound_by(f: Formula) -> set:
    """Variables an enumeration of ``f`` is guaranteed to bind."""
    if isinstance(f, Atom):
        out = {f.at}
        for a in f.args:
            out |= a._vars
        return out
    if isinstance(f, Eq):
        return set(f.left._vars | f.right._vars)
    if isinstance(f, And):
        out = set()
        for p in f.parts:
            out |= _bound_by(p)
        return out
    if isinstance(f, Or):
        sets = [_bound_by(p) for p in f.parts]
        return set.intersection(*sets) if sets else set()
    if isinstance(f, Exists):
        return _bound_by(f.body) - set(f.variables)
    return set()


def check_guarded(f: Formula) -> None:
    """Reject formulas with a quantified variable no atom can bind."""
    if isinstance(f, Exists):
        missing = set(f.variables) - _bound_by(f.body)
        if missing:
            raise FormulaError(f"unguarded existential variable(s): {_names(missing)}")
        check_guarded(f.body)
    elif isinstance(f, Forall):
        if not isinstance(f.body, Implies):
            raise FormulaError("a universal quantifier must range over an implication")
        missing = set(f.variables) - _bound_by(f.body.premise)
        if missing:
            raise FormulaError(f"unguarded universal variable(s): {_names(missing)}")
        check_guarded(f.body.premise)
        check_guarded(f.body.conclusion)
    elif isinstance(f, (And, Or)):
        for p in f.parts:
            check_guarded(p)
    elif isinstance(f, Not):
        check_guarded(f.body)
    elif isinstance(f, Implies):
        check_guarded(f.premise)
        check_guarded(f.conclusion)


def _names(vs) -> str:
    return ", ".join(sorted(v if isinstance(v, str) else format_term(v) for v in vs))


class _Evaluator:
    def __init__(self, trace: Trace, theory: Theory):
        self.trace = trace
        self.theory = theory
        self.snaps = _Snapshots(trace, theory)
        self.by_name: dict[str, list[tuple[int, Fact]]] = {}
        for t, e in trace.events():
            self.by_name.setdefault(e.name, []).append((t, e))
        self.markers = [0] + [s.time for s in trace.steps]

    def _sub(self, env) -> dict:
        return {k: v for k, v in env.items() if isinstance(k, Var)}

    def models(self, f: Formula, env: dict) -> Iterator[dict]:
        if isinstance(f, Atom):
            yield from self._atom(f, env)
        elif isinstance(f, Lt):
            l, r = env.get(f.left), env.get(f.right)
            if l is None or r is None:
                raise FormulaError(f"time comparison on unbound #{f.left} or #{f.right}")
            if l < r or (not f.strict and l == r):
                yield env
        elif isinstance(f, Eq):
            s = self._sub(env)
            l = self.theory.normalize(apply_substitution(f.left, s))
            r = self.theory.normalize(apply_substitution(f.right, s))
            if l.is_ground and r.is_ground:
                if l is r:
                    yield env
                return
            m = match(l, r, s) if r.is_ground else match(r, l, s) if l.is_ground else None
            if m is None:
                if not (l.is_ground or r.is_ground):
                    raise FormulaError("equality between two open terms")
                return
            env2 = dict(env)
            env2.update(m)
            yield env2
        elif isinstance(f, Not):
            for _ in self.models(f.body, env):
                return
            yield env
        elif isinstance(f, And):
            yield from self._and(f.parts, env)
        elif isinstance(f, Or):
            for p in f.parts:
                yield from self.models(p, env)
        elif isinstance(f, Implies):
            if self.counterexample(f, env) is None:
                yield env
        elif isinstance(f, Exists):
            for m in self.models(f.body, env):
                out = dict(env)
                out["__witness__"] = {k: v for k, v in m.items() if k in f.variables}
                yield out
                return
        elif isinstance(f, Forall):
            if self.counterexample(f.body, env) is None:
                yield env
        else:
            raise FormulaError(f"unknown formula node {f!r}")

    def counterexample(self, f: Implies, env: dict) -> dict | None:
        for m in self.models(f.premise, env):
            if not any(True for _ in self.models(f.conclusion, m)):
                return m
        return None

    def _and(self, parts, env):
        if not parts:
            yield env
            return
        head, rest = parts[0], parts[1:]
        for m in self.models(head, env):
            yield from self._and(rest, m)

    def _atom(self, f: Atom, env):
        s = self._sub(env)
        args = tuple(self.theory.normalize(apply_substitution(a, s)) for a in f.args)
        if f.name == "K":
            (t,) = args
            if not t.is_ground:
                raise FormulaError("K atom with an unbound message")
            times = [env[f.at]] if f.at in env else self.markers
            for tm in times:
                if self.snaps.at(tm).derivable(t):
                    env2 = dict(env)
                    env2[f.at] = tm
                    yield env2
            return
        for tm, e in self.by_name.get(f.name, ()):
            if f.at in env and env[f.at] != tm:
                continue
            if len(e.args) != len(args):
                continue
            m = dict(s)
            ok = True
            for pa, ea in zip(args, e.args):
                m = match(pa, ea, m)
                if m is None:
                    ok = False
                    break
            if not ok:
                continue
            env2 = dict(env)
            env2.update(m)
            env2[f.at] = tm
            yield env2


@dataclass(frozen=True)
class Evaluation:
    holds: bool
    witness: Mapping = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.holds


def eval_trace_formula(trace: Trace, formula: Formula, theory: Theory = DEFAULT_THEORY) -> Evaluation:
    """Evaluate a closed guarded formula.

    For a universal formula the witness is the refuting instantiation (if
    any); for an existential one it is the satisfying instantiation.
    """
    check_guarded(formula)
    ev = _Evaluator(trace, theory)
    if isinstance(formula, Forall):
        cex = ev.counterexample(formula.body, {})
        if cex is None:
            return Evaluation(True)
        return Evaluation(False, _public(cex))
    for m in ev.models(formula, {}):
        return Evaluation(True, _public(m.get("__witness__", m)))
    return Evaluation(False)


def _public(env: Mapping) -> dict:
    out = {}
    for k, v in env.items():
        if k == "__witness__":
            continue
        out[k.ident if isinstance(k, Var) else k] = v
    return out


def path_integrity_formula(require_complete: bool = False) -> Forall:
    """The path integrity goal as a guarded formula over this library's facts.

    The StartBuild/Add ordering uses ``#ts <= #ta_i`` because the rule that
    opens a session also records the final agent's Add.
    """
    A, Mi, Mj, p = Var("A"), Var("M_i"), Var("M_j"), Var("p")
    fi, ti, fj, tj, E = Var("f_i"), Var("t_i"), Var("f_j"), Var("t_j"), Var("E")
    premise = [
        Not(Exists(("ta_c",), Atom("Corrupt", (A,), "ta_c"))),
    ]
    guards = [
        Atom("StartBuild", (A, p), "ts"),
        Atom("Add", (p, Mi, fi, ti), "ta_i"),
        Atom("Add", (p, Mj, fj, tj), "ta_j"),
        Lt("ts", "ta_i", strict=False),
        Lt("ta_i", "ta_j"),
        Atom("Forward", (Mi, fi, ti), "tk_i"),
    ]
    if require_complete:
        guards.append(Exists((E, "tc"), Atom("Complete", (E, p), "tc")))
    body = Implies(
        conj(*guards, *premise),
        Exists(("tk_j",), disj(
            conj(Atom("Forward", (Mj, fj, tj), "tk_j"), Lt("tk_j", "tk_i")),
            conj(Exists(("tc_j",), Atom("Corrupt", (Mj,), "tc_j")),
                 Atom("K", (pair(fj, tj),), "tk_j"), Lt("tk_j", "tk_i")),
        )),
    )
    return Forall((A, Mi, Mj, p, fi, ti, fj, tj, "ta_i", "ta_j", "tk_i", "ts"), body)


def secrecy_formula(value: Term, a: Term, b: Term) -> Forall:
    """``value`` stays unknown unless one of ``a``/``b`` is corrupt."""
    return Forall(("i",), Implies(
        Atom("K", (value,), "i"),
        disj(Exists(("j",), Atom("Corrupt", (a,), "j")),
             Exists(("j",), Atom("Corrupt", (b,), "j"))),
    ))
