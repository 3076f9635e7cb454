"""Order-sorted symbolic terms, substitutions and the equational theory.

Terms are hash-consed: constructing the same term twice returns the same
object, so structural equality is identity and terms can be used freely as
dict keys.  Rewriting is innermost and relies on the theory being
subterm-convergent, which :meth:`Theory.extend` enforces for user symbols.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping


class Sort(enum.Enum):
    MSG = "msg"
    PUB = "pub"
    FRESH = "fresh"
    FACT = "fact"

    def leq(self, other: Sort) -> bool:
        """Subsort check: pub < msg, fresh < msg, fact incomparable."""
        if self is other:
            return True
        return other is Sort.MSG and self in (Sort.PUB, Sort.FRESH)


class TermError(ValueError):
    pass


class SortError(TermError):
    pass


class ArityError(TermError):
    pass


class TermSyntaxError(TermError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


_TABLE: dict[tuple, "Term"] = {}


class Term:
    __slots__ = ("_text", "_depth", "_vars")

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {format_term(self)}>"

    def __str__(self) -> str:
        return format_term(self)

    def __lt__(self, other: Term) -> bool:
        return format_term(self) < format_term(other)

    @property
    def is_ground(self) -> bool:
        return not variables(self)

    def __reduce__(self):
        return (parse_term, (format_term(self),))


class Name(Term):
    """A public or fresh atomic name."""

    __slots__ = ("ident", "sort")

    def __new__(cls, ident: str, sort: Sort = Sort.PUB) -> Name:
        if sort not in (Sort.PUB, Sort.FRESH):
            raise SortError(f"names are pub or fresh, not {sort.value}")
        key = ("N", ident, sort)
        obj = _TABLE.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.ident = ident
            obj.sort = sort
            obj._text = None
            obj._depth = 0
            obj._vars = frozenset()
            _TABLE[key] = obj
        return obj


class Var(Term):
    __slots__ = ("ident", "sort")

    def __new__(cls, ident: str, sort: Sort = Sort.MSG) -> Var:
        if sort is Sort.FACT:
            raise SortError("term variables cannot have sort fact")
        key = ("V", ident, sort)
        obj = _TABLE.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.ident = ident
            obj.sort = sort
            obj._text = None
            obj._depth = 0
            obj._vars = frozenset((obj,))
            _TABLE[key] = obj
        return obj


class App(Term):
    __slots__ = ("fn", "args")

    def __new__(cls, fn: str, args: Iterable[Term] = ()) -> App:
        args = tuple(args)
        key = ("A", fn, args)
        obj = _TABLE.get(key)
        if obj is None:
            obj = object.__new__(cls)
            obj.fn = fn
            obj.args = args
            obj._text = None
            obj._depth = 1 + max((a._depth for a in args), default=0)
            vs = frozenset()
            for a in args:
                vs |= a._vars
            obj._vars = vs
            _TABLE[key] = obj
        return obj


def pub(ident: str) -> Name:
    return Name(ident, Sort.PUB)


def fresh(ident: str) -> Name:
    return Name(ident, Sort.FRESH)


def app(fn: str, *args: Term) -> App:
    return App(fn, args)


def pair(*items: Term) -> Term:
    """Right-nested pairing, ``pair(a, b, c) == <a, <b, c>>``."""
    if len(items) < 2:
        raise ArityError("pair needs at least two components")
    out = items[-1]
    for item in reversed(items[:-1]):
        out = App("pair", (item, out))
    return out


EMPTY = pub("")
TRUE = App("true", ())


def variables(t: Term) -> frozenset[Var]:
    return t._vars


def depth(t: Term) -> int:
    """Constructor depth; atoms have depth 0."""
    return t._depth


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def sort_of(t: Term, symbols: Mapping[str, int] | None = None) -> Sort:
    if isinstance(t, (Name, Var)):
        return t.sort
    if symbols is not None:
        _check_arity(t, symbols)
    return Sort.MSG


def _check_arity(t: Term, symbols: Mapping[str, int]) -> None:
    if isinstance(t, App):
        if t.fn not in symbols:
            raise ArityError(f"unknown function symbol {t.fn!r}")
        if symbols[t.fn] != len(t.args):
            raise ArityError(f"{t.fn}/{symbols[t.fn]} applied to {len(t.args)} arguments")
        for a in t.args:
            _check_arity(a, symbols)


# -- substitutions ----------------------------------------------------------

Substitution = dict  # Var -> Term; kept as a plain mapping


def apply_substitution(t: Term, s: Mapping[Var, Term]) -> Term:
    if not s or not t._vars:
        return t
    if isinstance(t, Var):
        v = s.get(t)
        if v is None:
            return t
        if not sort_of(v).leq(t.sort):
            raise SortError(f"cannot bind {format_term(t)} to {format_term(v)}")
        return v
    if isinstance(t, App):
        return App(t.fn, tuple(apply_substitution(a, s) for a in t.args))
    return t


def compose(s1: Mapping[Var, Term], s2: Mapping[Var, Term]) -> dict[Var, Term]:
    """Substitution equivalent to applying ``s1`` then ``s2``."""
    out = {v: apply_substitution(t, s2) for v, t in s1.items()}
    for v, t in s2.items():
        out.setdefault(v, t)
    return out


def subst_key(s: Mapping[Var, Term]) -> tuple:
    return tuple(sorted((format_term(v), format_term(t)) for v, t in s.items()))


def match(pattern: Term, ground: Term, s: Mapping[Var, Term] | None = None) -> dict[Var, Term] | None:
    """Syntactic matching of ``pattern`` against a ground normal form."""
    out = dict(s) if s else {}
    return out if _match(pattern, ground, out) else None


def _match(p: Term, g: Term, s: dict) -> bool:
    if not p._vars:
        return p is g
    if isinstance(p, Var):
        bound = s.get(p)
        if bound is not None:
            return bound is g
        if p.sort is not Sort.MSG and not (isinstance(g, Name) and g.sort is p.sort):
            return False
        s[p] = g
        return True
    # p is an App with variables
    if not isinstance(g, App) or g.fn != p.fn or len(g.args) != len(p.args):
        return False
    return all(_match(pa, ga, s) for pa, ga in zip(p.args, g.args))


# -- equational theory -----------------------------------------------------

BUILTIN_SYMBOLS: dict[str, int] = {
    "h": 1,
    "pair": 2,
    "fst": 1,
    "snd": 1,
    "senc": 2,
    "sdec": 2,
    "pk": 1,
    "aenc": 2,
    "adec": 2,
    "sign": 2,
    "true": 0,
    "verify": 3,
}


@dataclass(frozen=True)
class Equation:
    lhs: Term
    rhs: Term

    def __str__(self) -> str:
        return f"{format_term(self.lhs)} = {format_term(self.rhs)}"


def _v(name: str) -> Var:
    return Var(name)


_x, _y, _m, _k = _v("x"), _v("y"), _v("m"), _v("k")

BUILTIN_EQUATIONS: tuple[Equation, ...] = (
    Equation(app("fst", app("pair", _x, _y)), _x),
    Equation(app("snd", app("pair", _x, _y)), _y),
    Equation(app("sdec", app("senc", _m, _k), _k), _m),
    Equation(app("adec", app("aenc", _m, app("pk", _k)), _k), _m),
    Equation(app("verify", app("sign", _m, _k), _m, app("pk", _k)), TRUE),
)


class ConvergenceError(TermError):
    """Raised for equations outside the subterm-convergent fragment."""


def check_subterm_convergent(eq: Equation, symbols: Mapping[str, int]) -> None:
    lhs, rhs = eq.lhs, eq.rhs
    if not isinstance(lhs, App):
        raise ConvergenceError(f"left-hand side of {eq} must be an application")
    _check_arity(lhs, symbols)
    _check_arity(rhs, symbols)
    if not rhs._vars <= lhs._vars:
        raise ConvergenceError(f"{eq}: right-hand side introduces variables")
    if rhs._vars:
        if not any(sub is rhs for sub in subterms(lhs)) or rhs is lhs:
            raise ConvergenceError(f"{eq}: right-hand side is not a proper subterm")
    elif any(isinstance(sub, Var) for sub in subterms(rhs)):
        raise ConvergenceError(f"{eq}: right-hand side is not ground")
    elif isinstance(rhs, App) and any(isinstance(sub, App) and sub.fn == lhs.fn for sub in subterms(rhs)):
        raise ConvergenceError(f"{eq}: ground right-hand side is reducible")


class Theory:
    """Function signature plus oriented, subterm-convergent equations."""

    def __init__(self, symbols: Mapping[str, int] | None = None,
                 equations: Iterable[Equation] | None = None):
        self.symbols: dict[str, int] = dict(BUILTIN_SYMBOLS if symbols is None else symbols)
        self.equations: tuple[Equation, ...] = tuple(BUILTIN_EQUATIONS if equations is None else equations)
        for eq in self.equations:
            check_subterm_convergent(eq, self.symbols)
        self._by_head: dict[str, list[Equation]] = {}
        for eq in self.equations:
            self._by_head.setdefault(eq.lhs.fn, []).append(eq)
        self.destructors = frozenset(self._by_head)
        self.constructors = frozenset(self.symbols) - self.destructors
        self._nf: dict[Term, Term] = {}

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Theory) and self.symbols == other.symbols
                and self.equations == other.equations)

    def __hash__(self) -> int:
        return hash((tuple(sorted(self.symbols.items())), self.equations))

    def __repr__(self) -> str:
        return f"Theory({len(self.symbols)} symbols, {len(self.equations)} equations)"

    def extend(self, symbols: Mapping[str, int] = (), equations: Iterable[Equation] = ()) -> Theory:
        merged = dict(self.symbols)
        for name, arity in dict(symbols).items():
            if name in merged and merged[name] != arity:
                raise ArityError(f"{name} already declared with arity {merged[name]}")
            merged[name] = arity
        return Theory(merged, self.equations + tuple(equations))

    def check(self, t: Term) -> None:
        _check_arity(t, self.symbols)

    def rewrite_root(self, t: Term) -> Term | None:
        if not isinstance(t, App):
            return None
        for eq in self._by_head.get(t.fn, ()):
            s = match(eq.lhs, t)
            if s is not None:
                return apply_substitution(eq.rhs, s)
        return None

    def normalize(self, t: Term) -> Term:
        """Innermost normal form, arguments left to right."""
        if not isinstance(t, App):
            return t
        cached = self._nf.get(t)
        if cached is not None:
            return cached
        args = tuple(self.normalize(a) for a in t.args)
        u = App(t.fn, args)
        r = self.rewrite_root(u)
        # subterm-convergence: a contractum is already normal
        out = u if r is None else r
        self._nf[t] = out
        return out

    def normalize_rightmost(self, t: Term) -> Term:
        """Innermost strategy reducing arguments right to left, without the cache."""
        if not isinstance(t, App):
            return t
        args = [None] * len(t.args)
        for i in range(len(t.args) - 1, -1, -1):
            args[i] = self.normalize_rightmost(t.args[i])
        u = App(t.fn, tuple(args))
        r = self.rewrite_root(u)
        return u if r is None else self.normalize_rightmost(r)

    def normalize_outermost(self, t: Term) -> Term:
        """Leftmost-outermost rewriting to a fixed point (slow reference)."""
        while True:
            u = self._outer_step(t)
            if u is None:
                return t
            t = u

    def _outer_step(self, t: Term) -> Term | None:
        r = self.rewrite_root(t)
        if r is not None:
            return r
        if isinstance(t, App):
            for i, a in enumerate(t.args):
                b = self._outer_step(a)
                if b is not None:
                    return App(t.fn, t.args[:i] + (b,) + t.args[i + 1:])
        return None

    def is_normal(self, t: Term) -> bool:
        return self.normalize(t) is t


DEFAULT_THEORY = Theory()


def normalize(t: Term, theory: Theory = DEFAULT_THEORY) -> Term:
    return theory.normalize(t)


# -- canonical text form -------------------------------------------------

def format_term(t: Term) -> str:
    if t._text is not None:
        return t._text
    if isinstance(t, Name):
        if t.sort is Sort.PUB:
            s = "'" + t.ident + "'"
        else:
            s = "~" + t.ident
    elif isinstance(t, Var):
        s = t.ident if t.sort is Sort.MSG else f"{t.ident}:{t.sort.value}"
    elif t.fn == "pair":
        s = "<" + format_term(t.args[0]) + ", " + format_term(t.args[1]) + ">"
    elif not t.args:
        s = t.fn
    else:
        s = t.fn + "(" + ", ".join(format_term(a) for a in t.args) + ")"
    t._text = s
    return s


_TOKEN = re.compile(r"\s*(?:(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<quoted>'[^']*')"
                    r"|(?P<fresh>~[A-Za-z0-9_]+)|(?P<punct>[(),<>:]))")


class TermParser:
    """Recursive-descent parser for the canonical term syntax.

    ``text[pos:]`` is consumed; callers embedding terms in larger grammars
    use :meth:`parse_at` and continue from the returned offset.
    """

    def __init__(self, theory: Theory = DEFAULT_THEORY, sorts: dict[str, Sort] | None = None):
        self.theory = theory
        self.sorts = sorts if sorts is not None else {}

    def _peek(self, text: str, pos: int):
        m = _TOKEN.match(text, pos)
        if m is None:
            rest = text[pos:].lstrip()
            if not rest:
                return None, None, len(text)
            raise TermSyntaxError(f"unexpected character {rest[0]!r}", len(text) - len(rest))
        kind = m.lastgroup
        return kind, m.group(kind), m.end()

    def parse_at(self, text: str, pos: int) -> tuple[Term, int]:
        kind, tok, end = self._peek(text, pos)
        start = end - len(tok) if tok else pos
        if kind is None:
            raise TermSyntaxError("unexpected end of input", pos)
        if kind == "quoted":
            return pub(tok[1:-1]), end
        if kind == "fresh":
            return fresh(tok[1:]), end
        if kind == "punct":
            if tok != "<":
                raise TermSyntaxError(f"unexpected {tok!r}", start)
            items = []
            pos = end
            while True:
                t, pos = self.parse_at(text, pos)
                items.append(t)
                k2, t2, e2 = self._peek(text, pos)
                if t2 == ",":
                    pos = e2
                    continue
                if t2 == ">":
                    pos = e2
                    break
                raise TermSyntaxError("expected ',' or '>' in pair", pos)
            if len(items) < 2:
                raise TermSyntaxError("pair needs two components", start)
            return pair(*items), pos
        # identifier
        k2, t2, e2 = self._peek(text, end)
        if t2 == "(":
            args = []
            pos = e2
            k3, t3, e3 = self._peek(text, pos)
            if t3 == ")":
                pos = e3
            else:
                while True:
                    a, pos = self.parse_at(text, pos)
                    args.append(a)
                    k3, t3, e3 = self._peek(text, pos)
                    if t3 == ",":
                        pos = e3
                        continue
                    if t3 == ")":
                        pos = e3
                        break
                    raise TermSyntaxError("expected ',' or ')'", pos)
            arity = self.theory.symbols.get(tok)
            if arity is None:
                raise TermSyntaxError(f"unknown function symbol {tok!r}", start)
            if arity != len(args):
                raise TermSyntaxError(f"{tok}/{arity} applied to {len(args)} arguments", start)
            return App(tok, args), pos
        if self.theory.symbols.get(tok) == 0:
            return App(tok, ()), end
        if tok in self.theory.symbols:
            raise TermSyntaxError(f"function symbol {tok!r} used without arguments", start)
        if t2 == ":":
            k3, t3, e3 = self._peek(text, e2)
            try:
                sort = Sort(t3)
            except ValueError:
                raise TermSyntaxError(f"unknown sort {t3!r}", e2) from None
            if sort is Sort.FACT:
                raise TermSyntaxError("term variables cannot have sort fact", e2)
            prev = self.sorts.get(tok)
            if prev is not None and prev is not sort:
                raise TermSyntaxError(f"variable {tok!r} redeclared with sort {sort.value}", start)
            self.sorts[tok] = sort
            return Var(tok, sort), e3
        return Var(tok, self.sorts.get(tok, Sort.MSG)), end


def parse_term(text: str, theory: Theory = DEFAULT_THEORY) -> Term:
    parser = TermParser(theory)
    t, pos = parser.parse_at(text, 0)
    if text[pos:].strip():
        raise TermSyntaxError("trailing input", pos)
    return t
