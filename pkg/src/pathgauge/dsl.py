"""Line-oriented protocol description language.

A file is a header followed by bracketed sections::

    protocol lightning_setup
    description Onion-routed HTLC set-up.

    [symbols]
    mac/2

    [equations]
    open(mac(x, k), k) = x

    [facts]
    !Invoice/2

    [properties]
    path-integrity

    [setup]
    rule Gen_Ltk roles A:agent
      [Fr(ltk:fresh)]
      --[]->
      [!Ltk(A:pub, ltk:fresh), !Pk(A:pub, pk(ltk:fresh))]

Terms use the canonical syntax of :mod:`pathgauge.terms`.  A variable
carries its sort (``x:pub``, ``x:fresh``) at least once per rule; a bare
lowercase identifier is a message variable.  Phase sections may repeat, so
the order of rules in a file is the order of rules in the spec.  ``#``
starts a comment.

Every problem is reported as a :class:`Diagnostic` with a stable code and a
1-based line/column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .msr import PHASES, RESERVED_FACTS, Fact, Rule, RuleError
from .properties import PROPERTIES
from .protocols.base import ROLES, ProtocolSpec
from .terms import (
    BUILTIN_EQUATIONS,
    BUILTIN_SYMBOLS,
    DEFAULT_THEORY,
    ArityError,
    ConvergenceError,
    Equation,
    Sort,
    Term,
    TermError,
    TermParser,
    TermSyntaxError,
    Theory,
    format_term,
)

RULE_PHASES = tuple(p for p in PHASES if p != "adversary")
SECTIONS = ("symbols", "equations", "facts", "properties", "constants") + RULE_PHASES

CODES = {
    "E-SYNTAX": "malformed input",
    "E-SECTION": "unknown or misplaced section",
    "E-UNKNOWN-SYMBOL": "function symbol not declared",
    "E-ARITY": "symbol or fact used with the wrong number of arguments",
    "E-SORT": "inconsistent or unknown variable sort",
    "E-UNBOUND": "variable in an action or conclusion is not bound by a premise",
    "E-CONVERGENCE": "equation outside the subterm-convergent fragment",
    "E-PERSISTENCE": "fact used with the wrong persistence marker",
    "E-DUPLICATE": "name declared twice",
    "E-ROLE": "unknown role or role variable",
    "E-PROPERTY": "unknown property",
    "E-RULE": "rule rejected",
}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.code}: {self.message}"


class DslError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


_HEADER = re.compile(r"^(protocol|description)(?:\s+(.*))?$")
_SECTION = re.compile(r"^\[([A-Za-z_-]*)\]\s*$")
_SYMBOL = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*/\s*([0-9]+)$")
_FACT_DECL = re.compile(r"^(!?)([A-Z][A-Za-z0-9_]*)\s*/\s*([0-9]+)$")
_RULE = re.compile(r"^rule\s+([A-Za-z_][A-Za-z0-9_]*)\s*(?:roles\s+(.*))?$")
_ROLE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*([a-z]+)$")
_FACT_NAME = re.compile(r"\s*(!?)([A-Za-z_][A-Za-z0-9_]*)\s*\(")
_ARROW_OPEN = re.compile(r"\s*--\[")
_ARROW_CLOSE = re.compile(r"\s*\]->")
_PLAIN_ARROW = re.compile(r"\s*-->")


def _strip_comment(line: str) -> str:
    # '#' never occurs inside the term syntax, quoted names included
    i = line.find("#")
    return line if i < 0 else line[:i]


class _Source:
    """Maps offsets in a joined rule body back to file positions."""

    def __init__(self, pieces: list[tuple[int, int, str]]):
        self.text = "\n".join(p[2] for p in pieces)
        self.starts = []
        off = 0
        for line, col, chunk in pieces:
            self.starts.append((off, line, col))
            off += len(chunk) + 1

    def where(self, offset: int) -> tuple[int, int]:
        line, col, base = self.starts[0][1], self.starts[0][2], 0
        for start, ln, c in self.starts:
            if start <= offset:
                line, col, base = ln, c, start
        return line, col + (offset - base)


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.diags: list[Diagnostic] = []
        self.name: str | None = None
        self.description = ""
        self.symbols: dict[str, int] = {}
        self.equations: list[tuple[int, str]] = []
        self.fact_decls: list[tuple[str, int, bool]] = []
        self.properties: list[str] = []
        self.constants: list[Term] = []
        self.rules: list[tuple[int, str, str, str, list[tuple[int, int, str]]]] = []

    def error(self, code: str, message: str, line: int, column: int = 1) -> None:
        self.diags.append(Diagnostic(code, message, line, column))

    # pass 1: split into header, declarations and raw rule bodies -----------

    def scan(self) -> None:
        section = None
        current = None  # rule under construction
        for no, raw in enumerate(self.lines, start=1):
            line = _strip_comment(raw).rstrip()
            if not line.strip():
                continue
            indent = len(line) - len(line.lstrip())
            body = line.strip()
            if indent and current is not None:
                current[4].append((no, indent + 1, body))
                continue
            current = None
            if indent:
                self.error("E-SYNTAX", "unexpected indented line", no, indent + 1)
                continue
            m = _SECTION.match(body)
            if m:
                section = m.group(1)
                if section not in SECTIONS:
                    self.error("E-SECTION", f"unknown section [{section}]", no)
                    section = None
                continue
            if section is None:
                m = _HEADER.match(body)
                if m is None:
                    self.error("E-SYNTAX", "expected 'protocol', 'description' or a [section]", no)
                elif m.group(1) == "protocol":
                    name = (m.group(2) or "").strip()
                    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_-]*", name):
                        self.error("E-SYNTAX", "protocol needs a name", no)
                    elif self.name is not None:
                        self.error("E-DUPLICATE", "protocol named twice", no)
                    else:
                        self.name = name
                else:
                    self.description = (m.group(2) or "").strip()
                continue
            if section in RULE_PHASES:
                m = _RULE.match(body)
                if m is None:
                    self.error("E-SYNTAX", "expected 'rule NAME [roles VAR:ROLE, ...]'", no)
                    continue
                current = (no, m.group(1), section, m.group(2) or "", [])
                self.rules.append(current)
            else:
                getattr(self, "decl_" + section)(body, no)

    def decl_symbols(self, body: str, no: int) -> None:
        for item in _split_commas(body):
            m = _SYMBOL.match(item)
            if m is None:
                self.error("E-SYNTAX", f"expected NAME/ARITY, got {item!r}", no)
                continue
            name, arity = m.group(1), int(m.group(2))
            known = BUILTIN_SYMBOLS.get(name, self.symbols.get(name))
            if known is not None:
                code = "E-DUPLICATE" if known == arity else "E-ARITY"
                self.error(code, f"symbol {name} already declared with arity {known}", no)
                continue
            self.symbols[name] = arity

    def decl_equations(self, body: str, no: int) -> None:
        self.equations.append((no, body))

    def decl_facts(self, body: str, no: int) -> None:
        for item in _split_commas(body):
            m = _FACT_DECL.match(item)
            if m is None:
                self.error("E-SYNTAX", f"expected [!]Name/ARITY, got {item!r}", no)
                continue
            persistent, name, arity = bool(m.group(1)), m.group(2), int(m.group(3))
            if any(d[0] == name for d in self.fact_decls):
                self.error("E-DUPLICATE", f"fact {name} declared twice", no)
                continue
            reserved = RESERVED_FACTS.get(name)
            if reserved is not None:
                if reserved[0] is not None and reserved[0] != arity:
                    self.error("E-ARITY", f"built-in fact {name} has arity {reserved[0]}", no)
                    continue
                if reserved[1] != persistent:
                    self.error("E-PERSISTENCE", f"built-in fact {name} is "
                               + ("persistent" if reserved[1] else "linear"), no)
                    continue
            self.fact_decls.append((name, arity, persistent))

    def decl_properties(self, body: str, no: int) -> None:
        for item in _split_commas(body):
            if item not in PROPERTIES:
                self.error("E-PROPERTY", f"unknown property {item!r}; expected one of {', '.join(PROPERTIES)}", no)
            elif item in self.properties:
                self.error("E-DUPLICATE", f"property {item} listed twice", no)
            else:
                self.properties.append(item)

    def decl_constants(self, body: str, no: int) -> None:
        for item in _split_commas(body):
            m = re.fullmatch(r"'([^']*)'", item)
            if m is None:
                self.error("E-SYNTAX", f"constants are quoted public names, got {item!r}", no)
                continue
            from .terms import pub
            self.constants.append(pub(m.group(1)))

    # pass 2: theory -----------------------------------------------------

    def theory(self) -> Theory:
        symbols = dict(BUILTIN_SYMBOLS)
        symbols.update(self.symbols)
        base = Theory(symbols, BUILTIN_EQUATIONS)
        eqs = []
        for no, body in self.equations:
            if body.count("=") != 1:
                self.error("E-SYNTAX", "an equation is 'lhs = rhs'", no)
                continue
            cut = body.index("=")
            parser = TermParser(base, {})
            try:
                lhs, end = parser.parse_at(body, 0)
                if body[end:cut].strip():
                    raise TermSyntaxError("expected '='", end)
                rhs, end = parser.parse_at(body, cut + 1)
                if body[end:].strip():
                    raise TermSyntaxError("trailing input", end)
            except TermSyntaxError as exc:
                self._term_error(exc, no, 1 + getattr(exc, "pos", 0))
                continue
            except RecursionError:
                self.error("E-SYNTAX", "term nested too deeply", no)
                continue
            eq = Equation(lhs, rhs)
            try:
                Theory(symbols, BUILTIN_EQUATIONS + tuple(eqs) + (eq,))
            except ConvergenceError as exc:
                self.error("E-CONVERGENCE", str(exc), no)
                continue
            except ArityError as exc:
                self.error("E-ARITY", str(exc), no)
                continue
            eqs.append(eq)
        if not self.symbols and not eqs:
            return DEFAULT_THEORY
        return DEFAULT_THEORY.extend(self.symbols, eqs)

    def _term_error(self, exc: TermSyntaxError, line: int, column: int) -> None:
        msg = str(exc)
        if "unknown function symbol" in msg:
            code = "E-UNKNOWN-SYMBOL"
        elif "applied to" in msg or "used without arguments" in msg:
            code = "E-ARITY"
        elif "sort" in msg:
            code = "E-SORT"
        else:
            code = "E-SYNTAX"
        self.error(code, _bare(msg), line, column)

    # pass 3: rules ----------------------------------------------------------

    def build_rules(self, theory: Theory) -> list[Rule]:
        arities: dict[str, tuple[int, bool]] = {n: (a, p) for n, a, p in self.fact_decls}
        out: list[Rule] = []
        seen: set[str] = set()
        for no, name, phase, roles_text, pieces in self.rules:
            if name in seen:
                self.error("E-DUPLICATE", f"rule {name} defined twice", no)
                continue
            seen.add(name)
            if not pieces:
                self.error("E-SYNTAX", f"rule {name} has no body", no)
                continue
            src = _Source(pieces)
            before = len(self.diags)
            try:
                triple = self._triple(src, theory)
            except TermSyntaxError as exc:
                pos = getattr(exc, "pos", 0)
                line, col = src.where(pos)
                self._term_error(exc, line, col)
                continue
            except RecursionError:
                self.error("E-SYNTAX", "term nested too deeply", no)
                continue
            prem, acts, concl = triple
            for f, off in prem + acts + concl:
                self._check_fact(f, arities, src, off)
            bound = frozenset().union(*(f.variables for f, _ in prem))
            for f, off in acts + concl:
                for v in sorted(f.variables, key=lambda v: v.ident):
                    if v not in bound and v.sort is not Sort.PUB:
                        line, col = src.where(off)
                        self.error("E-UNBOUND", f"rule {name}: {format_term(v)} in {f.name} "
                                   "is not bound by a premise", line, col)
            roles = self._roles(roles_text, no, name, prem + acts + concl)
            if len(self.diags) != before:
                continue
            try:
                out.append(Rule(name, tuple(f for f, _ in prem), tuple(f for f, _ in acts),
                                tuple(f for f, _ in concl), phase, roles))
            except RuleError as exc:
                self.error("E-RULE", str(exc), no)
        return out

    def _roles(self, text: str, no: int, rule: str, facts) -> tuple[tuple[str, str], ...]:
        if not text.strip():
            return ()
        names = {v.ident for f, _ in facts for v in f.variables}
        roles = []
        for item in _split_commas(text):
            m = _ROLE.match(item)
            if m is None:
                self.error("E-SYNTAX", f"expected VAR:ROLE, got {item!r}", no)
                continue
            var, role = m.groups()
            if role not in ROLES:
                self.error("E-ROLE", f"unknown role {role!r}; expected one of {', '.join(ROLES)}", no)
            elif var not in names:
                self.error("E-ROLE", f"rule {rule}: role variable {var} does not occur in the rule", no)
            else:
                roles.append((var, role))
        return tuple(roles)

    def _check_fact(self, f: Fact, arities: dict, src: _Source, off: int) -> None:
        line, col = src.where(off)
        reserved = RESERVED_FACTS.get(f.name)
        if reserved is not None:
            arity, persistent = reserved
            if arity is None and f.name in arities:
                arity = arities[f.name][0]
        elif f.name in arities:
            arity, persistent = arities[f.name]
        else:
            arities[f.name] = (len(f.args), f.persistent)
            return
        if arity is not None and arity != len(f.args):
            self.error("E-ARITY", f"fact {f.name} expects {arity} arguments, got {len(f.args)}", line, col)
        elif arity is None:
            arities[f.name] = (len(f.args), persistent)
        if persistent != f.persistent:
            self.error("E-PERSISTENCE", f"fact {f.name} is " + ("persistent" if persistent else "linear")
                       + (", write !" + f.name if persistent else ", drop the '!'"), line, col)

    def _triple(self, src: _Source, theory: Theory):
        text = src.text
        parser = TermParser(theory, {})
        pos = _expect(text, 0, "[")
        prem, pos = self._facts(text, pos, parser, "]")
        m = _PLAIN_ARROW.match(text, pos)
        if m:
            acts, pos = [], m.end()
        else:
            m = _ARROW_OPEN.match(text, pos)
            if m is None:
                raise TermSyntaxError("expected '--[' or '-->'", _skip(text, pos))
            acts, pos = self._facts(text, m.end(), parser, None)
            m = _ARROW_CLOSE.match(text, pos)
            if m is None:
                raise TermSyntaxError("expected ']->'", _skip(text, pos))
            pos = m.end()
        pos = _expect(text, pos, "[")
        concl, pos = self._facts(text, pos, parser, "]")
        if text[pos:].strip():
            raise TermSyntaxError("trailing input after the rule", _skip(text, pos))
        # sorts declared later in the rule apply to earlier bare occurrences
        return [tuple(_resort(x, parser.sorts) for x in group) for group in (prem, acts, concl)]

    def _facts(self, text: str, pos: int, parser: TermParser, close: str | None):
        items = []
        if close is not None and _peek_char(text, pos) == close:
            return items, _expect(text, pos, close)
        if close is None and _ARROW_CLOSE.match(text, pos):
            return items, pos
        while True:
            start = _skip(text, pos)
            m = _FACT_NAME.match(text, pos)
            if m is None:
                raise TermSyntaxError("expected a fact such as Name(args)", start)
            args = []
            pos = m.end()
            if _peek_char(text, pos) == ")":
                pos = _expect(text, pos, ")")
            else:
                while True:
                    t, pos = parser.parse_at(text, pos)
                    args.append(t)
                    c = _peek_char(text, pos)
                    if c == ",":
                        pos = _expect(text, pos, ",")
                        continue
                    pos = _expect(text, pos, ")")
                    break
            items.append((Fact(m.group(2), tuple(args), bool(m.group(1))), start))
            c = _peek_char(text, pos)
            if c == ",":
                pos = _expect(text, pos, ",")
                continue
            if close is not None:
                return items, _expect(text, pos, close)
            return items, pos


def _resort(item, sorts):
    from .terms import Var, apply_substitution

    f, off = item
    fix = {v: Var(v.ident, sorts[v.ident]) for v in f.variables
           if v.sort is Sort.MSG and sorts.get(v.ident, Sort.MSG) is not Sort.MSG}
    if not fix:
        return item
    return Fact(f.name, tuple(apply_substitution(a, fix) for a in f.args), f.persistent), off


def _bare(msg: str) -> str:
    return re.sub(r"\s*\(at (?:offset )?\d+\)$", "", msg)


def _skip(text: str, pos: int) -> int:
    while pos < len(text) and text[pos].isspace():
        pos += 1
    return pos


def _peek_char(text: str, pos: int) -> str:
    pos = _skip(text, pos)
    return text[pos] if pos < len(text) else ""


def _expect(text: str, pos: int, ch: str) -> int:
    pos = _skip(text, pos)
    if not text.startswith(ch, pos):
        raise TermSyntaxError(f"expected {ch!r}", pos)
    return pos + len(ch)


def _split_commas(body: str) -> list[str]:
    return [s.strip() for s in body.split(",") if s.strip()]


def parse_protocol_dsl(text: str) -> ProtocolSpec:
    """Parse a protocol file; raise :class:`DslError` listing every problem found."""
    p = _Parser(text)
    p.scan()
    theory = p.theory()
    rules = p.build_rules(theory)
    if p.name is None and not any(d.code == "E-DUPLICATE" and "protocol" in d.message for d in p.diags):
        p.error("E-SYNTAX", "missing 'protocol NAME' header", 1)
    if not rules and not p.diags:
        p.error("E-SYNTAX", "a protocol needs at least one rule", 1)
    if p.diags:
        raise DslError(sorted(p.diags, key=lambda d: (d.line, d.column, d.code)))
    try:
        return ProtocolSpec(p.name, tuple(rules), theory=theory, facts=tuple(p.fact_decls),
                            properties=tuple(p.properties) or ("path-integrity",),
                            constants=tuple(p.constants), description=p.description)
    except (ValueError, TermError) as exc:
        raise DslError([Diagnostic("E-RULE", str(exc), 1, 1)]) from None


def render_protocol_dsl(spec: ProtocolSpec) -> str:
    """The canonical file for ``spec``; ``parse_protocol_dsl`` inverts it."""
    out = [f"protocol {spec.name}"]
    if spec.description:
        out.append(f"description {spec.description}")
    extra_syms = {n: a for n, a in spec.theory.symbols.items() if n not in BUILTIN_SYMBOLS}
    extra_eqs = spec.theory.equations[len(BUILTIN_EQUATIONS):]
    if extra_syms:
        out += ["", "[symbols]"] + [f"{n}/{a}" for n, a in extra_syms.items()]
    if extra_eqs:
        out += ["", "[equations]"] + [f"{format_term(e.lhs)} = {format_term(e.rhs)}" for e in extra_eqs]
    if spec.facts:
        out += ["", "[facts]"] + [("!" if p else "") + f"{n}/{a}" for n, a, p in spec.facts]
    out += ["", "[properties]"] + list(spec.properties)
    if spec.constants:
        out += ["", "[constants]"] + [format_term(c) for c in spec.constants]
    phase = None
    for r in spec.rules:
        if r.phase != phase:
            phase = r.phase
            out += ["", f"[{phase}]"]
        head = f"rule {r.name}"
        if r.roles:
            head += " roles " + ", ".join(f"{v}:{role}" for v, role in r.roles)
        out.append(head)
        out.append("  [" + ", ".join(str(f) for f in r.premises) + "]")
        out.append("  --[" + ", ".join(str(f) for f in r.events) + "]->")
        out.append("  [" + ", ".join(str(f) for f in r.conclusions) + "]")
    return "\n".join(out) + "\n"


def load_protocol(ref: str) -> ProtocolSpec:
    """A built-in model name or a path to a protocol file."""
    from .protocols import MODELS, instantiate_model

    if ref in MODELS:
        return instantiate_model(ref)
    with open(ref, encoding="utf-8") as fh:
        return parse_protocol_dsl(fh.read())
