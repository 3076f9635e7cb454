"""Protocol specifications: rule sets plus the metadata the explorer needs."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..msr import PHASE_RANK, Rule
from ..terms import DEFAULT_THEORY, Term, Theory

ROLES = ("agent", "middle", "left", "right", "initiator", "final", "hop")


@dataclass(frozen=True)
class ProtocolSpec:
    """An executable path protocol.

    ``roles`` on setup and construction rules tell the explorer how to
    instantiate them for a concrete path:

    * ``agent`` / ``middle``: once per path agent / per intermediate
    * ``left`` + ``right``: once per adjacent pair
    * ``initiator`` / ``final``: the two endpoints
    * ``hop``: construction only; intermediates from the last to the first
    """

    name: str
    rules: tuple[Rule, ...]
    theory: Theory = DEFAULT_THEORY
    facts: tuple[tuple[str, int, bool], ...] = ()
    properties: tuple[str, ...] = ("path-integrity",)
    constants: tuple[Term, ...] = ()
    description: str = ""

    def __post_init__(self):
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError(f"{self.name}: duplicate rule names")
        for r in self.rules:
            for _, role in r.roles:
                if role not in ROLES:
                    raise ValueError(f"{self.name}/{r.name}: unknown role {role!r}")
            # the textual syntax could not tell such a variable from a constant
            clash = sorted(v.ident for v in r.variables if v.ident in self.theory.symbols)
            if clash:
                raise ValueError(f"{self.name}/{r.name}: variable {clash[0]!r} shadows a function symbol")

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def phase(self, *phases: str) -> list[Rule]:
        return [r for r in self.rules if r.phase in phases]

    @property
    def phases(self) -> set[str]:
        return {r.phase for r in self.rules}

    @property
    def build_arity(self) -> int | None:
        for r in self.rules:
            for f in r.conclusions:
                if f.name == "Build":
                    return len(f.args)
        return None

    def ordered_rules(self) -> list[Rule]:
        return sorted(self.rules, key=lambda r: (PHASE_RANK[r.phase], r.name))
