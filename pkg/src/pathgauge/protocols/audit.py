"""Static shape audit over the four packet positions of a path protocol.

A message leaving the initiator, entering an intermediary, leaving it and
entering the final agent should all look alike to an observer, otherwise
position on the path leaks from the packet itself.  The audit extracts the
constructor skeleton of every term that occupies one of these positions
and reports positions whose skeletons do not unify with the reference.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..terms import App, Name, Term, Var, format_term
from .base import ProtocolSpec

POSITIONS = ("out_initiator", "in_middle", "out_middle", "in_final")
SHAPE_DEPTH = 1  # the outer layer is what an on-path observer compares
_HOLE = Var("_")


@dataclass(frozen=True)
class ShapeMismatch:
    position: str
    rule: str
    shape: Term
    reference_position: str
    reference_rule: str
    reference: Term

    def __str__(self) -> str:
        return (f"{self.position} in {self.rule}: {format_term(self.shape)} does not match "
                f"{format_term(self.reference)} ({self.reference_position} in {self.reference_rule})")


def shape(t: Term, depth: int = SHAPE_DEPTH) -> Term:
    """Constructor skeleton of ``t``; variables and deep subterms become holes."""
    if isinstance(t, App) and depth > 0:
        return App(t.fn, tuple(shape(a, depth - 1) for a in t.args))
    if isinstance(t, Name):
        return t
    return _HOLE


def shapes_unify(a: Term, b: Term) -> bool:
    if a is _HOLE or b is _HOLE:
        return True
    if isinstance(a, App) and isinstance(b, App):
        return a.fn == b.fn and len(a.args) == len(b.args) and all(
            shapes_unify(x, y) for x, y in zip(a.args, b.args))
    return a == b


def packet_shapes(spec: ProtocolSpec) -> dict[str, list[tuple[str, Term]]]:
    """(rule, shape) pairs per packet position, in rule order."""
    out: dict[str, list[tuple[str, Term]]] = {pos: [] for pos in POSITIONS}
    for r in spec.rules:
        if r.phase == "construction":
            for f in r.conclusions:
                if f.name == "Net":
                    out["out_initiator"].append((r.name, shape(f.args[0])))
            for e in r.events:
                if e.name == "Add" and len(e.args) == 4:
                    out["out_initiator"].append((r.name, shape(e.args[2])))
        elif r.phase == "forwarding":
            for f in r.premises:
                if f.name == "Net":
                    out["in_middle"].append((r.name, shape(f.args[0])))
            for f in r.conclusions:
                if f.name == "Net":
                    out["out_middle"].append((r.name, shape(f.args[0])))
        elif r.phase == "receive":
            for f in r.premises:
                if f.name == "Net":
                    out["in_final"].append((r.name, shape(f.args[0])))
    return out


def audit_structural_symmetry(spec: ProtocolSpec) -> list[ShapeMismatch]:
    """Empty iff every packet-position shape unifies with the reference.

    The reference is the first shape that is not a bare hole, scanning the
    positions in path order.
    """
    found = packet_shapes(spec)
    ref = next(((pos, name, s) for pos in POSITIONS for name, s in found[pos] if s is not _HOLE), None)
    if ref is None:
        return []
    rpos, rname, rshape = ref
    return [ShapeMismatch(pos, name, s, rpos, rname, rshape)
            for pos in POSITIONS for name, s in found[pos] if not shapes_unify(s, rshape)]
