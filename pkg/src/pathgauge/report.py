"""Analysis requests, reports and their JSON / text renderings."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from . import properties as props
from .explorer import (
    AttackFound,
    Bounds,
    NoAttackWithinBound,
    RestrictionUnsatisfiable,
    Scenario,
    check_protocol,
    counted,
    explore,
    minimize_trace,
    replay,
    rule_applications,
)
from .msr import Trace
from .protocols.base import ProtocolSpec
from .terms import Term, format_term

SCHEMA = "pathgauge-report/1"


@dataclass(frozen=True)
class AnalysisRequest:
    protocol: ProtocolSpec
    property: str
    bounds: Bounds = Bounds()
    scenario: Scenario | None = None
    minimize: bool = True
    seed: int = 0  # reserved: the search is deterministic

    def __post_init__(self):
        if self.property not in props.PROPERTIES:
            raise ValueError(f"unknown property {self.property!r}; expected one of {', '.join(props.PROPERTIES)}")
        if self.property not in self.protocol.properties:
            raise ValueError(f"{self.protocol.name} does not declare {self.property}; "
                             f"it supports {', '.join(self.protocol.properties)}")


@dataclass
class Report:
    request: AnalysisRequest
    verdict: str
    scenarios: list[Scenario]
    stats: dict
    elapsed: float
    scenario: Scenario | None = None
    trace: Trace | None = None
    steps: list = field(default_factory=list)
    violation: props.Violation | None = None
    minimized: bool = False
    replay_verified: bool = False
    reason: str = ""

    @property
    def exit_code(self) -> int:
        return 1 if self.verdict == "AttackFound" else 0

    def victims(self) -> list[Term]:
        return [] if self.trace is None or self.violation is None else find_victims(self.trace, self.violation)

    def to_dict(self, timing: bool = False) -> dict:
        req = self.request
        out = {
            "schema": SCHEMA,
            "protocol": req.protocol.name,
            "property": req.property,
            "verdict": self.verdict,
            "bounded": True,
            "bounds": req.bounds.to_dict(),
            "scenarios_explored": [s.label() for s in self.scenarios],
            "search": self.stats,
        }
        if self.reason:
            out["reason"] = self.reason
        if self.verdict == "AttackFound":
            out["scenario"] = self.scenario.to_dict()
            out["violation"] = self.violation.to_dict()
            out["victims"] = [format_term(v) for v in self.victims()]
            out["minimized"] = self.minimized
            out["replay_verified"] = self.replay_verified
            out["rule_applications"] = rule_applications(self.trace)
            out["trace"] = [_step_dict(st) for st in self.trace.steps]
        if timing:
            out["elapsed_seconds"] = round(self.elapsed, 3)
        return out


def _step_dict(st) -> dict:
    return {
        "time": st.time,
        "rule": st.rule,
        "counted": counted(st.rule),
        "substitution": [list(item) for item in st.subst],
        "events": [str(e) for e in st.events],
        "learned": sorted(format_term(t) for t in st.learned),
    }


def find_victims(trace: Trace, violation: props.Violation) -> list[Term]:
    """Honest agents of the violated session that the attack routed around.

    For path symmetry these are the honest agents that forwarded their own
    layer but never took part in the return; for path integrity the honest
    agents earlier on the path that never forwarded theirs.
    """
    p = violation.session
    corrupt = {e.args[0] for _, e in trace.events("Corrupt")}
    order = props.derive_path_order(trace, p)
    adds = {e.args[1]: (e.args[1],) + e.args[2:] for _, e in trace.events("Add") if e.args[0] == p}
    forwarded = {e.args[0] for _, e in trace.events("Forward") if adds.get(e.args[0]) == e.args}
    backward = {e.args[0] for _, e in trace.events("Backward")}
    honest = [a for a in order.agents[1:] if a not in corrupt]
    if violation.property == props.PATH_SYMMETRY:
        return [a for a in honest if a in forwarded and a not in backward]
    last = order.index(violation.binding("M_i"))
    return [a for a in honest if order.index(a) < last and a not in forwarded]


def run_analysis(req: AnalysisRequest) -> Report:
    started = time.perf_counter()
    if req.scenario is not None:
        v = explore(req.protocol, req.scenario, req.property, req.bounds)
        if isinstance(v, NoAttackWithinBound):
            v.scenarios = [req.scenario]
    else:
        v = check_protocol(req.protocol, req.property, req.bounds)
    stats = v.stats.to_dict()
    if isinstance(v, RestrictionUnsatisfiable):
        return Report(req, v.kind, [], stats, time.perf_counter() - started, scenario=v.scenario,
                      reason=v.reason)
    if isinstance(v, NoAttackWithinBound):
        return Report(req, v.kind, list(v.scenarios), stats, time.perf_counter() - started)
    steps, trace, violation = list(v.steps), v.trace, v.violation
    minimized = False
    if req.minimize:
        steps, trace, violation = minimize_trace(req.protocol, steps, req.property, violation.clause)
        minimized = True
    _, again, applied = replay(req.protocol, steps)
    check = props.check(req.property, again, req.protocol.theory)
    verified = again.steps == trace.steps and check is not None and check.clause == violation.clause
    return Report(req, v.kind, [v.scenario], stats, time.perf_counter() - started, scenario=v.scenario,
                  trace=trace, steps=applied, violation=violation, minimized=minimized,
                  replay_verified=verified)


def emit_report(report: Report, fmt: str = "json", timing: bool = False) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(timing), indent=2, sort_keys=True) + "\n"
    if fmt == "text":
        return render_text(report, timing)
    raise ValueError(f"unknown format {fmt!r}")


# -- text ---------------------------------------------------------------------

_ADVERSARY = "adversary"


def _actor(step, rule_phase: str | None, initiator: Term) -> str | None:
    if step.phase == "adversary":
        return _ADVERSARY
    for e in step.events:
        if e.name in ("Forward", "Backward", "StartBuild", "Complete"):
            return format_term(e.args[0])
    if rule_phase == "construction":
        return format_term(initiator)
    return None


def render_text(report: Report, timing: bool = False) -> str:
    req = report.request
    lines = [f"{req.protocol.name} / {req.property}: {report.verdict} (bounded search)"]
    b = req.bounds
    lines.append(f"bounds: path length {b.min_path_length}..{b.max_path_length}, at most {b.max_agents} agents, "
                 f"{b.max_steps} counted steps, {b.max_corrupt} corrupt, recombination depth {b.recombination_depth}")
    lines.append(f"search: {report.stats['states']} states over {report.stats['scenarios']} scenario(s)"
                 + (" (state cap reached in some scenario)" if report.stats.get("truncated") else ""))
    if timing:
        lines.append(f"time: {report.elapsed:.2f}s")
    if report.verdict == "RestrictionUnsatisfiable":
        lines.append(f"the scenario admits no run: {report.reason}")
        return "\n".join(lines) + "\n"
    if report.verdict != "AttackFound":
        lines.append("no violation in any explored scenario; this says nothing beyond the bounds above")
        return "\n".join(lines) + "\n"
    sc, v = report.scenario, report.violation
    lines.append(f"scenario: {sc.label()}   (* marks a corrupt agent)")
    lines.append(f"violation: clause {v.clause}: {v.reason}")
    victims = report.victims()
    if victims:
        names = ", ".join(format_term(a).strip("'") for a in victims)
        if v.property == props.PATH_SYMMETRY:
            lines.append(f"victims: {names} (forwarded the payment, skipped during settlement, fee skimmed)")
        else:
            lines.append(f"victims: {names} (never forwarded, although a later agent did)")
    lines.append(f"counted steps: {rule_applications(report.trace)}"
                 + (" after minimization" if report.minimized else "")
                 + ("; replay verified" if report.replay_verified else ""))
    lines.append("")
    lines += _sequence_chart(report)
    return "\n".join(lines) + "\n"


def _sequence_chart(report: Report) -> list[str]:
    sc = report.scenario
    phases = {r.name: r.phase for r in report.request.protocol.rules}
    cols = [format_term(a).strip("'") + ("*" if a in sc.corrupt else "") for a in sc.path] + [_ADVERSARY]
    keys = [format_term(a) for a in sc.path] + [_ADVERSARY]
    width = max(len(c) for c in cols) + 2
    rows = ["   t  " + "".join(c.ljust(width) for c in cols) + "what happens"]
    setup = [st for st in report.trace.steps if phases.get(st.rule) == "setup"]
    if setup:
        rows.append(f"{'':>4}  " + "".join("".ljust(width) for _ in cols)
                    + f"setup: {len(setup)} key and parameter generation steps")
    pending: list = []

    def flush():
        if pending:
            built = [format_term(t) for st in pending for t in st.learned]
            what = "derives " + (", ".join(built[-2:]) if built else "terms")
            rows.append(_row(pending[-1].time, keys.index(_ADVERSARY), cols, width, "~", what))
            pending.clear()

    for st in report.trace.steps:
        phase = phases.get(st.rule)
        if phase == "setup":
            continue
        if st.rule.startswith("Fun_") or st.rule in ("Adv_Pub", "Adv_Fr"):
            pending.append(st)
            continue
        flush()
        actor = _actor(st, phase, sc.initiator)
        col = keys.index(actor) if actor in keys else keys.index(_ADVERSARY)
        rows.append(_row(st.time, col, cols, width, "*" if st.phase == "adversary" else "o", _describe(st)))
    flush()
    return rows


def _row(time_: int, col: int, cols: list[str], width: int, mark: str, what: str) -> str:
    cells = ["|".ljust(width) for _ in cols]
    cells[col] = (mark + " ").ljust(width)
    return f"{time_:>4}  " + "".join(cells) + what


def _describe(st) -> str:
    shown = [str(e) for e in st.events if e.name not in ("K", "Equal")]
    if st.rule == "Inject":
        x = dict(st.subst).get("x", "a message")
        return f"injects {x}"
    if st.rule == "Block":
        return "intercepts " + dict(st.subst).get("x", "a message")
    if st.rule.startswith("Corrupt"):
        return f"{st.rule}: " + ", ".join(shown)
    return f"{st.rule}: " + ("; ".join(shown) if shown else "(no events)")
