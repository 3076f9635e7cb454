"""Built-in protocol models.

Conventions shared by every model:

* ``Build(p, N, m, ...)`` during construction means "agent N must receive
  m"; Create produces the final agent's entry and each Wrap step moves one
  hop towards the initiator, recording that hop's Add(p, M, in, out).
* ``Forward(M, in, out)`` uses exactly the terms of the matching Add, so
  the path-integrity goal can compare them syntactically.
* ``!Session(A, E)`` tells the final agent which session endpoint it is.
"""

from __future__ import annotations

from ..msr import Fact, Rule, fact
from ..terms import DEFAULT_THEORY, EMPTY, TRUE, Sort, Term, Var, app, pair, pub
from .base import ProtocolSpec

PI, VDPI, PS = "path-integrity", "vd-path-integrity", "path-symmetry"


def V(name: str) -> Var:
    return Var(name)


def P(name: str) -> Var:
    return Var(name, Sort.PUB)


def F(name: str) -> Var:
    return Var(name, Sort.FRESH)


def rule(name, premises, events, conclusions, phase, roles=()):
    return Rule(name, tuple(premises), tuple(events), tuple(conclusions), phase, tuple(roles))


senc = lambda m, k: app("senc", m, k)  # noqa: E731
aenc = lambda m, k: app("aenc", m, k)  # noqa: E731
sign = lambda m, k: app("sign", m, k)  # noqa: E731
pk = lambda k: app("pk", k)  # noqa: E731
h = lambda m: app("h", m)  # noqa: E731
verify = lambda s, m, k: app("verify", s, m, k)  # noqa: E731

A, E, M, N, X, Y = P("A"), P("E"), P("M"), P("N"), P("X"), P("Y")
p, m, k, b, hd = F("p"), V("m"), V("k"), V("b"), V("hdr")


# -- shared setup rules ------------------------------------------------------

def gen_ltk(publish: bool = True) -> Rule:
    ltk = F("ltk")
    concl = [fact("!Ltk", A, ltk), fact("!Pk", A, pk(ltk))]
    if publish:
        concl.append(fact("Net", pk(ltk)))
    return rule("Gen_Ltk", [fact("Fr", ltk)], [], concl, "setup", [("A", "agent")])


def gen_shkey() -> Rule:
    key = F("k")
    return rule("Gen_ShKey", [fact("Fr", key)], [], [fact("!ShKey", X, Y, key)], "setup",
                [("X", "left"), ("Y", "right")])


def gen_session() -> Rule:
    return rule("Gen_Session", [], [], [fact("!Session", A, E)], "setup",
                [("A", "initiator"), ("E", "final")])


def send_rule() -> Rule:
    return rule("Send", [fact("Build", p, N, m)], [], [fact("Net", m)], "construction")


# -- the running example ---------------------------------------------------------

def example_pk() -> ProtocolSpec:
    """Onion of public-key encryptions around a signed payload."""
    ltkA, ltkE, ltk, pkE, pkA, sig = F("ltkA"), F("ltkE"), F("ltk"), V("pkE"), V("pkA"), V("sig")
    m0 = aenc(pair(p, sign(p, ltkA)), pkE)
    rules = (
        gen_ltk(),
        rule("Create", [fact("Fr", p), fact("!Pk", E, pkE), fact("!Ltk", A, ltkA)],
             [fact("Add", p, E, m0, EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, m0)], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, m), fact("!Pk", M, V("pkM"))],
             [fact("Add", p, M, aenc(m, V("pkM")), m)],
             [fact("Build", p, M, aenc(m, V("pkM")))], "construction", [("M", "hop")]),
        send_rule(),
        # an intermediate only peels a layer that wraps another layer
        rule("Unwrap", [fact("Net", aenc(aenc(m, V("pkN")), pk(ltk))), fact("!Ltk", M, ltk)],
             [fact("Forward", M, aenc(aenc(m, V("pkN")), pk(ltk)), aenc(m, V("pkN")))],
             [fact("Net", aenc(m, V("pkN")))], "forwarding"),
        rule("Receive", [fact("Net", aenc(pair(V("q"), sig), pk(ltkE))), fact("!Ltk", E, ltkE), fact("!Pk", A, pkA)],
             [fact("Forward", E, aenc(pair(V("q"), sig), pk(ltkE)), EMPTY),
              fact("Equal", verify(sig, V("q"), pkA), TRUE)],
             [], "receive"),
    )
    return ProtocolSpec("example_pk", rules, properties=(PI,),
                        description="Running example: nested public-key layers, signed payload.")


def chaum() -> ProtocolSpec:
    """Chaum mix cascade: each layer names the next hop."""
    ltk, pkE = F("ltk"), V("pkE")
    final = aenc(pair(EMPTY, p), pkE)
    rules = (
        gen_ltk(),
        rule("Create", [fact("Fr", p), fact("!Pk", E, pkE)],
             [fact("Add", p, E, final, EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, final)], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, m), fact("!Pk", M, V("pkM"))],
             [fact("Add", p, M, aenc(pair(N, m), V("pkM")), m)],
             [fact("Build", p, M, aenc(pair(N, m), V("pkM")))], "construction", [("M", "hop")]),
        send_rule(),
        rule("Unwrap", [fact("Net", aenc(pair(N, m), pk(ltk))), fact("!Ltk", M, ltk)],
             [fact("Forward", M, aenc(pair(N, m), pk(ltk)), m)], [fact("Net", m)], "forwarding"),
        rule("Receive", [fact("Net", aenc(pair(EMPTY, V("q")), pk(ltk))), fact("!Ltk", E, ltk), fact("!Session", A, E)],
             [fact("Forward", E, aenc(pair(EMPTY, V("q")), pk(ltk)), EMPTY)], [], "receive"),
        gen_session(),
    )
    return ProtocolSpec("chaum", _setup_first(rules), properties=(PI,),
                        description="Chained asymmetric encryption with next-hop routing inside each layer.")


# -- middlebox TLS variants ----------------------------------------------------

def mbtls() -> ProtocolSpec:
    """Record phase of mbTLS: one session key per adjacent pair, plain re-encryption."""
    kin, kout = F("kin"), F("kout")
    rules = (
        gen_shkey(),
        gen_session(),
        rule("Create", [fact("Fr", p), fact("!ShKey", X, E, k)],
             [fact("Add", p, E, senc(p, k), EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, X, senc(p, k))], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, M, senc(m, kout)), fact("!ShKey", X, M, kin)],
             [fact("Add", p, M, senc(m, kin), senc(m, kout))],
             [fact("Build", p, X, senc(m, kin))], "construction", [("M", "hop")]),
        send_rule(),
        rule("Forward", [fact("Net", senc(m, kin)), fact("!ShKey", X, M, kin), fact("!ShKey", M, Y, kout)],
             [fact("Forward", M, senc(m, kin), senc(m, kout))], [fact("Net", senc(m, kout))], "forwarding"),
        rule("Receive", [fact("Net", senc(m, k)), fact("!ShKey", X, E, k), fact("!Session", A, E)],
             [fact("Forward", E, senc(m, k), EMPTY)], [], "receive"),
    )
    return ProtocolSpec("mbtls", _setup_first(rules), properties=(PI,),
                        description="mbTLS record phase: per-segment keys, re-encryption at each middlebox.")


MCTLS_THEORY = DEFAULT_THEORY.extend({"mac": 2})


def mctls() -> ProtocolSpec:
    """Record phase of mcTLS: context keys shared by every permitted party.

    Every middlebox with write permission holds the same read and write
    context keys, so the record (ciphertext plus write MAC) is identical on
    every segment.
    """
    kr, kw, c = F("kr"), F("kw"), V("c")
    rec = lambda q: pair(senc(q, kr), app("mac", senc(q, kr), kw))  # noqa: E731
    wire = pair(c, app("mac", c, kw))
    rules = (
        rule("Gen_Ctx", [fact("Fr", kr), fact("Fr", kw)], [], [fact("!Ctx", A, E, kr, kw)], "setup",
             [("A", "initiator"), ("E", "final")]),
        rule("Grant", [fact("!Ctx", A, E, kr, kw)], [], [fact("!CtxKey", M, kr, kw)], "setup",
             [("M", "middle")]),
        rule("Create", [fact("Fr", p), fact("!Ctx", A, E, kr, kw)],
             [fact("Add", p, E, rec(p), EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, rec(p))], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, m)], [fact("Add", p, M, m, m)], [fact("Build", p, M, m)],
             "construction", [("M", "hop")]),
        send_rule(),
        rule("Forward", [fact("Net", wire), fact("!CtxKey", M, kr, kw)],
             [fact("Forward", M, wire, wire)], [fact("Net", wire)], "forwarding"),
        rule("Receive", [fact("Net", rec(V("q"))), fact("!Ctx", A, E, kr, kw)],
             [fact("Forward", E, rec(V("q")), EMPTY)], [], "receive"),
    )
    return ProtocolSpec("mctls", rules, theory=MCTLS_THEORY, properties=(PI,),
                        description="mcTLS record phase: permission-scoped context keys, write MAC.")


def matls() -> ProtocolSpec:
    """Record phase of maTLS with the signed modification log.

    Each hop checks its predecessor's log entry, appends its own signature
    and re-encrypts; each agent handles one record per session (``Ready``).
    The final agent's verification phase walks the whole log before
    emitting Complete.  Forward events abstract away the log, which cannot
    be predicted at construction time.
    """
    kin, kout, ltk, s, l, seen = F("kin"), F("kout"), F("ltk"), V("s"), V("l"), V("seen")
    ltkA, pkX, pl = F("ltkA"), V("pkX"), V("pl")
    rules = (
        gen_ltk(),
        gen_shkey(),
        gen_session(),
        rule("Gen_Ready", [], [], [fact("Ready", A)], "setup", [("A", "agent")]),
        rule("Create", [fact("Fr", p), fact("!ShKey", X, E, k)],
             [fact("Add", p, E, senc(p, k), EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, X, senc(p, k), EMPTY)], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, M, senc(m, kout), pl), fact("!ShKey", X, M, kin)],
             [fact("Add", p, M, senc(m, kin), senc(m, kout))],
             [fact("Build", p, X, senc(m, kin), pair(M, pl))], "construction", [("M", "hop")]),
        rule("Send", [fact("Build", p, A, senc(m, k), pl), fact("!Ltk", A, ltkA), fact("!Session", A, E)],
             [], [fact("Net", senc(pair(m, pair(sign(pair(m, EMPTY), ltkA), EMPTY)), k)),
                  fact("!Expect", E, m, pair(A, pl))], "construction"),
        rule("Forward",
             [fact("Net", senc(pair(m, pair(s, l)), kin)), fact("!ShKey", X, M, kin), fact("!ShKey", M, Y, kout),
              fact("!Ltk", M, ltk), fact("!Pk", X, pkX), fact("Ready", M)],
             [fact("Forward", M, senc(m, kin), senc(m, kout)), fact("Equal", verify(s, pair(m, l), pkX), TRUE)],
             [fact("Net", senc(pair(m, pair(sign(pair(m, pair(s, l)), ltk), pair(s, l))), kout))], "forwarding"),
        rule("Receive", [fact("Net", senc(pair(m, l), k)), fact("!ShKey", X, E, k), fact("!Session", A, E),
                         fact("Ready", E)],
             [fact("Forward", E, senc(m, k), EMPTY)], [fact("Check", E, m, l, EMPTY)], "receive"),
        rule("Verify", [fact("Check", E, m, pair(s, l), seen), fact("!Pk", N, pkX)],
             [fact("Equal", verify(s, pair(m, l), pkX), TRUE)],
             [fact("Check", E, m, l, pair(N, seen))], "verification"),
        rule("Accept", [fact("Check", E, m, EMPTY, seen), fact("!Expect", E, m, seen)],
             [fact("Complete", E, m)], [], "verification"),
    )
    return ProtocolSpec("matls", rules, properties=(PI, VDPI),
                        facts=(("Check", 4, False), ("Ready", 1, False), ("Expect", 3, True)),
                        description="maTLS record phase: per-hop signature log verified by the final agent.")


# -- onion routing -------------------------------------------------------------

def tor_establish() -> ProtocolSpec:
    """Circuit extension: each public-key layer hands a hop its circuit id and key."""
    ltk, pkE, cid, kh = F("ltk"), V("pkE"), F("cid"), F("kh")
    final = aenc(pair(pair(cid, kh), pair(EMPTY, EMPTY)), pkE)
    rules = (
        gen_ltk(),
        gen_session(),
        rule("Create", [fact("Fr", p), fact("Fr", cid), fact("Fr", kh), fact("!Pk", E, pkE)],
             [fact("Add", p, E, final, EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, final)], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, m), fact("Fr", cid), fact("Fr", kh), fact("!Pk", M, V("pkM"))],
             [fact("Add", p, M, aenc(pair(pair(cid, kh), pair(N, m)), V("pkM")), m)],
             [fact("Build", p, M, aenc(pair(pair(cid, kh), pair(N, m)), V("pkM")))], "construction", [("M", "hop")]),
        send_rule(),
        rule("Extend", [fact("Net", aenc(pair(V("ck"), pair(N, m)), pk(ltk))), fact("!Ltk", M, ltk)],
             [fact("Forward", M, aenc(pair(V("ck"), pair(N, m)), pk(ltk)), m)],
             [fact("Net", m)], "forwarding"),
        rule("Receive", [fact("Net", aenc(pair(V("ck"), pair(EMPTY, EMPTY)), pk(ltk))), fact("!Ltk", E, ltk),
                         fact("!Session", A, E)],
             [fact("Forward", E, aenc(pair(V("ck"), pair(EMPTY, EMPTY)), pk(ltk)), EMPTY)],
             [], "receive"),
    )
    return ProtocolSpec("tor_establish", _setup_first(rules), properties=(PI,),
                        description="Tor circuit establishment: layered key/circuit-id hand-out.")


def tor_data() -> ProtocolSpec:
    """Relay cells over an established circuit: <circuit id, onion layer>."""
    c, c2, kh = F("c"), F("c2"), F("kh")
    rules = (
        rule("Gen_Cid", [fact("Fr", c)], [], [fact("!Cid", X, Y, c)], "setup", [("X", "left"), ("Y", "right")]),
        rule("Gen_HopKey", [fact("Fr", kh)], [], [fact("!ShKey", A, M, kh)], "setup",
             [("A", "initiator"), ("M", "agent")]),
        gen_session(),
        rule("Create", [fact("Fr", p), fact("!ShKey", A, E, kh), fact("!Cid", X, E, c)],
             [fact("Add", p, E, pair(c, senc(p, kh)), EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, pair(c, senc(p, kh)))], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, pair(c2, m)), fact("!ShKey", A, M, kh), fact("!Cid", X, M, c),
                      fact("!Cid", M, N, c2)],
             [fact("Add", p, M, pair(c, senc(m, kh)), pair(c2, m))],
             [fact("Build", p, M, pair(c, senc(m, kh)))], "construction", [("M", "hop")]),
        send_rule(),
        rule("Relay", [fact("Net", pair(c, senc(m, kh))), fact("!Cid", X, M, c), fact("!ShKey", A, M, kh),
                       fact("!Cid", M, N, c2)],
             [fact("Forward", M, pair(c, senc(m, kh)), pair(c2, m))], [fact("Net", pair(c2, m))], "forwarding"),
        rule("Receive", [fact("Net", pair(c, senc(m, kh))), fact("!Cid", X, E, c), fact("!ShKey", A, E, kh),
                         fact("!Session", A, E)],
             [fact("Forward", E, pair(c, senc(m, kh)), EMPTY)], [], "receive"),
    )
    return ProtocolSpec("tor_data", rules, properties=(PI,),
                        facts=(("Cid", 3, True),),
                        description="Tor data exchange: circuit-id indexed symmetric onion layers.")


def hornet() -> ProtocolSpec:
    """HORNET data packets: per-hop header and body under the hop's key."""
    kh = F("kh")
    final = pair(senc(pair(EMPTY, EMPTY), kh), senc(p, kh))
    pkt = lambda nxt, hh, bb: pair(senc(pair(nxt, hh), kh), senc(bb, kh))  # noqa: E731
    rules = (
        rule("Gen_HopKey", [fact("Fr", kh)], [], [fact("!ShKey", A, M, kh)], "setup",
             [("A", "initiator"), ("M", "agent")]),
        gen_session(),
        rule("Create", [fact("Fr", p), fact("!ShKey", A, E, kh)],
             [fact("Add", p, E, final, EMPTY), fact("StartBuild", A, p)],
             [fact("Build", p, E, final)], "construction", [("A", "initiator"), ("E", "final")]),
        rule("Wrap", [fact("Build", p, N, pair(hd, b)), fact("!ShKey", A, M, kh)],
             [fact("Add", p, M, pkt(N, hd, b), pair(hd, b))],
             [fact("Build", p, M, pkt(N, hd, b))], "construction", [("M", "hop")]),
        send_rule(),
        rule("Process", [fact("Net", pkt(N, hd, b)), fact("!ShKey", A, M, kh)],
             [fact("Forward", M, pkt(N, hd, b), pair(hd, b))], [fact("Net", pair(hd, b))], "forwarding"),
        rule("Receive", [fact("Net", pair(senc(pair(EMPTY, EMPTY), kh), senc(b, kh))), fact("!ShKey", A, E, kh),
                         fact("!Session", A, E)],
             [fact("Forward", E, pair(senc(pair(EMPTY, EMPTY), kh), senc(b, kh)), EMPTY)], [], "receive"),
    )
    return ProtocolSpec("hornet", rules, properties=(PI,),
                        description="HORNET: routing state carried in per-hop headers.")


def _setup_first(rules) -> tuple[Rule, ...]:
    order = {"setup": 0}
    return tuple(sorted(rules, key=lambda r: order.get(r.phase, 1)))


# -- Lightning -------------------------------------------------------------------

def _lightning(name: str, release: bool, chain: bool) -> ProtocolSpec:
    """Payment forwarding over HTLC channels.

    Lock: each channel message is senc(<h(x), onion>, channel key); the
    onion layer for hop M names the next hop.  ``release`` adds the
    response phase that carries the preimage x back hop by hop, gated by
    the linear ``Htlc`` state each forwarder keeps.  ``chain`` adds the
    fix: every layer carries an ephemeral signing key for its hop plus the
    next hop's verification key, and the release accumulates a signature
    chain that every hop checks and the initiator compares with the chain
    it precomputed.
    """
    ltk, pkE, pkM, hx, x, o, q = F("ltk"), V("pkE"), V("pkM"), V("hx"), F("x"), V("o"), V("q")
    kin, kout, e, eN, pke, c, y, s, r = F("kin"), F("kout"), F("e"), F("eN"), V("pke"), V("c"), V("y"), V("s"), V("r")
    out = V("out")
    rules = [
        gen_ltk(),
        gen_shkey(),
        rule("Gen_Invoice", [fact("Fr", x)], [], [fact("!Invoice", E, x), fact("!Hash", A, E, h(x))], "setup",
             [("A", "initiator"), ("E", "final")]),
    ]
    if chain:
        final = aenc(pair(EMPTY, pair(eN, p)), pkE)
        rules.append(rule(
            "Create", [fact("Fr", p), fact("Fr", eN), fact("!Hash", A, E, hx), fact("!Pk", E, pkE)],
            [fact("StartBuild", A, p)],
            [fact("Build", p, E, final, hx, EMPTY, pair(sign(hx, eN), hx), pk(eN))],
            "construction", [("A", "initiator"), ("E", "final")]))
        layer = aenc(pair(N, pair(e, pair(pke, o))), pkM)
        rules.append(rule(
            "Wrap", [fact("Build", p, N, o, hx, out, c, pke), fact("Fr", e), fact("!Pk", M, pkM),
                     fact("!ShKey", M, N, k)],
            [fact("Add", p, N, senc(pair(hx, o), k), out)],
            [fact("Build", p, M, layer, hx, senc(pair(hx, o), k), pair(sign(c, e), c), pk(e))],
            "construction", [("M", "hop")]))
        rules.append(rule(
            "Send", [fact("Build", p, N, o, hx, out, c, pke), fact("!ShKey", A, N, k)],
            [fact("Add", p, N, senc(pair(hx, o), k), out)],
            [fact("Net", senc(pair(hx, o), k)), fact("Wait", A, p, hx, k, c)], "construction"))
        inbound = senc(pair(hx, aenc(pair(N, pair(e, pair(pke, o))), pk(ltk))), kin)
        rules.append(rule(
            "Forward", [fact("Net", inbound), fact("!Ltk", M, ltk), fact("!ShKey", X, M, kin),
                        fact("!ShKey", M, N, kout)],
            [fact("Forward", M, inbound, senc(pair(hx, o), kout))],
            [fact("Net", senc(pair(hx, o), kout)), fact("Htlc", M, X, N, hx, kin, kout, e, pke)],
            "forwarding"))
        arrival = senc(pair(hx, aenc(pair(EMPTY, pair(e, q)), pk(ltk))), k)
        receipt = senc(pair(x, pair(sign(hx, e), hx)), k)
        rules.append(rule(
            "Receive", [fact("Net", arrival), fact("!Ltk", E, ltk), fact("!ShKey", X, E, k), fact("!Invoice", E, x)],
            [fact("Forward", E, arrival, EMPTY), fact("Equal", hx, h(x)), fact("Backward", E, EMPTY, receipt)],
            [fact("Net", receipt)], "receive"))
        back_in = senc(pair(y, pair(s, r)), kout)
        back_out = senc(pair(y, pair(sign(pair(s, r), e), pair(s, r))), kin)
        rules.append(rule(
            "Release", [fact("Net", back_in), fact("Htlc", M, X, N, hx, kin, kout, e, pke)],
            [fact("Backward", M, back_in, back_out), fact("Equal", h(y), hx),
             fact("Equal", verify(s, r, pke), TRUE)],
            [fact("Net", back_out)], "response"))
        rules.append(rule(
            "Settle", [fact("Net", senc(pair(y, c), k)), fact("Wait", A, p, hx, k, c)],
            [fact("Backward", A, senc(pair(y, c), k), EMPTY), fact("Complete", A, p), fact("Equal", h(y), hx)],
            [], "response"))
        facts = (("Build", 7, False), ("Wait", 5, False), ("Htlc", 8, False))
        props_ = (PI, PS)
    else:
        final = aenc(pair(EMPTY, p), pkE)
        rules.append(rule(
            "Create", [fact("Fr", p), fact("!Hash", A, E, hx), fact("!Pk", E, pkE)],
            [fact("StartBuild", A, p)],
            [fact("Build", p, E, final, hx, EMPTY)], "construction", [("A", "initiator"), ("E", "final")]))
        rules.append(rule(
            "Wrap", [fact("Build", p, N, o, hx, out), fact("!Pk", M, pkM), fact("!ShKey", M, N, k)],
            [fact("Add", p, N, senc(pair(hx, o), k), out)],
            [fact("Build", p, M, aenc(pair(N, o), pkM), hx, senc(pair(hx, o), k))],
            "construction", [("M", "hop")]))
        wait = [fact("Wait", A, p, hx, k)] if release else []
        rules.append(rule(
            "Send", [fact("Build", p, N, o, hx, out), fact("!ShKey", A, N, k)],
            [fact("Add", p, N, senc(pair(hx, o), k), out)],
            [fact("Net", senc(pair(hx, o), k))] + wait, "construction"))
        inbound = senc(pair(hx, aenc(pair(N, o), pk(ltk))), kin)
        htlc = [fact("Htlc", M, X, N, hx, kin, kout)] if release else []
        rules.append(rule(
            "Forward", [fact("Net", inbound), fact("!Ltk", M, ltk), fact("!ShKey", X, M, kin),
                        fact("!ShKey", M, N, kout)],
            [fact("Forward", M, inbound, senc(pair(hx, o), kout))],
            [fact("Net", senc(pair(hx, o), kout))] + htlc, "forwarding"))
        arrival = senc(pair(hx, aenc(pair(EMPTY, q), pk(ltk))), k)
        if release:
            rules.append(rule(
                "Receive", [fact("Net", arrival), fact("!Ltk", E, ltk), fact("!ShKey", X, E, k),
                            fact("!Invoice", E, x)],
                [fact("Forward", E, arrival, EMPTY), fact("Equal", hx, h(x)),
                 fact("Backward", E, EMPTY, senc(x, k))],
                [fact("Net", senc(x, k))], "receive"))
            rules.append(rule(
                "Release", [fact("Net", senc(y, kout)), fact("Htlc", M, X, N, hx, kin, kout)],
                [fact("Backward", M, senc(y, kout), senc(y, kin)), fact("Equal", h(y), hx)],
                [fact("Net", senc(y, kin))], "response"))
            rules.append(rule(
                "Settle", [fact("Net", senc(y, k)), fact("Wait", A, p, hx, k)],
                [fact("Backward", A, senc(y, k), EMPTY), fact("Complete", A, p), fact("Equal", h(y), hx)],
                [], "response"))
            facts = (("Build", 5, False), ("Wait", 4, False), ("Htlc", 6, False))
            props_ = (PI, PS)
        else:
            rules.append(rule(
                "Receive", [fact("Net", arrival), fact("!Ltk", E, ltk), fact("!ShKey", X, E, k),
                            fact("!Invoice", E, x)],
                [fact("Forward", E, arrival, EMPTY), fact("Equal", hx, h(x))], [], "receive"))
            facts = (("Build", 5, False),)
            props_ = (PI,)
    facts = facts + (("Invoice", 2, True), ("Hash", 3, True))
    return ProtocolSpec(name, tuple(rules), properties=props_, facts=facts,
                        description=_LN_DESCRIPTIONS[name])


_LN_DESCRIPTIONS = {
    "lightning_setup": "Lightning HTLC set-up: onion-routed lock messages over channel keys.",
    "lightning_unlock": "Lightning set-up plus hop-by-hop release of the preimage.",
    "lightning_sig": "Lightning with per-hop ephemeral keys and a verified return signature chain.",
}


def lightning_setup() -> ProtocolSpec:
    return _lightning("lightning_setup", release=False, chain=False)


def lightning_unlock() -> ProtocolSpec:
    return _lightning("lightning_unlock", release=True, chain=False)


def lightning_sig() -> ProtocolSpec:
    return _lightning("lightning_sig", release=True, chain=True)
