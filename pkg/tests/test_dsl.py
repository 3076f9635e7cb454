import random
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathgauge.dsl import CODES, DslError, load_protocol, parse_protocol_dsl, render_protocol_dsl
from pathgauge.protocols import MODELS, instantiate_model

BASE = """\
protocol toy
description minimal forwarding protocol

[symbols]
mac/2

[properties]
path-integrity

[construction]
rule Create roles A:initiator, E:final
  [Fr(p:fresh)] --[Add(p, E:pub, p, ''), StartBuild(A:pub, p)]-> [Build(p, E, p)]
rule Send
  [Build(p:fresh, N:pub, m)] --> [Net(m)]

[receive]
rule Receive
  [Net(m)] --[Forward('E', m, '')]-> []
"""


def shipped(name):
    return resources.files("pathgauge.protocols").joinpath("files", f"{name}.pg").read_text("utf-8")


def codes(text):
    with pytest.raises(DslError) as info:
        parse_protocol_dsl(text)
    return info.value.codes


@pytest.mark.parametrize("name", sorted(MODELS))
def test_shipped_file_equals_constructor(name):
    assert parse_protocol_dsl(shipped(name)) == instantiate_model(name)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_render_round_trip(name):
    spec = instantiate_model(name)
    text = render_protocol_dsl(spec)
    again = parse_protocol_dsl(text)
    assert again == spec
    assert render_protocol_dsl(again) == text


def test_shipped_files_are_current():
    for name in MODELS:
        body = "\n".join(line for line in shipped(name).splitlines() if not line.startswith("#"))
        assert body.strip() == render_protocol_dsl(instantiate_model(name)).strip(), name


def test_minimal_protocol_parses():
    spec = parse_protocol_dsl(BASE)
    assert spec.name == "toy"
    assert spec.theory.symbols["mac"] == 2  # free symbol, no equations needed
    assert [r.name for r in spec.rules] == ["Create", "Send", "Receive"]
    assert spec.rule("Create").phase == "construction"


def test_load_protocol_from_path(tmp_path):
    f = tmp_path / "toy.pg"
    f.write_text(BASE)
    assert load_protocol(str(f)).name == "toy"
    assert load_protocol("chaum") is instantiate_model("chaum")


MUTATIONS = {
    "E-UNBOUND": ("[Net(m)] --[Forward('E', m, '')]-> []", "[Net(m)] --[Forward('E', m, z)]-> []"),
    "E-UNKNOWN-SYMBOL": ("[Net(m)] --[", "[Net(nosuch(m))] --["),
    "E-ARITY": ("[Net(m)] --[Forward('E', m, '')]-> []", "[Net(m)] --[Forward('E', m)]-> []"),
    "E-SORT": ("[Build(p:fresh, N:pub, m)] --> [Net(m)]", "[Build(p:fresh, N:pub, m), Net(p:pub)] --> [Net(m)]"),
    "E-SECTION": ("[receive]", "[recieve]"),
    "E-PROPERTY": ("path-integrity\n", "path-honesty\n"),
    "E-ROLE": ("roles A:initiator", "roles A:captain"),
    "E-DUPLICATE": ("rule Send", "rule Create"),
    "E-SYNTAX": ("[Net(m)] --[", "[Net(m) --["),
    "E-PERSISTENCE": ("[Net(m)] --[Forward", "[!Net(m)] --[Forward"),
}


@pytest.mark.parametrize("code", sorted(MUTATIONS))
def test_each_error_has_its_own_code(code):
    old, new = MUTATIONS[code]
    assert old in BASE
    assert code in codes(BASE.replace(old, new, 1))


def test_non_convergent_equation():
    text = BASE.replace("mac/2\n", "mac/2\nf/1\ng/1\n\n[equations]\nf(x) = g(x)\n")
    assert codes(text) == ["E-CONVERGENCE"]


def test_subterm_equation_accepted():
    text = BASE.replace("mac/2\n", "mac/2\nopen/2\nbox/2\n\n[equations]\nopen(box(x, k), k) = x\n")
    assert "open" in parse_protocol_dsl(text).theory.destructors


def test_diagnostic_positions():
    text = BASE.replace("[Net(m)] --[", "[Net(nosuch(m))] --[")
    with pytest.raises(DslError) as info:
        parse_protocol_dsl(text)
    (d,) = info.value.diagnostics
    line = text.splitlines()[d.line - 1]
    assert line[d.column - 1:].startswith("nosuch")


def test_several_errors_reported_together():
    text = BASE.replace("roles A:initiator", "roles A:captain").replace("[receive]", "[recieve]")
    assert {"E-ROLE", "E-SECTION"} <= set(codes(text))


def test_codes_are_documented():
    assert set(MUTATIONS) | {"E-CONVERGENCE"} <= set(CODES)


def test_comments_and_blank_lines_ignored():
    text = "# heading\n\n" + BASE.replace("[symbols]", "[symbols]  # functions")
    assert parse_protocol_dsl(text) == parse_protocol_dsl(BASE)


# -- fuzzing ---------------------------------------------------------------------

ALPHABET = "[]()<>,:!'~-#=/\n abcxyzEMp01_"


def mutate(rng, text):
    chars = list(text)
    for _ in range(rng.randint(1, 6)):
        op = rng.random()
        i = rng.randrange(len(chars) + 1)
        if op < 0.35 and chars:
            del chars[min(i, len(chars) - 1)]
        elif op < 0.7:
            chars.insert(i, rng.choice(ALPHABET))
        elif op < 0.85 and chars:
            j = rng.randrange(len(chars))
            chars[min(i, len(chars) - 1)], chars[j] = chars[j], chars[min(i, len(chars) - 1)]
        else:
            lines = "".join(chars).splitlines(keepends=True)
            rng.shuffle(lines)
            chars = list("".join(lines))
    return "".join(chars)


def assert_graceful(text):
    try:
        parse_protocol_dsl(text)
    except DslError as exc:
        assert exc.diagnostics
        n = text.count("\n") + 1
        for d in exc.diagnostics:
            assert d.code in CODES
            assert 1 <= d.line <= n + 1 and d.column >= 1


def test_fuzz_ten_thousand_mutants():
    rng = random.Random(99)
    sources = [BASE] + [shipped(n) for n in sorted(MODELS)]
    for _ in range(10_000):
        assert_graceful(mutate(rng, rng.choice(sources)))


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=ALPHABET, max_size=200))
def test_fuzz_arbitrary_text(text):
    assert_graceful(text)
