import io
import json

import pytest

from conftest import fixed_result
from pathgauge.cli import main
from pathgauge.explorer import Bounds, Scenario
from pathgauge.protocols import instantiate_model
from pathgauge.report import SCHEMA, AnalysisRequest, emit_report, run_analysis
from pathgauge.terms import pub


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


class TestRequest:
    def test_unknown_property(self):
        with pytest.raises(ValueError):
            AnalysisRequest(instantiate_model("chaum"), "nonsense")

    def test_undeclared_property(self):
        with pytest.raises(ValueError, match="does not declare"):
            AnalysisRequest(instantiate_model("chaum"), "path-symmetry")


class TestReport:
    def test_attack_json(self):
        r = fixed_result("firewall")
        d = json.loads(emit_report(r, "json"))
        assert d["schema"] == SCHEMA and d["bounded"] is True
        assert d["verdict"] == "AttackFound" and d["replay_verified"] is True
        assert d["violation"]["clause"] == r.violation.clause
        assert d["victims"] == ["'M2'"]
        assert d["rule_applications"] == sum(st["counted"] for st in d["trace"])
        assert "elapsed_seconds" not in d
        first = d["trace"][0]
        assert set(first) == {"time", "rule", "counted", "substitution", "events", "learned"}

    def test_json_trace_replays(self):
        from pathgauge.explorer import replay

        r = fixed_result("wormhole")
        d = json.loads(emit_report(r, "json"))
        steps = [(st["rule"], [tuple(p) for p in st["substitution"]]) for st in d["trace"]]
        _, again, _ = replay(instantiate_model("lightning_unlock"), steps)
        assert [str(e) for st in again.steps for e in st.events] == \
            [e for st in d["trace"] for e in st["events"]]

    def test_timing_is_opt_in(self):
        r = fixed_result("firewall")
        assert "elapsed_seconds" in json.loads(emit_report(r, "json", timing=True))

    def test_wormhole_narrative_names_victims(self):
        text = emit_report(fixed_result("wormhole"), "text")
        assert "victims: M2" in text
        header = next(line for line in text.splitlines() if line.strip().startswith("t "))
        for col in ("A", "M1*", "M2", "M3*", "D", "adversary"):
            assert col in header.split()
        assert "injects" in text and "intercepts" in text
        assert "replay verified" in text

    def test_no_attack_json(self):
        spec = instantiate_model("chaum")
        sc = Scenario((pub("A"), pub("M1"), pub("E")))
        d = json.loads(emit_report(run_analysis(AnalysisRequest(spec, "path-integrity", scenario=sc)), "json"))
        assert d["verdict"] == "NoAttackWithinBound"
        assert d["bounded"] is True
        assert d["bounds"] == Bounds().to_dict()
        assert d["scenarios_explored"] == ["A-M1-E"]
        assert "trace" not in d

    def test_no_attack_text_disclaims(self):
        spec = instantiate_model("chaum")
        sc = Scenario((pub("A"), pub("E")))
        text = emit_report(run_analysis(AnalysisRequest(spec, "path-integrity", scenario=sc)), "text")
        assert "bounded" in text and "nothing beyond the bounds" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report(fixed_result("firewall"), "xml")


class TestCli:
    def test_mbtls_attack_exit_1(self):
        code, out, _ = run("check", "--protocol", "mbtls", "--property", "path-integrity")
        assert code == 1
        assert json.loads(out)["verdict"] == "AttackFound"

    def test_chaum_exit_0(self):
        code, out, _ = run("check", "--protocol", "chaum", "--property", "path-integrity")
        assert code == 0
        d = json.loads(out)
        assert d["verdict"] == "NoAttackWithinBound" and d["bounded"] is True

    def test_lightning_sig_symmetry_exit_0(self):
        code, out, _ = run("check", "--protocol", "lightning_sig", "--property", "path-symmetry")
        assert code == 0

    def test_byte_identical_json(self):
        args = ("check", "--protocol", "mbtls", "--property", "path-integrity", "--seed", "3")
        assert run(*args)[1] == run(*args)[1]

    def test_seed_is_not_semantic(self):
        a = run("check", "--protocol", "mctls", "--property", "path-integrity", "--seed", "1")[1]
        b = run("check", "--protocol", "mctls", "--property", "path-integrity", "--seed", "2")[1]
        assert a == b

    def test_bound_flags_are_echoed(self):
        code, out, _ = run("check", "--protocol", "chaum", "--property", "path-integrity", "--max-steps", "12",
                           "--path-length", "3", "--max-corrupt", "1", "--recombination-depth", "1",
                           "--max-agents", "4")
        b = json.loads(out)["bounds"]
        assert code == 0
        assert (b["max_steps"], b["path_length"], b["max_corrupt"], b["recombination_depth"], b["max_agents"]) \
            == (12, [2, 3], 1, 1, 4)

    def test_no_minimize(self):
        code, out, _ = run("check", "--protocol", "mctls", "--property", "path-integrity", "--no-minimize")
        assert code == 1 and json.loads(out)["minimized"] is False

    def test_fixed_scenario_text(self):
        code, out, _ = run("check", "--protocol", "lightning_unlock", "--property", "path-symmetry",
                           "--path", "A,M1,M2,M3,D", "--corrupt", "M1,M3", "--format", "text")
        assert code == 1 and "victims: M2" in out

    def test_scenario_file(self, tmp_path):
        f = tmp_path / "sc.json"
        f.write_text(json.dumps({"path": ["A", "M1", "M2", "M3", "E"], "corrupt": ["M1", "M3"]}))
        code, out, _ = run("check", "--protocol", "mbtls", "--property", "path-integrity", "--scenario", str(f))
        assert code == 1 and json.loads(out)["scenario"]["corrupt"] == ["'M1'", "'M3'"]

    def test_output_file(self, tmp_path):
        f = tmp_path / "r.json"
        code, out, _ = run("check", "--protocol", "chaum", "--property", "path-integrity", "-o", str(f))
        assert code == 0 and out == "" and json.loads(f.read_text())["protocol"] == "chaum"

    def test_dsl_file(self, tmp_path):
        code, text, _ = run("render", "mbtls")
        f = tmp_path / "mbtls.pg"
        f.write_text(text)
        code, out, _ = run("check", "--protocol", str(f), "--property", "path-integrity")
        assert code == 1

    @pytest.mark.parametrize("argv,needle", [
        (("check", "--protocol", "nosuch", "--property", "path-integrity"), "neither"),
        (("check", "--protocol", "chaum", "--property", "path-symmetry"), "does not declare"),
        (("check", "--protocol", "chaum", "--property", "path-integrity", "--corrupt", "M1"), "fixed path"),
        (("check", "--protocol", "chaum", "--property", "path-integrity", "--path", "A,A"), "bad scenario"),
        (("check", "--protocol", "chaum", "--property", "path-integrity", "--path-length", "1"), "path"),
        (("check", "--protocol", "chaum", "--property", "path-integrity", "--scenario", "/nonexistent"), "cannot read"),
    ])
    def test_usage_errors_exit_2(self, argv, needle):
        code, out, err = run(*argv)
        assert code == 2 and out == "" and needle in err

    def test_argparse_errors_exit_2(self):
        assert run("check", "--protocol", "chaum")[0] == 2
        assert run("check", "--protocol", "chaum", "--property", "bogus")[0] == 2
        assert run()[0] == 2

    def test_parse_errors_exit_2_with_positions(self, tmp_path):
        f = tmp_path / "bad.pg"
        f.write_text("protocol bad\n[construction]\nrule R roles A:initiator\n  [] --> [Net(nosuch(A))]\n")
        code, _, err = run("check", "--protocol", str(f), "--property", "path-integrity")
        assert code == 2
        assert f"{f}:4:" in err and "E-UNKNOWN-SYMBOL" in err

    def test_list(self):
        code, out, _ = run("list")
        assert code == 0 and len(out.splitlines()) == 11 and "lightning_sig" in out

    def test_audit(self):
        code, out, _ = run("audit", "hornet")
        assert code == 0 and "agree" in out

    def test_render_round_trips(self):
        from pathgauge.dsl import parse_protocol_dsl

        code, out, _ = run("render", "tor_data")
        assert code == 0 and parse_protocol_dsl(out) == instantiate_model("tor_data")
