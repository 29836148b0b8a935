import json

import pytest
from click.testing import CliRunner

from strictify import harness
from strictify.cli import main
from strictify.exact_algebra import format_scalar
from strictify.generators import generate_diagram
from strictify.lattice_ym import Perturbation
from strictify.site import Obj

from conftest import SMALL_H


def small_lattice_scenario(**extra):
    h = Perturbation.from_density(SMALL_H)
    entries = {f"{t},{x}": [format_scalar(a) for a in hv] for (t, x), hv in h.entries.items()}
    data = {"mode": "lattice", "lattice": {"T": 16, "X": 8, "h": {"rectangle": [[8, 8], [4, 5]], "entries": entries}}}
    data.update(extra)
    return json.dumps(data, indent=1)


def test_defaults():
    s = harness.parse_scenario("")
    assert s == harness.Scenario()
    assert harness.parse_scenario("{}") == s


@pytest.mark.parametrize("text, line, column, fragment", [
    ('{\n  "seed": 1,\n  "seeds": 0\n}', 3, 3, "seeds: must be positive"),
    ('{\n  "mode": "sideways"\n}', 2, 3, "mode: expected one of"),
    ('{"seed": 1,\n "bogus": 2}', 2, 2, "unknown field"),
    ('{"seed": 1,,}', 1, 12, "Expecting property name"),
    ('{\n "checks": ["nope"]}', 2, 2, "unknown check"),
    ('{"lattice": {\n  "h": {"rectangle": [[3, 1], [0, 0]]}}}', 2, 9, "rectangle"),
    ('{"lattice": {"h": {"rectangle": [[8, 8], [4, 4]],\n "entries": {"8,4": ["1/2", "0", "0"]}}}}', 2, 2,
     "not rational"),
    ('{"lattice": {"h": {"entries": {"1,1": ["0", "0", "0"]}}}}', 1, 20, "outside the rectangle"),
    ('{"lattice": {"T": 4}}', 1, 14, "T, X >= 8"),
    ('[1, 2]', 1, 1, "JSON object"),
])
def test_config_errors_name_the_position(text, line, column, fragment):
    with pytest.raises(harness.ConfigError) as info:
        harness.parse_scenario(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert fragment in str(info.value)


def test_lattice_entries_parse():
    s = harness.parse_scenario(small_lattice_scenario())
    assert s.lattice.perturbation() == Perturbation.from_density(SMALL_H)
    round_trip = harness.parse_scenario(json.dumps(harness.scenario_to_dict(s)))
    assert round_trip == s


def test_select_checks():
    s = harness.Scenario()
    assert harness.select_checks(s, ["negative"]) == ["corrupted.equivalence", "corrupted.theta", "corrupted.xi"]
    assert "lattice.stress" in harness.select_checks(s)
    assert all(n.startswith(("structure", "counit", "unit", "equivalence", "zigzag", "poisson", "ccr", "control"))
               for n in harness.select_checks(harness.Scenario(mode="abstract")))
    with pytest.raises(harness.ConfigError):
        harness.select_checks(s, ["missing"])


def test_empty_check_set_passes():
    report = harness.run(harness.Scenario(checks=()), b"{}")
    assert report["verdict"] == "pass" and report["checks"] == []
    assert harness.exit_code(report) == 0


QUICK = json.dumps({"seeds": 2, "quasi_isos": 3, "ccr_samples": 10, "window": 2, "zigzag_window": 1,
                    "tau_window": 1, "p_max": 2, "checks": ["structure.generators", "equivalence.identities",
                                                            "control.corrupted_equivalence"]})


def test_report_is_deterministic():
    s = harness.parse_scenario(QUICK)
    a = harness.run(s, QUICK.encode(), jobs=1)
    b = harness.run(s, QUICK.encode(), jobs=2)
    assert a["report_sha256"] == b["report_sha256"]
    strip = lambda r: {k: v for k, v in r.items() if k != "timing"}
    assert harness.canonical_json(strip(a)) == harness.canonical_json(strip(b))
    assert a["schema"] == "strictify.report/1"
    assert a["verdict"] == "pass"


def test_negative_suite_fails_with_witnesses():
    report = harness.run(harness.Scenario(), b"", only=["negative"])
    assert report["verdict"] == "fail"
    assert all(not c["passed"] and c["witness"] for c in report["checks"])
    assert harness.exit_code(report) == 1


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv(harness.JOBS_ENV, "3")
    assert harness.default_jobs() == 3
    monkeypatch.setenv(harness.JOBS_ENV, "zero")
    with pytest.raises(harness.ConfigError):
        harness.default_jobs()


def test_cli_verify(tmp_path):
    scenario = tmp_path / "s.json"
    scenario.write_text(QUICK)
    report = tmp_path / "r.json"
    runner = CliRunner()
    result = runner.invoke(main, ["verify", "--scenario", str(scenario), "--report", str(report)])
    assert result.exit_code == 0, result.output
    assert "PASS  structure.generators" in result.output
    assert json.loads(report.read_text())["verdict"] == "pass"
    result = runner.invoke(main, ["verify", "--scenario", str(scenario), "--report", str(report),
                                  "--only", "corrupted.theta"])
    assert result.exit_code == 1
    assert "FAIL  corrupted.theta" in result.output


def test_cli_config_errors(tmp_path):
    runner = CliRunner()
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seeds": -1\n}')
    result = runner.invoke(main, ["verify", "--scenario", str(bad), "--report", str(tmp_path / "r.json")])
    assert result.exit_code == 2
    assert "line 2, column 3" in result.output
    result = runner.invoke(main, ["verify", "--scenario", str(tmp_path / "missing.json"),
                                  "--report", str(tmp_path / "r.json")])
    assert result.exit_code == 2
    result = runner.invoke(main, ["verify", "--report", str(tmp_path / "r.json"), "--only", "nothing"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["dump", "--id", "nothing", "--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_dump_is_stable_and_round_trips(tmp_path):
    runner = CliRunner()
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert runner.invoke(main, ["dump", "--id", "rce_lin", "--out", str(p), "--seed", "3"]).exit_code == 0
    assert paths[0].read_text() == paths[1].read_text()
    m = harness.parse_matrix_artifact(paths[0].read_text())
    assert harness.SparseMatrix.parse(m.dump()) == m


def test_identity_rce_lin_is_a_partial_permutation():
    s = harness.Scenario(window=2)
    text = harness.dump_artifact("identity_rce_lin", s)
    m = harness.parse_matrix_artifact(text).to_dense()
    data = json.loads(text)["data"]
    for j in range(m.ncols()):
        col = [m[i, j] for i in range(m.nrows())]
        assert sorted(col)[-1] in (0, 1) and sum(col) in (0, 1)
    # every basis element moves up one level
    for j, label in enumerate(data["cols"]):
        rows = [i for i in range(m.nrows()) if m[i, j]]
        for i in rows:
            level_src = int(label[1:].split(",")[0])
            level_tgt = int(data["rows"][i][1:].split(",")[0])
            assert level_tgt == level_src + 1


def test_gen(tmp_path):
    out = tmp_path / "d.json"
    assert CliRunner().invoke(main, ["gen", "--seed", "5", "--out", str(out)]).exit_code == 0
    data = json.loads(out.read_text())
    assert data["seed"] == 5
    D = generate_diagram(5).diagram
    assert set(data["data"]["objects"]) == {"M", "M+", "Mh", "M-"}
    assert data["data"]["objects"]["M"] == json.loads(json.dumps(D[Obj.M].to_dict()))
    assert out.read_text() == harness.generated_diagram(5)


def test_small_lattice_suite(tmp_path):
    text = small_lattice_scenario()
    report = harness.run(harness.parse_scenario(text), text.encode())
    failed = [(c["name"], c["witness"]) for c in report["checks"] if not c["passed"]]
    assert failed == []
    stress = next(c for c in report["checks"] if c["name"] == "lattice.stress")["details"]
    assert stress["polarized_stress"] == stress["rce_slope"] == stress["field_strength"]
    assert stress["ansatz"] == "chi-local"
