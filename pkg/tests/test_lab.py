import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scz_lab.errors import ConfigError
from scz_lab.lab import Record, Report, list_scenarios, load_config, run_scenario, validate_config
from scz_lab.lab.cli import main
from scz_lab.lab.report import CSV_COLUMNS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_list_contents():
    names = [n for n, _ in list_scenarios()]
    assert "thm36_maximal_characterization" in names
    assert "riesz_constV_certification" in names
    assert len(names) >= 10
    assert len(set(names)) == len(names)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    assert load_config(path)["scenario"] == path.stem


def test_single_node_domain_rejected():
    with pytest.raises(ConfigError) as info:
        validate_config({"scenario": "covering_overlap", "domain": {"d": 2, "L": 4.0, "n": 1}})
    assert info.value.pointer == "/domain/n"


def test_unknown_scenario_and_key():
    with pytest.raises(ConfigError) as info:
        validate_config({"scenario": "nope"})
    assert info.value.pointer == "/scenario"
    with pytest.raises(ConfigError):
        validate_config({"scenario": "covering_overlap", "colour": "blue"})


def test_broken_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{scenario: ")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_rerun_is_deterministic():
    cfg = {"scenario": "def21_validation", "seed": 3, "samples": 500}
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.pass_vector() == b.pass_vector()
    assert [r.constants for r in a.records] == [r.constants for r in b.records]


def test_parallel_matches_sequential():
    cfg = {"scenario": "rho_mu_construction", "seed": 1}
    seq, par = run_scenario(cfg), run_scenario(cfg, jobs=3)
    assert seq.pass_vector() == par.pass_vector()
    assert [r.constants for r in seq.records] == [r.constants for r in par.records]


def test_report_files(tmp_path):
    report = run_scenario({"scenario": "covering_overlap"}, out=tmp_path)
    data = json.loads((tmp_path / "covering_overlap.json").read_text())
    assert data["passed"] is True and data["plot_data"] == "covering_overlap.csv"
    with open(tmp_path / "covering_overlap.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == CSV_COLUMNS
    assert {r["series"] for r in rows} == {"overlap"}
    assert Report.from_json((tmp_path / "covering_overlap.json").read_text()).to_dict() == report.to_dict()


def test_tolerance_scale_tightens_checks():
    cfg = {"scenario": "agmon_lemmas", "samples": 30}
    assert run_scenario(cfg).passed
    tight = run_scenario(cfg, tolerance_scale=1e-3)
    assert not tight.records[0].passed


def test_check_errors_become_failed_records():
    # e^|x| on a box too small for the B(0, 2l) balls
    report = run_scenario({"scenario": "prop31_counterexample", "domain": {"d": 1, "L": 8.0, "n": 401},
                           "family": {"size": 50}})
    errs = [r for r in report.records if r.error]
    assert errs and all(not r.passed and "DomainTooSmall" in r.error for r in errs)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
values = st.one_of(finite, st.integers(-10**6, 10**6), st.booleans(), st.text(max_size=8), st.none())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.text(min_size=1, max_size=10), st.booleans(),
                          st.dictionaries(st.text(max_size=6), values, max_size=4),
                          st.lists(st.tuples(finite, finite), max_size=4)), max_size=4))
def test_report_round_trip(rows):
    recs = [Record(name, "anchor", ok, consts, {}, 0.5, None, {"s": [list(p) for p in pts]})
            for name, ok, consts, pts in rows]
    report = Report("demo", {"scenario": "demo"}, recs)
    back = Report.from_json(report.to_json())
    assert back.to_dict() == report.to_dict()


def test_non_finite_constants_survive_json():
    rep = Report("demo", {}, [Record("a", "b", False, {"C": math.inf, "x": math.nan})])
    back = Report.from_json(rep.to_json())
    assert back.records[0].constants == {"C": "inf", "x": "nan"}


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "riesz_constV_certification" in out


def test_cli_validate_and_run(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "rho_mu_construction", "seed": 0}))
    assert main(["validate", str(cfg)]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "out"), "--jobs", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3
    assert (tmp_path / "out" / "rho_mu_construction.csv").exists()


def test_cli_config_error_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "covering_overlap", "domain": {"n": 1}}))
    assert main(["validate", str(cfg)]) == 2
    assert main(["run", str(cfg)]) == 2


def test_cli_failing_check_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scenario": "rho_mu_construction", "tolerances": {"radius": 0}}))
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 1


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "scz_lab.lab.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "def21_validation" in proc.stdout


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_scenarios_pass(path):
    report = run_scenario(load_config(path))
    failed = [(r.name, r.error, r.constants) for r in report.records if not r.passed]
    assert report.passed, failed
