import json
import logging

import pytest
from click.testing import CliRunner

from src.main.cli import cli
from src.main.experiments import PIPELINES


@pytest.fixture(autouse=True)
def detach_cli_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if handler.get_name() == "mfg-lab":
            root.removeHandler(handler)


def _run(*args):
    return CliRunner().invoke(cli, ["run", *map(str, args)])


def _report(out):
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


def test_invalid_json_exits_with_config_error(tmp_path):
    config = tmp_path / "broken.json"
    config.write_text("{ not json", encoding="utf-8")
    out = tmp_path / "out"
    result = _run(config, "--out", out)
    assert result.exit_code == 2, result.output
    assert "config error" in result.stderr
    assert not out.exists()


def test_missing_config_file_exits_with_config_error(tmp_path):
    out = tmp_path / "out"
    result = _run(tmp_path / "nowhere.json", "--out", out)
    assert result.exit_code == 2
    assert not out.exists()


def test_schema_violation_exits_with_config_error(write_config, tmp_path):
    config = write_config({"sim": {"dt": -1.0}})
    result = _run(config, "--out", tmp_path / "out")
    assert result.exit_code == 2


def test_blowup_scan_writes_scan_table(write_config, tmp_path):
    config = write_config({"kind": "blowup-scan", "model": {"name": "blowup_nonmonotone"},
                           "scan": {"horizons": [0.2]}})
    out = tmp_path / "scan"
    result = _run(config, "--out", out)
    assert result.exit_code == 0, result.output
    lines = (out / "scan.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "horizon,status,iterations,blow_up_time,blow_up_variable,max_lipschitz"
    assert len(lines) == 2
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["schema_version"] == 1
    assert report["experiment"]["kind"] == "blowup-scan"
    assert report["scan"]["blow_up_time"] is None


def test_solve_writes_all_artifacts(write_config, tmp_path):
    out = tmp_path / "solve"
    result = _run(write_config(), "--out", out, "--seed", 3)
    assert result.exit_code in (0, 1), result.output
    for name in ("report.json", "summary.txt", "field.json", "audit.csv"):
        assert (out / name).exists(), name
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "seed: 3" in summary
    assert json.loads((out / "report.json").read_text(encoding="utf-8"))["config"]["seed"] == 3


def test_report_bytes_do_not_depend_on_worker_count(write_config, tmp_path):
    config = write_config()
    outputs = []
    for workers in (1, 2, 8):
        out = tmp_path / f"w{workers}"
        result = _run(config, "--out", out, "--override", f"workers={workers}")
        assert result.exit_code in (0, 1), result.output
        outputs.append((out / "report.json").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_kind_flag_overrides_file(write_config, tmp_path):
    config = write_config({"kind": "solve", "model": {"name": "blowup_nonmonotone"},
                           "scan": {"horizons": [0.2]}})
    out = tmp_path / "flagged"
    result = _run(config, "--out", out, "--kind", "blowup-scan", "--json-logs", "--log-level", "info")
    assert result.exit_code == 0, result.output
    assert (out / "scan.csv").exists()


def test_oracle_compare_records_the_refined_error(write_config, tmp_path):
    out = tmp_path / "oracle"
    result = _run(write_config({"kind": "oracle-compare", "oracle": {"refine": True}}), "--out", out)
    assert result.exit_code in (0, 1), result.output
    report = _report(out)
    assert "error" not in report
    oracle = report["oracle"]
    assert isinstance(oracle["refinement_improves"], bool)
    assert oracle["refinement_improves"] == (oracle["refined_relative_error"] < oracle["max_relative_error"])
    header = (out / "audit.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header == "scene,t,x,theta,mean_mu,w,oracle"
    assert (out / "field.json").exists()


def test_verify_monotone_writes_deficit_tables(write_config, tmp_path):
    out = tmp_path / "verify"
    config = write_config({"kind": "verify-monotone", "model": {"name": "torus_monotone"},
                           "probes": {"pairs": 2}})
    result = _run(config, "--out", out)
    assert result.exit_code in (0, 1), result.output
    report = _report(out)
    assert "error" not in report
    assert {"zbeta", "hypotheses", "inequality"} <= set(report)
    assert len(report["inequality"]["pairs"]) == 2
    for name in ("probes.csv", "witnesses.csv"):
        header = (out / name).read_text(encoding="utf-8").splitlines()[0]
        assert header == "probe,audit,label,seed,deficit,std_error,threshold,passed,inputs"


def test_dpp_audit_writes_residual_table(write_config, tmp_path):
    out = tmp_path / "dpp"
    config = write_config({"kind": "dpp-audit", "dpp": {"s": 0.1, "gradient_points": 2}})
    result = _run(config, "--out", out)
    assert result.exit_code in (0, 1), result.output
    report = _report(out)
    assert set(report["dpp"]) == {"dpp", "martingale", "gradient"}
    lines = (out / "dpp.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "check,residual,std_error"
    assert [line.split(",")[0] for line in lines[1:]] == ["dpp", "martingale", "gradient"]


def test_transform_check_writes_residuals_and_exact_identities(write_config, tmp_path):
    out = tmp_path / "transform"
    result = _run(write_config({"kind": "transform-check", "transform": {"n_probes": 4}}), "--out", out)
    assert result.exit_code in (0, 1), result.output
    transform = _report(out)["transform"]
    assert "blow_up" not in transform["statuses"].values()
    assert transform["relative"] is not None
    assert all(value <= 1e-12 for value in transform["identities"].values())
    assert (out / "transform.csv").read_text(encoding="utf-8").startswith("t,residual\n")


def test_aborted_pipeline_still_writes_a_report(write_config, tmp_path, monkeypatch):
    def explode(cfg):
        raise RuntimeError("solver exploded")

    monkeypatch.setitem(PIPELINES, "solve", explode)
    out = tmp_path / "aborted"
    result = _run(write_config(), "--out", out)
    assert result.exit_code == 1
    report = _report(out)
    assert report["error"] == {"type": "RuntimeError", "message": "solver exploded"}
    assert report["experiment"]["model"]["name"] == "lq"
    assert "aborted: RuntimeError" in (out / "summary.txt").read_text(encoding="utf-8")
