import csv
import io
import json
import subprocess
import sys

import pytest

from equitri import cli
from equitri.reports import EXIT_BUDGET, EXIT_FAILURE, EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_obstruction_table_has_a_row_per_prime(capsys):
    code, out, _ = run(capsys, "ff-obstruction", "--qmax", "30")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 10
    assert rows[0]["status"].startswith("unsupported")
    for r in rows[1:]:
        assert r["sqrt3_exists"] == r["triangle_exists"]


def test_census_csv(capsys):
    code, out, _ = run(capsys, "ff-census", "--q", "7", "--d", "2", "--seed", "4")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 7 and all(r["seed"] == "4" for r in rows)
    assert out.endswith("\r\n")


def test_sigma_hat_at_origin(capsys):
    code, out, _ = run(capsys, "sigma-hat", "--d", "3", "--xi", "0", "0", "0", "--eta", "0", "0", "0")
    assert code == EXIT_OK
    v = json.loads(out)["payload"]["value"]
    assert v["re"] == pytest.approx(1, abs=1e-12) and abs(v["im"]) < 1e-12


def test_sigma_hat_wrong_length_is_a_usage_error(capsys):
    code, _, err = run(capsys, "sigma-hat", "--d", "3", "--xi", "0", "0", "--eta", "0", "0", "0")
    assert code == EXIT_PARSE and "usage" in err


def test_missing_required_flag_writes_nothing(capsys, tmp_path):
    out = tmp_path / "x.json"
    code, _, err = run(capsys, "ff-census", "--q", "5", "--out", str(out))
    assert code == EXIT_PARSE
    assert "usage" in err
    assert not out.exists()


def test_profile_must_be_known(capsys):
    code, _, err = run(capsys, "accept", "--profile", "")
    assert code == EXIT_PARSE and "profile" in err


def test_refusal_exits_with_precondition_code(capsys):
    code, out, err = run(capsys, "sigma-hat", "--d", "3", "--xi", "40", "0", "0",
                         "--eta", "0", "40", "0", "--nodes", "64")
    assert code == EXIT_PRECONDITION
    rep = json.loads(out)
    assert rep["status"] == "refused" and "QuadratureRefusal" in rep["warnings"][0]
    assert "refused" in err


def test_budget_abort_code(capsys):
    code, out, _ = run(capsys, "ff-census", "--q", "13", "--d", "3", "--budget", "100")
    assert code == EXIT_BUDGET
    assert json.loads(out)["status"] == "budget_abort"


def test_missing_measure_file(capsys, tmp_path):
    code, _, _ = run(capsys, "tail-scan", "--measure", str(tmp_path / "none.bin"), "--R-list", "1", "2")
    assert code == EXIT_PRECONDITION


def test_measure_pipeline(capsys, tmp_path):
    m = tmp_path / "diag.bin"
    code, out, _ = run(capsys, "fractal-build", "--d", "2", "--keep", "0b1001", "--depth", "3",
                       "--n", "16", "--out", str(m))
    assert code == EXIT_OK and m.exists()
    assert json.loads(out)["payload"]["s_nominal"] == pytest.approx(1.0)

    res = tmp_path / "nu.json"
    code, _, _ = run(capsys, "triple-corr", "--measure", str(m), "--delta", "0.125",
                     "--rcut", "4", "--nt", "8", "--out", str(res))
    assert code == EXIT_OK
    nu = json.loads(res.read_text())["payload"]["nu"]
    assert len(nu["densities"]) == 8 and nu["error_estimate"] >= 0

    code, out, _ = run(capsys, "tail-scan", "--measure", str(m), "--R-list", "1", "2", "3", "4")
    assert code == EXIT_OK
    assert json.loads(out)["payload"]["meta"]["monotone"]

    code, out, _ = run(capsys, "triple-corr", "--measure", str(m), "--spatial", "--rcut", "4")
    assert code == EXIT_PARSE


def test_lemma_int_csv(capsys):
    code, out, _ = run(capsys, "lemma-int", "--d", "3", "--rho-grid", "8", "16",
                       "--samples", "20000", "--seed", "2")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["rho"]) for r in rows] == [8, 16]
    assert all(float(r["value"]) > 0 for r in rows)


def test_sp_verify_passes(capsys):
    code, out, _ = run(capsys, "sp-verify", "--d", "3", "--trials", "10", "--chart-points", "500")
    assert code == EXIT_OK
    assert json.loads(out)["payload"]["all_pass"]


def test_accept_single_criterion(capsys):
    code, out, _ = run(capsys, "accept", "--only", "9")
    assert code == EXIT_OK
    payload = json.loads(out)["payload"]
    assert payload["passed"] == payload["total"] == 1


def test_accept_failure_sets_exit_code(capsys, monkeypatch):
    from equitri import acceptance

    monkeypatch.setitem(acceptance.CRITERIA, 9,
                        lambda profile: acceptance.CriterionResult(9, "stub", False, {"forced": 1}))
    code, out, _ = run(capsys, "accept", "--only", "9")
    assert code == EXIT_FAILURE
    assert json.loads(out)["status"] == "criteria_failed"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "equitri", "sigma-hat", "--d", "2", "--xi", "1", "0",
                           "--eta", "0", "1", "--method", "exact"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert abs(json.loads(proc.stdout)["payload"]["value"]["im"]) < 1e-12
