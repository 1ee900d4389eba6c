import csv
import json

import pytest

from renormvol import cli
from renormvol.cli import (
    DEFAULTS, EXIT_FAILURE, EXIT_OK, ScenarioError, main, set_path, trend_summary, validate_scenario,
)

SCHOTTKY = {
    "name": "schottky_small",
    "group": {"kind": "schottky", "circles": [[1.5, 0, 0.6], [-1.5, 0, 0.6], [0, 1.5, 0.6], [0, -1.5, 0.6]],
              "pairings": [[0, 1], [2, 3]], "twists": [3.141592653589793, 1.5707963267948966]},
    "depth": 3,
    "metrics": {"epstein": False},
    "suite": "theorems",
}


def _write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _load_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- validation ---------------------------------------------------------------

@pytest.mark.parametrize("patch,field", [
    ({"depth": "four"}, "depth"),
    ({"dpeth": 4}, "dpeth"),
    ({"depth": 12}, "depth"),
    ({"suite": "everything"}, "suite"),
    ({"group": {"kind": "bent"}}, "group.angle"),
    ({"group": {"kind": "schottky", "circles": [[1, 0], [-2, 0, 1]], "pairings": [[0, 1]]}}, "group.circles.0"),
    ({"metrics": {"epstein": "yes"}}, "metrics.epstein"),
    ({"r_values": [0.0]}, "r_values.0"),
])
def test_malformed_scenarios_name_the_field(patch, field):
    doc = {**SCHOTTKY, **patch}
    with pytest.raises(ScenarioError) as exc:
        validate_scenario(doc)
    assert exc.value.field == field


def test_missing_required_field():
    with pytest.raises(ScenarioError) as exc:
        validate_scenario({"name": "x"})
    assert exc.value.field == "group"


def test_defaults_are_filled():
    doc = validate_scenario({"name": "x", "group": {"kind": "fuchsian_g2"}, "metrics": {"epstein": False}})
    assert doc["depth"] == DEFAULTS["depth"] and doc["metrics"]["poincare_grid"] == 161
    assert doc["metrics"]["epstein"] is False and doc["output"].endswith("x")


def test_run_rejects_malformed_file(tmp_path, capsys):
    path = _write(tmp_path, {**SCHOTTKY, "depth": "four"})
    assert main(["run", path]) == EXIT_FAILURE
    err = json.loads(capsys.readouterr().out)["error"]
    assert err["field"] == "depth" and err["type"] == "ScenarioError"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == EXIT_FAILURE


def test_invalid_group_geometry_is_reported(tmp_path, capsys):
    doc = {**SCHOTTKY, "group": {**SCHOTTKY["group"], "circles": [[0, 0, 1], [1.5, 0, 1], [6, 0, 0.5],
                                                                [-6, 0, 0.5]]}}
    assert main(["run", _write(tmp_path, doc), "--output", str(tmp_path / "o")]) == EXIT_FAILURE
    assert "overlap" in json.loads(capsys.readouterr().out)["error"]["message"]


def test_set_path():
    doc = {"group": {"circles": [[0, 0, 1], [1, 1, 1]]}, "depth": 3}
    set_path(doc, "group.circles.*.2", 0.5)
    assert [c[2] for c in doc["group"]["circles"]] == [0.5, 0.5]
    set_path(doc, "depth", 4)
    assert doc["depth"] == 4


def test_trend_summary():
    rows = [{"status": "pass", "gap_lower": 5, "log_inv_eta": 0.1, "inv_nu": 0.3},
            {"status": "pass", "gap_lower": 7, "log_inv_eta": 0.5, "inv_nu": 0.4},
            {"status": "error", "gap_lower": "", "log_inv_eta": "", "inv_nu": ""}]
    t = trend_summary(rows)
    assert t["log_inv_eta"]["non_decreasing"] and t["inv_nu"]["non_decreasing"]


def test_verify_constants(capsys):
    assert main(["verify-constants"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["checks"]["k1_chain"]["holds"] and doc["checks"]["k1p_chain"]["points"] == 121
    assert doc["checks"]["eta_display_constant"]["role"] == "advisory"


# --- end-to-end runs ------------------------------------------------------------

def test_fuchsian_run_is_deterministic(tmp_path, capsys):
    docs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        path = _write(tmp_path, {"name": "fg", "group": {"kind": "fuchsian_g2"}, "depth": 3,
                                 "quadrature": {"depth": 4}, "seed": 7})
        assert main(["run", path, "--output", str(out)]) == EXIT_OK
        for f in ("manifold_report.json", "inequalities.csv", "run.log"):
            assert (out / f).exists()
        doc = json.loads((out / "manifold_report.json").read_text())
        doc.pop("timestamp")
        doc["scenario"].pop("output")
        docs.append(doc)
    assert docs[0] == docs[1]
    assert docs[0]["status"] == "pass" and docs[0]["scenario"]["seed"] == 7


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("sweep")
    path = _write(tmp, SCHOTTKY)
    code = main(["sweep", path, "--param", "group.circles.*.2", "--values", "0.6,0.8",
                 "--output", str(tmp / "out")])
    run_code = main(["run", path, "--output", str(tmp / "single")])
    return tmp, path, code, run_code


def test_sweep_writes_rows_and_trend(sweep_dir):
    tmp, _, code, _ = sweep_dir
    assert code == EXIT_OK
    rows = _load_rows(tmp / "out" / "sweep.csv")
    assert [float(r["value"]) for r in rows] == [0.6, 0.8]
    assert all(r["status"] == "pass" for r in rows)
    trend = json.loads((tmp / "out" / "trend.json").read_text())
    assert "log_inv_eta" in trend


def test_single_point_sweep_matches_run(sweep_dir):
    tmp, _, _, run_code = sweep_dir
    assert run_code == EXIT_OK
    row = _load_rows(tmp / "out" / "sweep.csv")[0]
    rep = json.loads((tmp / "single" / "manifold_report.json").read_text())["report"]
    for key, name in (("V_C", "V_C"), ("V_R", "V_R"), ("eta", "eta"), ("nu", "nu")):
        assert float(row[f"{name}_lo"]) == pytest.approx(rep[key][0], rel=1e-12)
        assert float(row[f"{name}_hi"]) == pytest.approx(rep[key][1], rel=1e-12)


def test_sweep_resumes_without_recomputing(sweep_dir, monkeypatch):
    tmp, path, _, _ = sweep_dir
    sweep_csv = tmp / "out" / "sweep.csv"
    rows = _load_rows(sweep_csv)
    calls = []
    real = cli.execute

    def counting(sc, write=True):
        calls.append(sc["group"]["circles"][0][2])
        return real(sc, write)

    monkeypatch.setattr(cli, "execute", counting)
    # complete file: nothing is recomputed
    assert main(["sweep", path, "--param", "group.circles.*.2", "--values", "0.6,0.8",
                 "--output", str(tmp / "out")]) == EXIT_OK
    assert calls == []
    # simulate an interruption after the first value
    with open(sweep_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerow(rows[0])
    assert main(["sweep", path, "--param", "group.circles.*.2", "--values", "0.6,0.8",
                 "--output", str(tmp / "out")]) == EXIT_OK
    assert calls == [0.8]
    again = _load_rows(sweep_csv)
    assert again[1]["V_C_lo"] == rows[1]["V_C_lo"]
