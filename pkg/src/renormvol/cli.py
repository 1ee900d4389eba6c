"""Scenario runner: build a group, compute its core and metrics, verify the inequalities.

Commands
--------
``renormvol run SCENARIO``
    Run one scenario and write ``manifold_report.json``, ``inequalities.csv``
    and ``run.log`` into the scenario's output directory.
``renormvol sweep SCENARIO --param PATH --values V1,V2,...``
    Run the scenario once per value of a numeric parameter and append one row
    per value to ``sweep.csv``.  Rows already present are skipped, so an
    interrupted sweep resumes where it stopped.
``renormvol verify-constants``
    Evaluate the numerical constants and their arithmetic closures.

Exit codes: 0 when every check passes, 1 when some check is indeterminate and
none fails, 2 on any failure (including malformed scenarios).  The thread count
for the linear-algebra backend is read from ``RENORMVOL_THREADS``.
"""

import argparse
import copy
import csv
import datetime
import json
import logging
import os
import sys
import traceback

THREADS_ENV = "RENORMVOL_THREADS"

EXIT_OK, EXIT_INDETERMINATE, EXIT_FAILURE = 0, 1, 2

_CIRCLE = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "group"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "group": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["kind", "circles", "pairings"],
                 "properties": {
                     "kind": {"const": "schottky"},
                     "circles": {"type": "array", "items": _CIRCLE, "minItems": 2},
                     "pairings": {"type": "array", "minItems": 1, "items": {
                         "type": "array", "items": {"type": "integer", "minimum": 0},
                         "minItems": 2, "maxItems": 2}},
                     "twists": {"type": "array", "items": {"type": "number"}}}},
                {"type": "object", "additionalProperties": False, "required": ["kind"],
                 "properties": {"kind": {"const": "fuchsian_g2"}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "angle"],
                 "properties": {"kind": {"const": "bent"},
                                "curve": {"enum": ["a", "b", "c", "d", "[a,b]"]},
                                "angle": {"type": "number"}}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "path"],
                 "properties": {"kind": {"const": "file"}, "path": {"type": "string"}}},
            ]
        },
        "depth": {"type": "integer", "minimum": 2, "maximum": 8},
        "quadrature": {"type": "object", "additionalProperties": False, "properties": {
            "base": {"type": "integer", "minimum": 4, "maximum": 256},
            "depth": {"type": "integer", "minimum": 1, "maximum": 8}}},
        "r_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                     "minItems": 1},
        "metrics": {"type": "object", "additionalProperties": False, "properties": {
            "epstein": {"type": "boolean"},
            "poincare_grid": {"type": "integer", "minimum": 41, "maximum": 401}}},
        "suite": {"enum": ["identities", "theorems", "all"]},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "depth": 4,
    "quadrature": {"base": 32, "depth": 5},
    "r_values": [1.0],
    "metrics": {"epstein": True, "poincare_grid": 161},
    "suite": "theorems",
    "seed": 0,
}


class ScenarioError(ValueError):
    """Invalid scenario; `field` is the dotted path of the offending entry."""

    def __init__(self, message, field=""):
        super().__init__(message)
        self.field = field


def _configure_threads():
    n = os.environ.get(THREADS_ENV)
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _merge_defaults(doc):
    out = copy.deepcopy(DEFAULTS)
    for k, v in doc.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    out.setdefault("output", os.path.join("runs", out["name"]))
    return out


def validate_scenario(doc):
    """Validate a scenario dict against the schema and fill in defaults.

    Raises
    ------
    ScenarioError
        With the dotted path of the first offending field.
    """
    import jsonschema

    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        if err.validator == "oneOf" and list(err.absolute_path) == ["group"]:
            # report the most specific sub-error of the branch matching the kind
            kind = doc.get("group", {}).get("kind") if isinstance(doc.get("group"), dict) else None
            subs = [e for e in err.context if kind is not None
                    and SCENARIO_SCHEMA["properties"]["group"]["oneOf"][e.relative_schema_path[0]]
                    ["properties"]["kind"].get("const") == kind]
            if subs:
                err = min(subs, key=lambda e: len(e.relative_path))
        parts = [str(p) for p in err.absolute_path]
        if err.validator == "required":
            parts += [next(p for p in err.validator_value if p not in err.instance)]
        elif err.validator == "additionalProperties":
            allowed = err.schema.get("properties", {})
            parts += [sorted(k for k in err.instance if k not in allowed)[0]]
        field = ".".join(parts) or "<root>"
        raise ScenarioError(f"{field}: {err.message}", field)
    return _merge_defaults(doc)


def load_scenario(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}", "<root>") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object", "<root>")
    doc = validate_scenario(doc)
    base = os.path.dirname(os.path.abspath(path))
    if doc["group"]["kind"] == "file" and not os.path.isabs(doc["group"]["path"]):
        doc["group"]["path"] = os.path.join(base, doc["group"]["path"])
    return doc


def build_group(spec):
    """Construct the group described by a scenario's ``group`` entry."""
    from . import kleinian

    kind = spec["kind"]
    try:
        if kind == "schottky":
            circles = [(complex(x, y), r) for x, y, r in spec["circles"]]
            pairings = [tuple(p) for p in spec["pairings"]]
            return kleinian.build_schottky(circles, pairings, spec.get("twists"))
        if kind == "fuchsian_g2":
            return kleinian.build_fuchsian_genus2()
        if kind == "bent":
            return kleinian.bend_quasifuchsian(kleinian.build_fuchsian_genus2(),
                                               spec.get("curve", "a"), spec["angle"])
        return kleinian.GroupModel.load(spec["path"])
    except (ValueError, OSError) as exc:
        raise ScenarioError(str(exc), "group") from exc


def _overall_status(rows):
    statuses = {r["status"] for r in rows}
    if "fail" in statuses:
        return "fail"
    if "indeterminate" in statuses:
        return "indeterminate"
    return "pass"


def _exit_code(status):
    return {"pass": EXIT_OK, "indeterminate": EXIT_INDETERMINATE}.get(status, EXIT_FAILURE)


def _logger(out_dir):
    log = logging.getLogger(f"renormvol.run.{out_dir}")
    log.setLevel(logging.INFO)
    log.handlers.clear()
    handler = logging.FileHandler(os.path.join(out_dir, "run.log"), mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.propagate = False
    return log


def execute(scenario, write=True):
    """Run the pipeline for a validated scenario.

    Returns
    -------
    dict
        The JSON document written to ``manifold_report.json``.
    """
    from . import volumelab

    out_dir = scenario["output"]
    log = None
    if write:
        os.makedirs(out_dir, exist_ok=True)
        log = _logger(out_dir)
    say = log.info if log else (lambda *a: None)
    G = build_group(scenario["group"])
    say(f"group {G.name}: kind {G.kind}, rank {G.rank}, chi {G.chi_boundary}")
    suite = scenario["suite"]
    res = scenario["quadrature"]
    epstein = scenario["metrics"]["epstein"]
    doc = {"scenario": scenario, "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    rows = []
    if suite in ("theorems", "all"):
        rep = volumelab.assemble_report(G, scenario["depth"], res, epstein=epstein,
                                        nu_grid=scenario["metrics"]["poincare_grid"])
        say(f"V_C {rep.V_C}, W(tau) {rep.W_tau_hull}, V_R {rep.V_R}")
        doc["report"] = rep.to_json()
        ineqs = volumelab.verify_theorems(rep)
        if not rep.routes_agree:
            say("W(tau) routes disagree beyond tolerance")
        rows += [dict(r.to_row(), suite="theorems") for r in ineqs]
    if suite in ("identities", "all"):
        for r0 in scenario["r_values"]:
            ids = volumelab.verify_identities(G, scenario["depth"], res, r0=r0, epstein=epstein)
            rows += [dict(r.to_row(), suite="identities", r=r0) for r in ids]
    for r in rows:
        say(f"{r['tag']}: {r['status']} (margin {r['margin']:.6g})")
    doc["inequalities"] = rows
    doc["status"] = _overall_status(rows)
    if write:
        with open(os.path.join(out_dir, "manifold_report.json"), "w") as fh:
            json.dump(doc, fh, indent=2, default=float)
        _write_rows(os.path.join(out_dir, "inequalities.csv"), rows)
    return doc


def _write_rows(path, rows):
    fields = ["suite", "r", "tag", "statement", "lhs_lo", "lhs_hi", "rhs_lo", "rhs_hi", "margin", "status"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)


def _error_doc(exc):
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    if isinstance(exc, ScenarioError):
        doc["error"]["field"] = exc.field
    return doc


def _emit_error(exc, out_dir=None):
    doc = _error_doc(exc)
    if not isinstance(exc, ScenarioError):
        doc["error"]["traceback"] = traceback.format_exc()
    print(json.dumps(doc, indent=2))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "error.json"), "w") as fh:
            json.dump(doc, fh, indent=2)


def cmd_run(args):
    try:
        scenario = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        _emit_error(exc if isinstance(exc, ScenarioError) else ScenarioError(str(exc), "<file>"))
        return EXIT_FAILURE
    if args.output:
        scenario["output"] = args.output
    try:
        doc = execute(scenario)
    except Exception as exc:  # any module failure becomes a structured error
        _emit_error(exc, scenario["output"])
        return EXIT_FAILURE
    print(json.dumps({"status": doc["status"], "output": scenario["output"],
                      "checks": {r["tag"]: r["status"] for r in doc["inequalities"]}}, indent=2))
    return _exit_code(doc["status"])


# --- sweeps ------------------------------------------------------------------

def set_path(doc, path, value):
    """Set a dotted parameter path in a nested dict/list; ``*`` addresses every list element."""
    keys = path.split(".")

    def rec(node, ks):
        k, rest = ks[0], ks[1:]
        if isinstance(node, list):
            targets = range(len(node)) if k == "*" else [int(k)]
        else:
            if k not in node:
                raise ScenarioError(f"unknown parameter path {path!r}", path)
            targets = [k]
        for t in targets:
            if rest:
                rec(node[t], rest)
            else:
                if not isinstance(node[t], (int, float)) or isinstance(node[t], bool):
                    raise ScenarioError(f"parameter {path!r} is not numeric", path)
                node[t] = value

    try:
        rec(doc, keys)
    except (IndexError, ValueError, TypeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid parameter path {path!r}: {exc}", path) from exc
    return doc


SWEEP_FIELDS = ["value", "status", "V_C_lo", "V_C_hi", "W_tau_lo", "W_tau_hi", "V_R_lo", "V_R_hi",
                "eta_lo", "eta_hi", "nu_lo", "nu_hi", "gap_lower", "log_inv_eta", "inv_nu", "error"]


def _sweep_row(value, doc):
    rep = doc.get("report", {})
    row = {"value": value, "status": doc["status"], "error": ""}
    for key, name in (("V_C", "V_C"), ("W_tau_hull", "W_tau"), ("V_R", "V_R"), ("eta", "eta"), ("nu", "nu")):
        iv = rep.get(key)
        row[f"{name}_lo"], row[f"{name}_hi"] = (iv if iv else ["", ""])
    if rep:
        # the certified lower bound on V_C - V_R
        row["gap_lower"] = rep["V_C"][0] - rep["V_R"][1]
    if rep.get("eta"):
        import math
        row["log_inv_eta"] = -math.log(rep["eta"][1])
    if rep.get("nu"):
        row["inv_nu"] = 1 / rep["nu"][0]
    return row


def trend_summary(rows):
    """Monotonicity of the gap lower bound against log(1/eta) and 1/nu."""
    ok = [r for r in rows if r["status"] != "error" and r.get("gap_lower") not in ("", None)]
    out = {}
    for col in ("log_inv_eta", "inv_nu"):
        pts = sorted((float(r[col]), float(r["gap_lower"])) for r in ok if r.get(col) not in ("", None))
        if len(pts) >= 2:
            out[col] = {"non_decreasing": all(b[1] >= a[1] for a, b in zip(pts, pts[1:])), "points": pts}
    return out


def _read_sweep(path):
    if not os.path.exists(path):
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_sweep(args):
    try:
        scenario = load_scenario(args.scenario)
        values = [float(v) for v in args.values.split(",") if v.strip()]
        if not values:
            raise ScenarioError("no sweep values given", "--values")
        set_path(copy.deepcopy(scenario), args.param, values[0])
    except (ScenarioError, OSError, ValueError) as exc:
        if not isinstance(exc, ScenarioError):
            exc = ScenarioError(str(exc), "--values")
        _emit_error(exc)
        return EXIT_FAILURE
    out_dir = args.output or scenario["output"]
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "sweep.csv")
    done = {float(r["value"]): r for r in _read_sweep(path) if r["status"] != "error"}
    rows = []
    for v in values:
        if v in done:
            rows.append(done[v])
            continue
        sc = set_path(copy.deepcopy(scenario), args.param, v)
        sc["output"] = os.path.join(out_dir, f"value_{v:g}")
        try:
            validate_scenario(sc)
            row = _sweep_row(v, execute(sc))
        except Exception as exc:  # record and continue
            row = {"value": v, "status": "error", "error": f"{type(exc).__name__}: {exc}"}
        rows.append(row)
        # rewrite after every value so an interruption loses at most one row
        _write_sweep(path, rows + [r for k, r in done.items() if k not in values])
    _write_sweep(path, rows)
    trend = trend_summary(rows)
    with open(os.path.join(out_dir, "trend.json"), "w") as fh:
        json.dump(trend, fh, indent=2)
    status = _overall_status([{"status": "fail" if r["status"] == "error" else r["status"]} for r in rows])
    print(json.dumps({"status": status, "output": path, "trend": {k: v["non_decreasing"]
                                                                  for k, v in trend.items()}}, indent=2))
    return _exit_code(status)


def _write_sweep(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, restval="", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


# --- constants ---------------------------------------------------------------

def constant_checks():
    """Constants, closures and the simplification chains on a log-spaced grid."""
    import numpy as np

    from . import volumelab

    c = volumelab.constants()
    grid = np.logspace(-3, 1, 121)
    k1 = [volumelab.k1_of_nu(x) for x in grid]
    k1p = [volumelab.k1p_of_eta(x) for x in grid]
    checks = {
        "k": {"value": c["k"], "target": 5.7627, "holds": abs(c["k"] - 5.7627) <= 1e-3, "role": "required"},
        "m": {"value": c["m"], "target": 2.68854, "holds": abs(c["m"] - 2.68854) <= 1e-5, "role": "required"},
        "k1_chain": {"holds": all(info["holds"] and v <= 205 / x + 202 for (v, info), x in zip(k1, grid)),
                     "points": len(grid), "role": "required"},
        "k1p_chain": {"holds": all(info["holds"] for _, info in k1p), "points": len(grid),
                      "role": "required"},
    }
    for name, chk in c["checks"].items():
        # pi log(2 asinh 1) = 1.7809 falls short of 1.79, so this closure is reported only
        role = "advisory" if name == "eta_display_constant" else "required"
        checks[name] = {**chk, "role": role}
    for chk in checks.values():
        chk["holds"] = bool(chk["holds"])
    return {"constants": {k: v for k, v in c.items() if k != "checks"}, "checks": checks}


def cmd_verify_constants(args):
    doc = constant_checks()
    print(json.dumps(doc, indent=2, default=float))
    required = [v["holds"] for v in doc["checks"].values() if v["role"] == "required"]
    return EXIT_OK if all(required) else EXIT_FAILURE


def main(argv=None):
    _configure_threads()
    parser = argparse.ArgumentParser(prog="renormvol", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.add_argument("--output", help="override the scenario's output directory")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("sweep", help="sweep one numeric scenario parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help="dotted path, e.g. group.circles.*.2")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--output", help="override the output directory")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("verify-constants", help="check constants and their closures")
    p.set_defaults(func=cmd_verify_constants)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
