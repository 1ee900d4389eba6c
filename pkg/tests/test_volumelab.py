import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from renormvol.volumelab import (
    BENDING_PER_CHI, K_BILIP, M_CONST, Interval, ManifoldReport, assemble_report, bending_bounds,
    bilipschitz_constant, compare, constants, inj_radius_conversions, k1_of_nu, k1p_of_eta,
    log_sum_step, verify_theorems, vr_interval, w_tau_from_core, write_inequality_csv,
)

reals = st.floats(-1e3, 1e3, allow_nan=False)


@given(reals, reals, reals, reals)
def test_interval_arithmetic_encloses(a, b, c, d):
    x, y = Interval(min(a, b), max(a, b)), Interval(min(c, d), max(c, d))
    for p in (x.lo, x.hi, x.mid):
        for q in (y.lo, y.hi, y.mid):
            s, m = x + y, x * y
            assert s.lo - 1e-9 <= p + q <= s.hi + 1e-9
            assert m.lo - 1e-6 <= p * q <= m.hi + 1e-6
            assert (x - y).lo - 1e-9 <= p - q <= (x - y).hi + 1e-9


def test_interval_rejects_empty():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    assert Interval.point(2.0, -0.5) == Interval(1.5, 2.5)


def test_compare_three_way():
    assert compare(Interval(0, 1), Interval(1, 2)) == "pass"
    assert compare(Interval(0, 1), Interval(1, 2), strict=True) == "indeterminate"
    assert compare(Interval(3, 4), Interval(1, 2)) == "fail"
    assert compare(Interval(0, 2), Interval(1, 3)) == "indeterminate"
    assert compare(1.0, 1.0) == "pass"


def test_constants_and_closures():
    c = constants()
    assert c["k"] == pytest.approx(5.7627, abs=1e-4) and K_BILIP == c["k"]
    assert M_CONST == pytest.approx(np.arccosh(np.e ** 2))
    assert c["checks"]["bending_constant"]["holds"]
    assert c["checks"]["incompressible_constant"]["holds"]
    # pi log(2 asinh 1) = 1.78089..., just short of the displayed 1.79
    assert c["eta_display_sharp"] == pytest.approx(1.78089, abs=1e-5)
    assert not c["checks"]["eta_display_constant"]["holds"]


@pytest.mark.parametrize("nu", [0.01, 0.1, 0.5, 1.0, 5.0, 100.0])
def test_k1_chain(nu):
    exact, info = k1_of_nu(nu)
    assert info["holds"] and info["chain"][-1] == pytest.approx(205 / nu + 202)
    assert exact == pytest.approx(np.pi * np.log(bilipschitz_constant(nu)) + (807 / nu + 771) / 4)


@pytest.mark.parametrize("eta", [1e-6, 1e-3, 0.05, 0.3, 1.0, 4.0])
@pytest.mark.parametrize("shrink", [0.076, 0.0765])
def test_k1p_chain(eta, shrink):
    _, info = k1p_of_eta(eta, shrink)
    assert info["holds"]
    assert info["chain"][-1] == pytest.approx(45 * np.log(1 / min(1, eta)) + 67)


def test_chain_inputs_validated():
    with pytest.raises(ValueError):
        k1_of_nu(0.0)
    with pytest.raises(ValueError):
        k1p_of_eta(-1.0)
    with pytest.raises(ValueError):
        inj_radius_conversions(nu=0)


def test_log_sum_step():
    for a, b in [(2, 1), (10, 0.5), (1.5, 7)]:
        assert log_sum_step(a, b)[2]


def test_injectivity_conversions():
    out = inj_radius_conversions(nu=1.0, eta=0.01)
    assert out["eta_lower"] == pytest.approx(np.exp(-M_CONST - np.pi ** 2 / 2) / 2)
    assert out["nu_lower"] == pytest.approx(0.01 / 0.153)
    assert inj_radius_conversions(eta=1.0)["nu_lower"] == 0.5


def test_vr_interval_and_w_tau():
    W = w_tau_from_core(Interval(1.0, 1.1), Interval(4.0, 4.4))
    assert W.lo == pytest.approx(1.0 - 1.1) and W.hi == pytest.approx(1.1 - 1.0)
    V = vr_interval(W, -2, 2.0)
    assert V.hi == W.hi and V.lo == pytest.approx(W.lo - 2 * np.pi * np.log(2))
    assert vr_interval(W, -2, 2.0, exact=True) == W


def _report(chi=-2, V=10.0, L=20.0, nu=1.5, eta=0.5, compressible=True, B=None, err=0.01):
    V_C = Interval.point(V, err)
    L_b = Interval.point(L, err)
    W = w_tau_from_core(V_C, L_b)
    B = B if B is not None else (bilipschitz_constant(nu) if compressible else 2.0)
    return ManifoldReport("synthetic", chi, chi, compressible, V_C, L_b, W, W, vr_interval(W, chi, B), B,
                          nu=Interval.point(nu, 0.01) if nu else None,
                          eta=Interval.point(eta, 0.01) if eta else None)


def test_degree_two_cover_doubles_every_term():
    # a double cover doubles V_C, L and chi; the certified gap V_C - V_R doubles with them
    one = _report()
    two = _report(chi=-4, V=20.0, L=40.0, err=0.02)
    gap1, gap2 = one.V_C - one.V_R, two.V_C - two.V_R
    assert gap2.mid == pytest.approx(2 * gap1.mid)
    assert two.V_R.width == pytest.approx(2 * one.V_R.width, rel=1e-9)
    st1 = {r.tag: r.status for r in verify_theorems(one)}
    st2 = {r.tag: r.status for r in verify_theorems(two)}
    assert st1 == st2


def test_violations_are_detected():
    # a bending length far beyond |chi|(807/nu + 771) must fail, not pass
    rep = _report(L=1e5, V=1.0)
    rows = {r.tag: r for r in bending_bounds(rep)}
    assert rows["thm4.2-upper"].status == "fail"
    # V_R above V_C contradicts the strict upper bound
    rep = dataclasses.replace(_report(), V_R=Interval(20.0, 21.0))
    rows = {r.tag: r for r in verify_theorems(rep)}
    assert rows["compressible-upper"].status == "fail"


def test_applicability_conditions():
    tags = {r.tag for r in verify_theorems(_report(nu=0.4, eta=0.1))}
    assert {"thm1.3-nu-display", "thm4.2-lower", "thm4.3-lower", "thm1.2-eta-display"} <= tags
    tags = {r.tag for r in verify_theorems(_report(nu=1.5, eta=2.0))}
    assert not {"thm1.3-nu-display", "thm4.2-lower", "thm4.3-lower", "thm1.2-eta-display"} & tags
    tags = {r.tag for r in verify_theorems(_report(compressible=False, nu=None, eta=None))}
    assert tags == {"thm4.4-upper", "thm1.1-lower", "thm1.1-upper"}


def test_incompressible_bending_bound_uses_constant():
    rep = _report(compressible=False, nu=None, eta=None, L=BENDING_PER_CHI * 2 + 1)
    assert {r.tag: r.status for r in bending_bounds(rep)}["thm4.4-upper"] == "fail"


def test_inequality_csv(tmp_path):
    rows = verify_theorems(_report())
    write_inequality_csv(tmp_path / "i.csv", rows)
    with open(tmp_path / "i.csv") as fh:
        got = list(csv.DictReader(fh))
    assert len(got) == len(rows) and got[0]["status"] in ("pass", "fail", "indeterminate")


def test_fuchsian_report(fuchsian_group):
    rep = assemble_report(fuchsian_group, 3, resolutions={"depth": 4})
    assert rep.tau_equals_rho and rep.V_C == Interval(0.0, 0.0)
    assert rep.V_R == rep.W_tau_hull and rep.V_R.lo == 0.0 == rep.V_R.hi
    assert rep.W_tau_epstein.lo <= 0.0 <= rep.W_tau_epstein.hi and rep.routes_agree
    assert rep.nu.mid == pytest.approx(1.12838, abs=1e-4)
    assert all(r.status == "pass" for r in verify_theorems(rep))
    assert rep.to_json()["V_R"] == [0.0, 0.0]
