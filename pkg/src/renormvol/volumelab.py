"""Assembly of core, metric, and surface computations into volume reports.

Every quantity carries an interval.  Inequalities are decided by interval
logic: pass when the intervals separate the right way, fail when they
separate the wrong way, and indeterminate otherwise.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

K_BILIP = 4 + np.log(3 + 2 * np.sqrt(2))
M_CONST = float(np.arccosh(np.e ** 2))
K_BENDING = 2.8396
BENDING_PER_CHI = 28.0258
THM11_CONSTANT = 9.185
ETA_DISPLAY_CONSTANT = 1.79
ROUTE_TOLERANCE = 0.02


# --- intervals ---------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, x, err=0.0):
        return cls(x - abs(err), x + abs(err))

    @property
    def mid(self):
        return (self.lo + self.hi) / 2

    @property
    def width(self):
        return self.hi - self.lo

    def __add__(self, o):
        o = _as_interval(o)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, o):
        return self + (-_as_interval(o))

    def __rsub__(self, o):
        return _as_interval(o) - self

    def __mul__(self, o):
        o = _as_interval(o)
        p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi]
        return Interval(min(p), max(p))

    __rmul__ = __mul__

    def to_json(self):
        return [self.lo, self.hi]


def _as_interval(x):
    return x if isinstance(x, Interval) else Interval(float(x), float(x))


def compare(lhs, rhs, strict=False):
    """Decide lhs <= rhs (or lhs < rhs) for intervals: 'pass', 'fail', or 'indeterminate'."""
    lhs, rhs = _as_interval(lhs), _as_interval(rhs)
    ok = lhs.hi < rhs.lo if strict else lhs.hi <= rhs.lo
    bad = lhs.lo >= rhs.hi if strict else lhs.lo > rhs.hi
    return "pass" if ok else "fail" if bad else "indeterminate"


# --- constants and chains ----------------------------------------------------

def constants():
    """Named constants with the arithmetic closures they are used in.

    Each closure is reported with its computed value and whether it holds.
    """
    eta_const = float(np.pi * np.log(2 * np.arcsinh(1.0)))
    checks = {
        "bending_constant": {
            "value": K_BENDING * np.pi ** 2, "bound": BENDING_PER_CHI,
            "holds": bool(K_BENDING * np.pi ** 2 <= BENDING_PER_CHI)},
        "incompressible_constant": {
            "value": np.pi * np.log(2) + BENDING_PER_CHI / 4, "bound": THM11_CONSTANT,
            "holds": bool(np.pi * np.log(2) + BENDING_PER_CHI / 4 <= THM11_CONSTANT)},
        "eta_display_constant": {
            "value": eta_const, "bound": ETA_DISPLAY_CONSTANT,
            "holds": bool(eta_const >= ETA_DISPLAY_CONSTANT)},
    }
    return {
        "k": float(K_BILIP),
        "m": M_CONST,
        "K_bending": K_BENDING,
        "K_pi2": K_BENDING * np.pi ** 2,
        "bending_per_chi": BENDING_PER_CHI,
        "thm11": THM11_CONSTANT,
        "eta_display": ETA_DISPLAY_CONSTANT,
        "eta_display_sharp": eta_const,
        "checks": checks,
    }


def bilipschitz_constant(nu):
    return 2 * np.sqrt(2) * (K_BILIP + np.pi ** 2 / (2 * nu))


def k1_of_nu(nu):
    """K1(nu) and the steps of its simplification to 205/nu + 202."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    k = K_BILIP
    exact = np.pi * np.log(bilipschitz_constant(nu)) + (807 / nu + 771) / 4
    step1 = np.pi * (np.log(2 * k * np.sqrt(2)) + np.pi ** 2 / (2 * k * nu)) + 202 / nu + 193
    step2 = (202 + np.pi ** 3 / (2 * k)) / nu + (np.pi * np.log(2 * k * np.sqrt(2)) + 193)
    final = 205 / nu + 202
    chain = [exact, step1, step2, final]
    ok = all(a <= b * (1 + 1e-15) for a, b in zip(chain, chain[1:]))
    return exact, {"chain": chain, "holds": bool(ok)}


def log_sum_step(a, b):
    """The elementary bound log(a + b) <= log(a) + b/a (a > 1, b > 0)."""
    lhs, rhs = np.log(a + b), np.log(a) + b / a
    return lhs, rhs, bool(lhs <= rhs)


def k1p_of_eta(eta, shrink=0.076):
    """K1'(eta) and its simplification chain to 45 log(1/min{1,eta}) + 67.

    shrink = 0.076 is the default definition; 0.0765 = 0.153/2 is
    the value that follows exactly from the conversion min{1/2, eta/.153}.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    k = K_BILIP
    mu = min(1.0, eta)
    lg = np.log(1 / mu)
    tail = (164 * lg + 218) / 4
    exact = np.pi * np.log(2 * np.sqrt(2) * (k + np.pi ** 2 / min(1.0, eta / shrink))) + tail
    s1 = np.pi * np.log(2 * np.sqrt(2) * (k + np.pi ** 2 / mu)) + tail
    s2 = np.pi * lg + np.pi * np.log(2 * np.sqrt(2) * (k * mu + np.pi ** 2)) + tail
    s3 = np.pi * np.log(2 * np.sqrt(2) * (k + np.pi ** 2)) + 218 / 4 + (np.pi + 164 / 4) * lg
    final = 45 * lg + 67
    chain = [exact, s1, s2, s3, final]
    ok = all(a <= b * (1 + 1e-12) + 1e-12 for a, b in zip(chain, chain[1:]))
    return exact, {"chain": chain, "holds": bool(ok), "statement_form": 67 * lg + 45}


def inj_radius_conversions(nu=None, eta=None):
    """Lower bounds passing between the two injectivity radii.

    From nu (Poincare metric on the domain) to eta (intrinsic metric on the
    universal cover of the core boundary): e^{-m} e^{-pi^2 / (2 nu)} / 2.
    From eta to nu: min{1/2, eta / .153}.
    """
    out = {}
    if nu is not None:
        if not nu > 0:
            raise ValueError("nu must be positive")
        out["eta_lower"] = float(np.exp(-M_CONST) * np.exp(-np.pi ** 2 / (2 * nu)) / 2)
    if eta is not None:
        if not eta > 0:
            raise ValueError("eta must be positive")
        out["nu_lower"] = float(min(0.5, eta / 0.153))
    return out


# --- reports -----------------------------------------------------------------

@dataclass
class ManifoldReport:
    group: str
    chi_boundary: int
    chi_core_boundary: int
    compressible: bool
    V_C: Interval
    L_beta: Interval
    W_tau_hull: Interval
    W_tau_epstein: Interval
    V_R: Interval
    comparison_constant: float
    nu: Interval = None
    eta: Interval = None
    tau_equals_rho: bool = False
    routes_agree: bool = True
    flags: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_json(self):
        d = {}
        for k, v in asdict(self).items():
            val = getattr(self, k)
            d[k] = val.to_json() if isinstance(val, Interval) else v
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, default=float)


@dataclass
class InequalityReport:
    tag: str
    statement: str
    lhs: Interval
    rhs: Interval
    status: str
    margin: float
    provenance: str = ""

    def to_row(self):
        return {"tag": self.tag, "statement": self.statement, "lhs_lo": self.lhs.lo,
                "lhs_hi": self.lhs.hi, "rhs_lo": self.rhs.lo, "rhs_hi": self.rhs.hi,
                "margin": self.margin, "status": self.status}


def _ineq(tag, statement, lhs, rhs, strict=False, provenance=""):
    lhs, rhs = _as_interval(lhs), _as_interval(rhs)
    return InequalityReport(tag, statement, lhs, rhs, compare(lhs, rhs, strict),
                            float(rhs.lo - lhs.hi), provenance)


def w_tau_from_core(V_C, L_beta):
    """W(tau) = V_C - L / 4 (linear in its inputs)."""
    return _as_interval(V_C) - 0.25 * _as_interval(L_beta)


def vr_interval(W_tau, chi, B, exact=False):
    """[W(tau) + pi chi log B, W(tau)], or the point W(tau) when rho = tau."""
    W_tau = _as_interval(W_tau)
    if exact:
        return W_tau
    return Interval(W_tau.lo + np.pi * chi * np.log(B), W_tau.hi)


def assemble_report(G, depth, resolutions=None, epstein=True, nu_grid=161):
    """Compute every quantity for G at limit-set depth `depth`.

    Depth truncation error is estimated from depth - 1; module error estimates
    are added on top.  resolutions: optional dict with keys "base", "depth"
    for the surface quadrature.
    """
    from .confmetrics import fuchsian_systole, injectivity_radius_poincare
    from .corehull import bending_length, build_core, core_volume, eta_estimate
    from .epstein import w_volume_of_metric

    res = dict(base=32, depth=5)
    res.update(resolutions or {})
    cores = {d: build_core(G, d) for d in (depth - 1, depth)}
    core = cores[depth]
    flags = []
    chi = G.chi_boundary
    chi_core = core.chi_mesh if core.chi_mesh is not None else chi
    if core.chi_mesh is not None and core.chi_mesh != chi:
        flags.append(f"mesh Euler characteristic {core.chi_mesh} differs from {chi}")

    def with_depth(fn):
        v1, e1 = fn(cores[depth])
        v0, _ = fn(cores[depth - 1])
        return Interval.point(v1, e1 + abs(v1 - v0))

    V_C = with_depth(core_volume)
    L = with_depth(bending_length)
    W_hull = w_tau_from_core(V_C, L)
    if epstein:
        r = 1.0
        ep = w_volume_of_metric(core, G, scale=0.0, r=r, base=res["base"], depth=res["depth"],
                                volume=V_C.mid, chi=chi)
        W_ep = Interval.point(ep.value, ep.error + V_C.width / 2)
        ep_info = {"profile": ep.profile.coeffs.tolist(), "fit_residual": ep.profile.fit_residual,
                   "half_mean_direct": ep.half_mean_curvature, "half_mean_fit": ep.direct_half_mean}
    else:
        W_ep, ep_info = W_hull, {"skipped": True}
    agree = abs(W_hull.mid - W_ep.mid) <= ROUTE_TOLERANCE * max(1.0, V_C.mid)
    if not agree:
        flags.append("W(tau) routes disagree")

    nu = eta = None
    if core.degenerate:
        # both boundary components are round disks: rho = tau
        B, exact = 1.0, True
        nu_val, word = fuchsian_systole(G)
        nu = Interval.point(nu_val)
    elif not G.compressible:
        B, exact = 2.0, False
    else:
        lo, hi = eta_estimate(core, G)
        lo0, hi0 = eta_estimate(cores[depth - 1], G)
        d = max(abs(lo - lo0), abs(hi - hi0))
        eta = Interval(lo - d, hi + d)
        n_lo, n_hi, info = injectivity_radius_poincare(G, core, n=nu_grid)
        nu = Interval(n_lo, n_hi)
        B, exact = bilipschitz_constant(n_lo), False
    V_R = vr_interval(W_hull, chi, B, exact)
    return ManifoldReport(
        group=G.name, chi_boundary=chi, chi_core_boundary=int(chi_core), compressible=G.compressible,
        V_C=V_C, L_beta=L, W_tau_hull=W_hull, W_tau_epstein=W_ep, V_R=V_R,
        comparison_constant=float(B), nu=nu, eta=eta, tau_equals_rho=exact, routes_agree=bool(agree),
        flags=flags, provenance={"depth": depth, "epstein": ep_info, "screened_only": G.screened_only},
    )


def bending_bounds(rep):
    """Bounds on L(beta) in terms of nu, eta, or |chi| (incompressible case)."""
    out = []
    L = rep.L_beta
    chi = abs(rep.chi_boundary)
    if not rep.compressible:
        out.append(_ineq("thm4.4-upper", "L <= 28.0258|chi|", L, BENDING_PER_CHI * chi))
    if rep.nu is not None:
        out.append(_ineq("thm4.2-upper", "L <= |chi|(807/nu + 771)", L,
                         chi * (807 / rep.nu.lo + 771)))
        if rep.nu.hi <= 0.5:
            out.append(_ineq("thm4.2-lower", "37/nu - 36 <= L", 37 / rep.nu.hi - 36, L))
    if rep.eta is not None:
        lg = np.log(1 / min(1.0, max(rep.eta.lo, 1e-300)))
        out.append(_ineq("thm4.3-upper", "L <= |chi|(164 log(1/min{1,eta}) + 218)", L,
                         chi * (164 * lg + 218)))
        if rep.eta.hi <= np.arcsinh(1.0):
            out.append(_ineq("thm4.3-lower", "4 pi log(2 asinh(1)/eta) <= L",
                             4 * np.pi * np.log(2 * np.arcsinh(1.0) / rep.eta.hi), L))
    return out


def verify_theorems(rep):
    """Instantiate each applicable inequality on the report's intervals."""
    out = []
    V_C, V_R = rep.V_C, rep.V_R
    chi = abs(rep.chi_core_boundary)
    out.extend(bending_bounds(rep))
    if not rep.compressible:
        out.append(_ineq("thm1.1-lower", "V_C - 9.185|chi| <= V_R", V_C - THM11_CONSTANT * chi, V_R))
        out.append(_ineq("thm1.1-upper", "V_R <= V_C", V_R, V_C))
        return out
    out.append(_ineq("compressible-upper", "V_R < V_C", V_R, V_C, strict=True))
    if rep.eta is not None:
        eta_lo = max(rep.eta.lo, 1e-300)
        _, info = k1p_of_eta(eta_lo)
        lg = np.log(1 / min(1.0, eta_lo))
        out.append(_ineq("thm1.2-lower", "V_C - |chi|(45 log(1/min{1,eta}) + 67) <= V_R",
                         V_C - chi * (45 * lg + 67), V_R, provenance="proof constants"))
        out.append(_ineq("thm1.2-lower-statement", "V_C - |chi|(67 log(1/min{1,eta}) + 45) <= V_R",
                         V_C - chi * (67 * lg + 45), V_R, provenance="statement constants"))
        if rep.eta.hi <= np.arcsinh(1.0):
            # the conservative end for an upper bound on V_R uses the largest eta
            lg_hi = np.log(1 / rep.eta.hi)
            out.append(_ineq("thm1.2-eta-display", "V_R <= V_C - pi log(1/eta) - 1.79",
                             V_R, V_C - np.pi * lg_hi - ETA_DISPLAY_CONSTANT))
            out.append(_ineq("thm1.2-eta-display-sharp", "V_R <= V_C - pi log(2 asinh(1)/eta)",
                             V_R, V_C - np.pi * np.log(2 * np.arcsinh(1.0) / rep.eta.hi)))
    if rep.nu is not None:
        nu_lo = rep.nu.lo
        K1, _ = k1_of_nu(nu_lo)
        out.append(_ineq("thm1.3-lower", "V_C - K1(nu)|chi| <= V_R", V_C - K1 * chi, V_R))
        out.append(_ineq("thm1.3-lower-simplified", "V_C - (205/nu + 202)|chi| <= V_R",
                         V_C - (205 / nu_lo + 202) * chi, V_R))
        if rep.nu.hi <= 0.5:
            out.append(_ineq("thm1.3-nu-display", "V_R <= V_C - (10/nu - 9)",
                             V_R, V_C - (10 / rep.nu.hi - 9), provenance="proof form"))
    return out


def _identity(tag, statement, value, expected, rel_tol, provenance="", scale=None):
    """Identity check value == expected as |value - expected| <= rel_tol * scale.

    `value` may be an Interval; `scale` defaults to max(1, |expected|).
    """
    value = _as_interval(value)
    dev = abs(value.mid - expected)
    lhs = Interval(max(0.0, dev - value.width / 2), dev + value.width / 2)
    scale = max(1.0, abs(expected)) if scale is None else scale
    return _ineq(tag, statement, lhs, rel_tol * scale, provenance=provenance)


def verify_identities(G, depth, resolutions=None, r0=1.0, rel_tol=0.01, epstein=True):
    """Check the r-shift, scale and monotonicity laws and W(tau) = V_C - L/4.

    The r-shift law W(N_{r+1}) - W(N_r) = -pi chi is checked by the tube route
    and, when `epstein` is set, by the Epstein route; the scale law
    W(e^{1/2} tau) - W(tau) = -pi chi / 2 and the spot check W(0.9 tau) <= W(tau)
    use the Epstein route.
    """
    from .corehull import bending_length, boundary_area, build_core, core_volume, tube_w_volume
    from .epstein import w_volume_of_metric, w_volume_region

    res = dict(base=32, depth=5)
    res.update(resolutions or {})
    chi = G.chi_boundary
    cores = {d: build_core(G, d) for d in (depth - 1, depth)}
    core = cores[depth]

    def tube_shift(c):
        vol, bend, area = core_volume(c), bending_length(c), boundary_area(c)
        w = [tube_w_volume(c, r, vol, bend, area) for r in (0.0, r0, r0 + 1)]
        return w, vol, bend

    (w0, w1, w2), vol, bend = tube_shift(core)
    (_, v1, v2), _, _ = tube_shift(cores[depth - 1])
    shift = w2.value - w1.value
    shift_err = abs(shift - (v2.value - v1.value))
    out = [_identity("lemma2.1-tube", f"W(N_{r0 + 1:g}) - W(N_{r0:g}) = -pi chi (tube)",
                     Interval.point(shift, shift_err), -np.pi * chi, rel_tol)]
    W_core = vol[0] - bend[0] / 4
    out.append(_identity("lemma4.1-tube", "tube W(N_0) = V_C - L/4",
                         Interval.point(w0.value), W_core, 1e-9))
    if not epstein:
        return out
    kw = dict(base=res["base"], depth=res["depth"], volume=vol[0], chi=chi)
    e1 = w_volume_region(core, G, r0, **kw)
    e2 = w_volume_region(core, G, r0 + 1, **kw)
    out.append(_identity("lemma2.1-epstein", f"W(N_{r0 + 1:g}) - W(N_{r0:g}) = -pi chi (Epstein)",
                         Interval.point(e2.value - e1.value, e1.error + e2.error), -np.pi * chi, rel_tol))
    t0 = w_volume_of_metric(core, G, 0.0, **kw)
    th = w_volume_of_metric(core, G, 0.5, **kw)
    out.append(_identity("lemma2.2-scale", "W(e^(1/2) tau) - W(tau) = -pi chi / 2",
                         Interval.point(th.value - t0.value, th.error + t0.error), -np.pi * chi / 2,
                         rel_tol))
    tm = w_volume_of_metric(core, G, np.log(0.9), **kw)
    out.append(_ineq("lemma2.2-monotone", "W(0.9 tau) <= W(tau)",
                     Interval.point(tm.value, tm.error), Interval.point(t0.value, t0.error)))
    out.append(_identity("lemma4.1", "W(tau) (Epstein) = V_C - L/4 (hull)",
                         Interval.point(t0.value, t0.error), W_core, ROUTE_TOLERANCE,
                         scale=max(1.0, vol[0])))
    return out


def write_inequality_csv(path, reports):
    rows = [r.to_row() for r in reports]
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
