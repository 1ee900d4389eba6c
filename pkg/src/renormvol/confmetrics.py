"""Conformal metrics on plane domains: Thurston, Poincare, and their comparison.

Densities are with respect to |dz| in the plane chart unless a function says
it works on the round sphere.  On a group domain the Thurston density comes
from the support planes of the hull of the limit set:

    tau(z) = 1 / max_n <N(z), n>,

the maximum taken over outward support normals n (facets and the pencils of
planes through hull edges).  This is the infimum of the disk densities
1/<N(z), n> over all round disks {<N, n> > 0} avoiding the limit set.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from .hypmodels import Isometry, minkowski_dot, null_vector

K_BILIP = 4 + np.log(3 + 2 * np.sqrt(2))


class SolverDivergence(RuntimeError):
    pass


# --- domains -----------------------------------------------------------------

@dataclass
class DomainModel:
    """A hyperbolic plane domain.

    kind: "disk" (center, radius), "halfplane" (upper half-plane),
    "strip" (0 < Im z < width), "annulus" (r_in < |z| < r_out), or "group".
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def disk(cls, center=0j, radius=1.0):
        return cls("disk", {"center": complex(center), "radius": float(radius)})

    @classmethod
    def halfplane(cls):
        return cls("halfplane", {})

    @classmethod
    def strip(cls, width=1.0):
        return cls("strip", {"width": float(width)})

    @classmethod
    def annulus(cls, r_in=1.0, r_out=np.e):
        return cls("annulus", {"r_in": float(r_in), "r_out": float(r_out)})

    @classmethod
    def group(cls, G, core, sample=None):
        return cls("group", {"group": G, "core": core, "sample": sample})

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        k, p = self.kind, self.params
        if k == "disk":
            return np.abs(z - p["center"]) < p["radius"]
        if k == "halfplane":
            return z.imag > 0
        if k == "strip":
            return (z.imag > 0) & (z.imag < p["width"])
        if k == "annulus":
            return (np.abs(z) > p["r_in"]) & (np.abs(z) < p["r_out"])
        if k == "group":
            return self.complement_distance(z) > 0
        raise ValueError(k)

    def complement_distance(self, z):
        """Euclidean distance from z to the complement (<= 0 outside)."""
        z = np.asarray(z, dtype=complex)
        k, p = self.kind, self.params
        if k == "disk":
            return p["radius"] - np.abs(z - p["center"])
        if k == "halfplane":
            return z.imag
        if k == "strip":
            return np.minimum(z.imag, p["width"] - z.imag)
        if k == "annulus":
            r = np.abs(z)
            return np.minimum(r - p["r_in"], p["r_out"] - r)
        if k == "group":
            sample = p["sample"]
            pts = sample.points[np.isfinite(sample.points)]
            d = np.min(np.abs(np.atleast_1d(z)[:, None] - pts[None, :]), axis=1)
            # inflate the complement by the sample's Hausdorff error
            d = d - sample.eps
            return d if np.ndim(z) else float(d[0])
        raise ValueError(k)


# --- metric fields -----------------------------------------------------------

@dataclass
class ConformalMetricField:
    """Density lambda(z) with provenance; scaled fields evaluate e^s base(z)."""

    domain: DomainModel
    density_fn: object
    provenance: str
    scale: float = 0.0
    base: object = None

    def __call__(self, z):
        return np.exp(self.scale) * self.density_fn(z)

    def gradient(self, z, h=1e-6):
        z = np.asarray(z, dtype=complex)
        dx = (self(z + h) - self(z - h)) / (2 * h)
        dy = (self(z + 1j * h) - self(z - 1j * h)) / (2 * h)
        return dx, dy


def scale_metric(h, s):
    """The field e^s h, recorded as scaled(s, base)."""
    base = h.base if h.base is not None else h
    total = h.scale + s
    return ConformalMetricField(h.domain, h.density_fn, f"scaled({total:g}, {base.provenance})",
                                total, base)


def poincare_exact(domain, z):
    z = np.asarray(z, dtype=complex)
    k, p = domain.kind, domain.params
    if k == "disk":
        R = p["radius"]
        return 2 * R / (R ** 2 - np.abs(z - p["center"]) ** 2)
    if k == "halfplane":
        return 1.0 / z.imag
    if k == "strip":
        w = p["width"]
        return (np.pi / w) / np.sin(np.pi * z.imag / w)
    if k == "annulus":
        r = np.abs(z)
        logm = np.log(p["r_out"] / p["r_in"])
        return np.pi / (r * logm * np.sin(np.pi * np.log(r / p["r_in"]) / logm))
    raise ValueError(f"no closed form for {k}")


def thurston_exact(domain, z):
    """Closed-form Thurston density from the maximal-disk description."""
    z = np.asarray(z, dtype=complex)
    k, p = domain.kind, domain.params
    if k in ("disk", "halfplane"):
        return poincare_exact(domain, z)
    if k == "strip":
        w = p["width"]
        y = z.imag
        return w / (y * (w - y))
    if k == "annulus":
        a, b = p["r_in"], p["r_out"]
        m, r = (a + b) / 2, (b - a) / 2
        return 2 * r / (r ** 2 - (np.abs(z) - m) ** 2)
    raise ValueError(f"no closed form for {k}")


@dataclass
class DiskWitness:
    center: complex
    radius: float
    density: float
    bracket: tuple = None


def _disk_density(z, c, R):
    return 2 * R / (R ** 2 - abs(z - c) ** 2)


def thurston_density(domain, z, starts=8, polish=64, seed=0):
    """tau(z) as the infimum of rho_D(z) over round disks D in the domain containing z.

    A disk centred at c is taken as large as the complement allows, R = d(c),
    which is optimal for fixed c.  Multistart local search over c followed by
    a brute-force polish on a polish x polish grid of centres around the best.
    Returns (tau, DiskWitness).
    """
    if domain.kind == "group" and "core" in domain.params and domain.params.get("sample") is None:
        raise ValueError("group domains need a limit sample for the disk search")
    z = complex(z)
    d = lambda c: float(domain.complement_distance(complex(c)))  # noqa: E731
    dz = d(z)
    if dz <= 0:
        raise ValueError("z is not in the domain")

    def f(v):
        c = complex(v[0], v[1])
        R = d(c)
        a = abs(z - c)
        if R <= a:
            return 1e300
        return _disk_density(z, c, R)

    rng = np.random.default_rng(seed)
    best = (f([z.real, z.imag]), z)
    for k in range(starts):
        if k == 0:
            x0 = np.array([z.real, z.imag])
        else:
            ang = rng.uniform(0, 2 * np.pi)
            rad = dz * rng.uniform(0, 0.95)
            x0 = np.array([z.real + rad * np.cos(ang), z.imag + rad * np.sin(ang)])
        res = minimize(f, x0, method="Nelder-Mead",
                       options={"xatol": 1e-13 * max(1, dz), "fatol": 1e-15, "maxiter": 4000})
        if res.fun < best[0]:
            best = (res.fun, complex(res.x[0], res.x[1]))
    # brute-force polish around the best centre
    c0 = best[1]
    span = 0.05 * dz
    for _ in range(3):
        g = np.linspace(-span, span, polish)
        C = c0 + g[:, None] + 1j * g[None, :]
        R = np.asarray(domain.complement_distance(C.ravel())).reshape(C.shape)
        A = np.abs(z - C)
        vals = np.where(R > A, 2 * R / np.maximum(R ** 2 - A ** 2, 1e-300), np.inf)
        i = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[i] < best[0]:
            best = (float(vals[i]), complex(C[i]))
            c0 = best[1]
        span /= 8
    res = minimize(f, [best[1].real, best[1].imag], method="Nelder-Mead",
                   options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 4000})
    if res.fun < best[0]:
        best = (res.fun, complex(res.x[0], res.x[1]))
    c = best[1]
    return best[0], DiskWitness(c, d(c), best[0])


# --- Thurston metric of a group domain from hull support planes --------------

class HullThurstonMetric:
    """tau from the support planes of a polyhedral core.

    Element labels: 0..F-1 are facets, F..F+E-1 are edge pencils.
    """

    def __init__(self, core, flat_angle=1e-9):
        self.core = core
        self.normals = np.asarray(core.normals, dtype=float)
        self.F = len(self.normals)
        faces, _ = core.edges()
        u1, u2, th, pairs = [], [], [], []
        for a, b in faces:
            na, nb = self.normals[a], self.normals[b]
            c = float(np.clip(minkowski_dot(na, nb), -1, 1))
            t = np.arccos(c)
            if t < flat_angle:
                continue
            u1.append(na)
            u2.append((nb - c * na) / np.sin(t))
            th.append(t)
            pairs.append((a, b))
        self.edge_pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
        self.u1 = np.array(u1).reshape(-1, 4)
        self.u2 = np.array(u2).reshape(-1, 4)
        self.theta = np.array(th)
        self.E = len(self.theta)
        self._Mf = self._lorentz_cols(self.normals)
        self._M1 = self._lorentz_cols(self.u1)
        self._M2 = self._lorentz_cols(self.u2)

    def transformed(self, L):
        """The same metric pushed forward by a Lorentz matrix (a Mobius change of chart)."""
        new = object.__new__(HullThurstonMetric)
        new.core = self.core
        new.F, new.E, new.theta = self.F, self.E, self.theta
        new.edge_pairs = self.edge_pairs
        new.normals = self.normals @ L.T
        new.u1 = self.u1 @ L.T
        new.u2 = self.u2 @ L.T
        new._Mf = self._lorentz_cols(new.normals)
        new._M1 = self._lorentz_cols(new.u1)
        new._M2 = self._lorentz_cols(new.u2)
        return new

    @staticmethod
    def _lorentz_cols(V):
        W = np.array(V, dtype=float).reshape(-1, 4).copy()
        W[:, 0] *= -1
        return W.T

    def support(self, Xi, chunk=None, subset=None):
        """max <Xi, n> over support planes and the maximizing element label.

        subset: optional (facet_ids, edge_ids) restricting the candidates;
        labels are always global.
        """
        Xi = np.atleast_2d(Xi)
        if subset is None:
            fid, eid = np.arange(self.F), np.arange(self.E)
            Mf, M1, M2, th = self._Mf, self._M1, self._M2, self.theta
        else:
            fid, eid = (np.asarray(a, dtype=np.int64) for a in subset)
            Mf, M1, M2, th = self._Mf[:, fid], self._M1[:, eid], self._M2[:, eid], self.theta[eid]
        if chunk is None:
            # keep each (points x elements) work array near 16 MB
            chunk = int(np.clip(2_000_000 // max(1, len(fid) + len(eid)), 16, 8192))
        best = np.empty(len(Xi))
        lab = np.empty(len(Xi), dtype=np.int64)
        for s in range(0, len(Xi), chunk):
            x = Xi[s:s + chunk]
            vf = x @ Mf
            jf = np.argmax(vf, axis=1)
            best_c = vf[np.arange(len(x)), jf]
            lab_c = fid[jf]
            if len(eid):
                c1 = x @ M1
                c2 = x @ M2
                ang = np.arctan2(c2, c1)
                inside = (ang > 0) & (ang < th[None, :])
                ve = np.where(inside, np.hypot(c1, c2), -np.inf)
                je = np.argmax(ve, axis=1)
                be = ve[np.arange(len(x)), je]
                use = be > best_c
                best_c = np.where(use, be, best_c)
                lab_c = np.where(use, self.F + eid[je], lab_c)
            best[s:s + chunk] = best_c
            lab[s:s + chunk] = lab_c
        return best, lab

    def neighbourhood(self, labels, rings=2):
        """Facet and edge ids within a few adjacency rings of the given labels."""
        labels = np.unique(labels[labels >= 0])
        fac = set(labels[labels < self.F].tolist())
        for e in labels[labels >= self.F] - self.F:
            fac.update(self.edge_pairs[e].tolist())
        P = self.edge_pairs
        for _ in range(rings):
            hit = np.isin(P[:, 0], list(fac)) | np.isin(P[:, 1], list(fac))
            fac.update(P[hit].ravel().tolist())
        fid = np.array(sorted(fac), dtype=np.int64)
        eid = np.nonzero(np.isin(P[:, 0], fid) & np.isin(P[:, 1], fid))[0]
        return fid, eid

    def element_value(self, Xi, dXi, labels):
        """Value m = <Xi, n_label> (or pencil norm) and its derivative along dXi."""
        Xi = np.atleast_2d(Xi)
        m = np.empty(len(Xi))
        dm = np.empty(dXi.shape[:-1])
        fac = labels < self.F
        if np.any(fac):
            n = self.normals[labels[fac]]
            m[fac] = minkowski_dot(Xi[fac], n)
            dm[..., fac] = minkowski_dot(dXi[..., fac, :], n)
        ed = ~fac
        if np.any(ed):
            e = labels[ed] - self.F
            a1 = minkowski_dot(Xi[ed], self.u1[e])
            a2 = minkowski_dot(Xi[ed], self.u2[e])
            m[ed] = np.hypot(a1, a2)
            d1 = minkowski_dot(dXi[..., ed, :], self.u1[e])
            d2 = minkowski_dot(dXi[..., ed, :], self.u2[e])
            dm[..., ed] = (a1 * d1 + a2 * d2) / m[ed]
        return m, dm

    def density_sphere(self, p):
        """Density with respect to the round metric at unit-sphere points p."""
        p = np.atleast_2d(p)
        Xi = np.concatenate([np.ones((len(p), 1)), p], axis=1)
        m, _ = self.support(Xi)
        return 1.0 / m

    def density(self, z):
        """Density with respect to |dz|."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        m, _ = self.support(null_vector(z))
        return 1.0 / m

    def retraction_labels(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return self.support(null_vector(z))[1]


def group_thurston_field(G, core):
    metric = HullThurstonMetric(core)
    dom = DomainModel.group(G, core)
    return ConformalMetricField(dom, metric.density, "thurston")


# --- Poincare metric: exact cases, comparison intervals, grid solver ---------

def comparison_constant(nu=None, simply_connected=False):
    """2 for simply connected domains, otherwise 2 sqrt 2 (k + pi^2 / (2 nu))."""
    if simply_connected:
        return 2.0
    if nu is None or not nu > 0:
        raise ValueError("injectivity radius required")
    return 2 * np.sqrt(2) * (K_BILIP + np.pi ** 2 / (2 * nu))


def poincare_density(domain, z, nu=None, solver=None):
    """Exact density for model domains; for group domains an interval [tau/B, tau].

    When a solved Poincare field is supplied (see AutomorphicLiouville) its value
    is returned as the point estimate inside the interval.
    """
    if domain.kind != "group":
        return poincare_exact(domain, z)
    G = domain.params["group"]
    metric = HullThurstonMetric(domain.params["core"])
    tau = metric.density(z)
    B = comparison_constant(nu, simply_connected=not G.compressible)
    lo, hi = tau / B, tau
    if solver is not None:
        est = solver.density(z)
        return lo, np.clip(est, lo, hi), hi
    return lo, hi


def _laplacian(nx, ny, hx, hy):
    ex = np.ones(nx)
    ey = np.ones(ny)
    Dx = sp.diags([ex[:-1], -2 * ex, ex[:-1]], [-1, 0, 1]) / hx ** 2
    Dy = sp.diags([ey[:-1], -2 * ey, ey[:-1]], [-1, 0, 1]) / hy ** 2
    return (sp.kron(Dx, sp.identity(ny)) + sp.kron(sp.identity(nx), Dy)).tocsr()


@dataclass
class LiouvilleResult:
    x: np.ndarray
    y: np.ndarray
    density: np.ndarray  # lambda on the grid (nan where undefined)
    residual: float
    iterations: int
    history: list

    def to_json(self):
        return {"residual": self.residual, "iterations": self.iterations, "history": self.history}


def solve_liouville(x, y, interior, boundary, u0=None, relations=None, tol=1e-10,
                    max_iter=60, damping=1.0):
    """Damped Newton for Delta log(lambda) = lambda^2 on a rectangular grid.

    interior: bool mask (nx, ny) of PDE nodes.  boundary: lambda values used at
    the non-interior nodes (nan where a relation defines the node instead).
    relations: optional list of (node_index, [(idx, weight), ...], const) giving
    u[node] = sum w u[idx] + const with u = log lambda.
    """
    nx, ny = len(x), len(y)
    hx, hy = x[1] - x[0], y[1] - y[0]
    N = nx * ny
    L = _laplacian(nx, ny, hx, hy)
    inner = interior.ravel()
    bval = np.log(np.where(np.isfinite(boundary), boundary, 1.0)).ravel()
    rel_nodes = np.zeros(N, dtype=bool)
    R_rows, R_cols, R_vals, R_const = [], [], [], np.zeros(N)
    for node, terms, const in relations or []:
        rel_nodes[node] = True
        R_rows.append(node)
        R_cols.append(node)
        R_vals.append(1.0)
        for idx, w in terms:
            R_rows.append(node)
            R_cols.append(idx)
            R_vals.append(-w)
        R_const[node] = const
    R = sp.csr_matrix((R_vals, (R_rows, R_cols)), shape=(N, N))
    fixed = ~inner & ~rel_nodes
    u = (np.log(u0).ravel() if u0 is not None else bval.copy())
    u[fixed] = bval[fixed]
    Pi = sp.diags(inner.astype(float))
    Pf = sp.diags(fixed.astype(float))

    def residual(u):
        r = np.zeros(N)
        Lu = L @ u
        r[inner] = Lu[inner] - np.exp(2 * u[inner])
        r[fixed] = u[fixed] - bval[fixed]
        rr = R @ u - R_const
        r[rel_nodes] = rr[rel_nodes]
        return r

    history = []
    r = residual(u)
    for it in range(max_iter):
        nr = float(np.max(np.abs(r[inner]))) if inner.any() else 0.0
        history.append(nr)
        # rounding floor of the residual: the discrete operator has terms of size |u| / h^2
        floor = 64 * np.finfo(float).eps * (np.max(np.abs(u)) * (2 / hx ** 2 + 2 / hy ** 2)
                                            + np.max(np.exp(2 * u[inner]), initial=0.0))
        if nr < max(tol, floor):
            break
        J = Pi @ (L - sp.diags(2 * np.exp(2 * u))) + Pf + R
        du = spla.spsolve(J.tocsc(), -r)
        step = damping
        for _ in range(30):
            un = u + step * du
            rn = residual(un)
            if np.max(np.abs(rn[inner])) < nr or step < 1e-6:
                break
            step /= 2
        u, r = un, rn
    else:
        raise SolverDivergence(f"Newton did not converge: residual {history[-1]:.3g}")
    lam = np.exp(u).reshape(nx, ny)
    defined = inner.reshape(nx, ny) | rel_nodes.reshape(nx, ny) | fixed.reshape(nx, ny)
    lam = np.where(defined, lam, np.nan)
    return LiouvilleResult(x, y, lam, history[-1], len(history), history)


def discrete_curvature(res):
    """-Delta log(lambda) / lambda^2 at interior grid nodes (nan elsewhere)."""
    u = np.log(res.density)
    hx, hy = res.x[1] - res.x[0], res.y[1] - res.y[0]
    K = np.full(u.shape, np.nan)
    lap = ((u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / hx ** 2
           + (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hy ** 2)
    K[1:-1, 1:-1] = -lap / res.density[1:-1, 1:-1] ** 2
    return K


class AutomorphicLiouville:
    """Poincare metric of a Schottky domain, solved on one fundamental domain.

    The group is conjugated by z -> r0 / (z - c0) so that the exterior of the
    first pairing circle becomes the unit disk; the fundamental domain is then
    bounded.  Grid nodes just outside the domain are tied to interior values
    through the automorphy u(q) = u(g q) + log|g'(q)|.
    """

    def __init__(self, G, core, n=201, margin=0.02, tol=1e-9):
        c0, r0 = G.circles[0][0], G.circles[0][1]
        self.M = Isometry(0, r0, 1, -c0)
        self.Minv = self.M.inverse()
        self.G = G
        self.faces = [(_conjugate_plane(self.M, f.plane.n), self.M @ f.to_region @ self.Minv)
                      for f in G.faces]
        self.metric = HullThurstonMetric(core)
        self.chart_metric = self.metric.transformed(self.M.lorentz())
        lim = 1 + margin
        self.x = np.linspace(-lim, lim, n)
        self.y = np.linspace(-lim, lim, n)
        self.h = self.x[1] - self.x[0]
        self._solve(tol)

    # chart helpers
    def _in_region(self, w, tol=0.0):
        Nw = null_vector(w)
        ok = np.ones(np.shape(w), dtype=bool)
        for n, _ in self.faces:
            ok &= minkowski_dot(Nw, n) >= -tol
        return ok

    def _reduce(self, w, max_steps=40):
        w = np.array(w, dtype=complex, copy=True)
        logd = np.zeros(w.shape)
        for _ in range(max_steps):
            Nw = null_vector(w)
            moved = np.zeros(w.shape, dtype=bool)
            for n, g in self.faces:
                bad = (~moved) & (minkowski_dot(Nw, n) < 0)
                if np.any(bad):
                    logd[bad] += np.log(g.derivative(w[bad]))
                    w[bad] = g(w[bad])
                    moved |= bad
            if not moved.any():
                break
        return w, logd

    def _solve(self, tol):
        x, y = self.x, self.y
        nx, ny = len(x), len(y)
        W = x[:, None] + 1j * y[None, :]
        inner = self._in_region(W)
        idx = lambda i, j: i * ny + j  # noqa: E731
        need = set()
        for i, j in zip(*np.nonzero(inner)):
            for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if not inner[a, b]:
                    need.add((a, b))
        relations = {}
        rounds = 0
        while need and rounds < 20:
            rounds += 1
            new = set()
            for a, b in need:
                if (a, b) in relations:
                    continue
                q = W[a, b]
                gq, logd = self._reduce(np.array([q]))
                gq = gq[0]
                fi = (gq.real - x[0]) / self.h
                fj = (gq.imag - y[0]) / self.h
                i0 = int(np.clip(np.floor(fi), 0, nx - 2))
                j0 = int(np.clip(np.floor(fj), 0, ny - 2))
                s, t = fi - i0, fj - j0
                terms = []
                for (di, dj), wgt in (((0, 0), (1 - s) * (1 - t)), ((1, 0), s * (1 - t)),
                                      ((0, 1), (1 - s) * t), ((1, 1), s * t)):
                    ii, jj = i0 + di, j0 + dj
                    terms.append((idx(ii, jj), wgt))
                    if not inner[ii, jj] and (ii, jj) not in relations:
                        new.add((ii, jj))
                # lambda(q) = lambda(gq) |g'(q)|
                relations[(a, b)] = (idx(a, b), terms, float(logd[0]))
            need = new - set(relations)
        rel = list(relations.values())
        u0 = self.chart_metric.density(W.ravel()).reshape(nx, ny)
        boundary = np.where(inner, np.nan, u0)
        boundary = np.where(np.isfinite(boundary), boundary, 1.0)
        self.result = solve_liouville(x, y, inner, boundary, u0=u0, relations=rel, tol=tol)
        self.inner = inner
        self.relation_nodes = np.zeros((nx, ny), dtype=bool)
        for a, b in relations:
            self.relation_nodes[a, b] = True
        self._u = np.log(self.result.density)

    def _interp(self, w):
        x, y = self.x, self.y
        fi = (w.real - x[0]) / self.h
        fj = (w.imag - y[0]) / self.h
        i0 = np.clip(np.floor(fi).astype(int), 0, len(x) - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, len(y) - 2)
        s, t = fi - i0, fj - j0
        u = self._u
        return ((1 - s) * (1 - t) * u[i0, j0] + s * (1 - t) * u[i0 + 1, j0]
                + (1 - s) * t * u[i0, j0 + 1] + s * t * u[i0 + 1, j0 + 1])

    def density_chart(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        gw, logd = self._reduce(w)
        return np.exp(self._interp(gw) + logd)

    def density(self, z):
        """Poincare density in the original chart."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        w = self.M(z)
        return self.density_chart(w) * self.M.derivative(z)

    def meridian_length(self, k, modes=6, npts=256):
        """Shortest Poincare length of a closed curve homotopic to pairing circle k (chart search)."""
        n = self.faces[k][0]
        kind = _plane_circle(n)
        c, R = kind
        phi = np.linspace(0, 2 * np.pi, npts, endpoint=False)

        def curve(a):
            logr = np.zeros_like(phi) + a[0]
            for m in range(1, modes + 1):
                logr += a[2 * m - 1] * np.cos(m * phi) + a[2 * m] * np.sin(m * phi)
            return c + R * np.exp(logr) * np.exp(1j * phi)

        def length(a):
            w = curve(a)
            dw = np.roll(w, -1) - w
            mid = w + dw / 2
            return float(np.sum(self.density_chart(mid) * np.abs(dw)))

        a0 = np.zeros(2 * modes + 1)
        res = minimize(length, a0, method="Powell", options={"xtol": 1e-6, "ftol": 1e-10, "maxiter": 20000})
        return min(res.fun, length(a0))


def _conjugate_plane(M, n):
    from .hypmodels import lorentz_matrix

    v = lorentz_matrix(M.m) @ n
    return v / np.sqrt(minkowski_dot(v, v))


def _plane_circle(n):
    n0, n1, n2, n3 = n
    k = (n3 - n0) / 2
    c = -complex(n1, n2) / (2 * k)
    R = np.sqrt(abs(c) ** 2 + (n0 + n3) / (2 * k))
    return c, R


def injectivity_radius_poincare(G, core, n=161, modes=4):
    """Estimate of nu, the injectivity radius of the Poincare metric on the domain.

    For Schottky groups the search covers closed curves homotopic to the
    pairing-circle meridians.  The grid solve is second order, so the two
    resolutions n and 2n-1 are combined by Richardson extrapolation; the
    returned interval is the extrapolated value widened by the correction.
    Returns (lower, upper, details).
    """
    if not G.compressible:
        return np.inf, np.inf, {"reason": "no compressible curves"}
    vals = []
    for res_n in (n, 2 * (n - 1) + 1):
        solver = AutomorphicLiouville(G, core, n=res_n)
        lengths = [solver.meridian_length(k, modes=modes) for k in range(0, len(G.faces), 2)]
        vals.append(min(lengths) / 2)
    corr = (vals[1] - vals[0]) / 3
    est = vals[1] + corr
    return est - 2 * abs(corr), est + 2 * abs(corr), {"by_resolution": vals, "extrapolated": est}


def fuchsian_systole(G, depth=3):
    """Half the shortest translation length among words of length <= depth."""
    from .kleinian import enumerate_words

    best, word = np.inf, None
    for w, g in enumerate_words(G, depth):
        if not w:
            continue
        ell = g.translation_length()
        if ell < best - 1e-12:
            best, word = ell, w
    return best / 2, word


@dataclass
class RatioStats:
    min: float
    max: float
    mean: float
    bound: float
    passed: bool


def compare_metrics(tau, rho, bound=None):
    """Statistics of tau / rho on a shared sample; pass if rho <= tau <= bound * rho."""
    tau = np.asarray(tau, dtype=float)
    rho = np.asarray(rho, dtype=float)
    q = tau / rho
    b = np.inf if bound is None else bound
    ok = bool(np.all(q >= 1 - 1e-9) and np.all(q <= b))
    return RatioStats(float(q.min()), float(q.max()), float(q.mean()), float(b), ok)


def export_csv(path, z, lam):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "density"])
        for zi, li in zip(np.ravel(z), np.ravel(lam)):
            w.writerow([f"{zi.real:.17g}", f"{zi.imag:.17g}", f"{li:.17g}"])


def export_residual_log(path, result):
    with open(path, "w") as fh:
        json.dump(result.to_json(), fh, indent=2)
