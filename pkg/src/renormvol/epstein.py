"""Epstein surfaces of conformal metrics and the W-volume they bound.

For a metric g on a boundary domain, the Epstein surface is the envelope of
the horospheres H(z) whose visual density at z equals g(z).  On the sphere
chart, with phi = log of the density relative to the round metric,

    X = a xi + b xi* + b grad(phi),   b = e^{-phi},   a = (1 + b^2 |grad phi|^2) / (2 b),

where xi = (1, p) and xi* = (1, -p) / 2.  Scaling g by e^s moves the surface
a distance s along its normals, so for the Thurston metric of a group the
surfaces for e^s tau are the boundaries of the s-neighbourhoods of the core.

The W-volume of the region N bounded by such a surface is
W(N) = V(N) - (1/2) int H dA, with H the mean of the principal curvatures.
"""

from dataclasses import dataclass, field

import numpy as np

from .confmetrics import HullThurstonMetric
from .hypmodels import minkowski_dot, null_vector

FD_STEP = 1e-6


# --- pointwise construction --------------------------------------------------

def epstein_from_gradient(p, phi, grad, s=0.0):
    """Epstein point for unit-sphere points p, log-density phi and tangent gradient grad (R^3)."""
    p = np.atleast_2d(p)
    b = np.exp(-(np.asarray(phi) + s))
    g2 = np.sum(grad ** 2, axis=-1)
    a = (1 + b ** 2 * g2) / (2 * b)
    X = np.empty(p.shape[:-1] + (4,))
    X[..., 0] = a + b / 2
    X[..., 1:] = (a - b / 2)[..., None] * p + b[..., None] * grad
    return X


def outward_normal(X, p):
    """Unit normal at X pointing toward the boundary point p."""
    xi = np.concatenate([np.ones(p.shape[:-1] + (1,)), p], axis=-1)
    return xi / (-minkowski_dot(X, xi))[..., None] - X


def epstein_halfspace(density, z, s=0.0, h=1e-6):
    """Epstein point in upper half-space coordinates (w, t) for a density in the z-chart.

    delta = 2 / (e^s g) is the Euclidean diameter of the horosphere at z;
    t = delta / (1 + |grad delta|^2 / 4) and w = z - (t/2) grad delta.
    """
    z = np.asarray(z, dtype=complex)
    delta = lambda q: 2.0 / (np.exp(s) * density(q))  # noqa: E731
    d0 = delta(z)
    dx = (delta(z + h) - delta(z - h)) / (2 * h)
    dy = (delta(z + 1j * h) - delta(z - 1j * h)) / (2 * h)
    t = d0 / (1 + (dx ** 2 + dy ** 2) / 4)
    w = z - t / 2 * (dx + 1j * dy)
    return w, t


def brute_force_envelope(density, z0, s=0.0, eps=1e-4):
    """Envelope point of the horosphere family by direct intersection.

    The horosphere at z is the Euclidean sphere tangent at z with diameter
    delta(z).  The envelope point solves f(X; z0) = 0 together with the
    centred differences of f in z, which are linear in X; of the two roots on
    the resulting line one is the tangency point z0 and the other is returned.
    """
    z0 = complex(z0)

    def sphere(z):
        d = 2.0 / (np.exp(s) * float(density(z)))
        c = np.array([z.real, z.imag, d / 2])
        return c, d / 2

    c0, R0 = sphere(z0)
    rows, rhs = [], []
    for e in (eps, 1j * eps):
        cp, Rp = sphere(z0 + e)
        cm, Rm = sphere(z0 - e)
        # |X|^2 - 2 X.c + |c|^2 - R^2, differenced
        rows.append(-2 * (cp - cm))
        rhs.append(-((cp @ cp - Rp ** 2) - (cm @ cm - Rm ** 2)))
    A = np.array(rows)
    b = np.array(rhs)
    x_part = np.linalg.lstsq(A, b, rcond=None)[0]
    direction = np.cross(A[0], A[1])
    direction /= np.linalg.norm(direction)
    q = x_part - c0
    bq = q @ direction
    cq = q @ q - R0 ** 2
    disc = max(bq ** 2 - cq, 0.0)
    roots = [x_part + (-bq + sgn * np.sqrt(disc)) * direction for sgn in (1, -1)]
    X = max(roots, key=lambda r: r[2])
    return complex(X[0], X[1]), float(X[2])


# --- patches on the sphere ---------------------------------------------------

@dataclass
class EpsteinPatch:
    """Sampled Epstein surface over sphere points given in (theta, phi) coordinates."""

    theta: np.ndarray
    phi: np.ndarray
    s: float
    X: np.ndarray
    normal: np.ndarray
    area_element: np.ndarray  # relative to dtheta dphi
    curvatures: np.ndarray  # (..., 2) principal curvatures
    first_form: np.ndarray
    second_form: np.ndarray
    valid: np.ndarray

    @property
    def mean_curvature(self):
        return self.curvatures.mean(axis=-1)


def sphere_point(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


class SphereLogDensity:
    """phi = log density relative to the round metric, with tangent gradient.

    Built either from a hull metric (exact per support element) or from a
    callable density in the z-chart (finite differences on the sphere).
    """

    def __init__(self, hull=None, density_z=None, h=1e-6):
        self.hull = hull
        self.density_z = density_z
        self.h = h
        self.subset = None

    def labels(self, p, full=False):
        if self.hull is None:
            return np.zeros(len(p), dtype=np.int64)
        Xi = np.concatenate([np.ones((len(p), 1)), p], axis=1)
        return self.hull.support(Xi, subset=None if full else self.subset)[1]

    def evaluate(self, p, labels):
        """(phi, grad phi) at unit vectors p using the fixed support element per point."""
        p = np.atleast_2d(p)
        if self.hull is not None:
            Xi = np.concatenate([np.ones((len(p), 1)), p], axis=1)
            # derivative of m along each ambient axis, then projected to the tangent plane
            dXi = np.zeros((3, len(p), 4))
            for k in range(3):
                dXi[k, :, k + 1] = 1.0
            m, dm = self.hull.element_value(Xi, dXi, labels)
            grad_m = dm.T - np.sum(dm.T * p, axis=1)[:, None] * p
            return -np.log(m), -grad_m / m[:, None]
        return self._numeric(p)

    def _numeric(self, p):
        from .hypmodels import sphere_to_boundary

        def logg(q):
            q = q / np.linalg.norm(q, axis=-1, keepdims=True)
            z = sphere_to_boundary(q)
            # round-metric density = |dz| density * (1 + |z|^2) / 2
            return np.log(self.density_z(z) * (1 + np.abs(z) ** 2) / 2)

        phi = logg(p)
        grad = np.zeros_like(p)
        for k in range(3):
            e = np.zeros(3)
            e[k] = self.h
            grad[:, k] = (logg(p + e) - logg(p - e)) / (2 * self.h)
        grad -= np.sum(grad * p, axis=1)[:, None] * p
        return phi, grad


def field_stencil(field, theta, phi_ang, labels=None, h=FD_STEP):
    """Field values at (theta, phi) and its four neighbours at distance h.

    The stencil does not depend on the scale s, so one stencil serves every
    surface in the parallel family.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi_ang = np.atleast_1d(np.asarray(phi_ang, dtype=float))
    if labels is None:
        labels = field.labels(sphere_point(theta, phi_ang))
    out = []
    for dt, dp in ((0, 0), (h, 0), (-h, 0), (0, h), (0, -h)):
        p = sphere_point(theta + dt, phi_ang + dp)
        f, g = field.evaluate(p, labels)
        out.append((p, f, g))
    return {"theta": theta, "phi": phi_ang, "h": h, "values": out}


def patch_from_stencil(st, s):
    h = st["h"]
    X, Xs, Us = None, [], []
    for k, (p, f, g) in enumerate(st["values"]):
        Xk = epstein_from_gradient(p, f, g, s)
        if k == 0:
            X, p0 = Xk, p
        else:
            Xs.append(Xk)
            Us.append(outward_normal(Xk, p))
    Xt = (Xs[0] - Xs[1]) / (2 * h)
    Xp = (Xs[2] - Xs[3]) / (2 * h)
    Ut = (Us[0] - Us[1]) / (2 * h)
    Up = (Us[2] - Us[3]) / (2 * h)
    E = minkowski_dot(Xt, Xt)
    Fm = minkowski_dot(Xt, Xp)
    Gm = minkowski_dot(Xp, Xp)
    I = np.stack([np.stack([E, Fm], -1), np.stack([Fm, Gm], -1)], -2)
    L11 = minkowski_dot(Xt, Ut)
    L12 = (minkowski_dot(Xt, Up) + minkowski_dot(Xp, Ut)) / 2
    L22 = minkowski_dot(Xp, Up)
    II = np.stack([np.stack([L11, L12], -1), np.stack([L12, L22], -1)], -2)
    detI = E * Gm - Fm ** 2
    J = np.sqrt(np.maximum(detI, 0.0))
    valid = detI > 1e-24
    # principal curvatures: eigenvalues of I^{-1} II
    safe = np.where(valid, detI, 1.0)
    tr = np.where(valid, (Gm * L11 - 2 * Fm * L12 + E * L22) / safe, 0.0)
    det = np.where(valid, (L11 * L22 - L12 ** 2) / safe, 0.0)
    disc = np.sqrt(np.maximum(tr ** 2 / 4 - det, 0.0))
    kappa = np.stack([tr / 2 - disc, tr / 2 + disc], axis=-1)
    return EpsteinPatch(st["theta"], st["phi"], s, X, outward_normal(X, p0), J, kappa, I, II, valid)


def epstein_patch(field, theta, phi_ang, s=0.0, labels=None, h=FD_STEP):
    """Epstein surface, area element, and curvatures at sphere points (theta, phi)."""
    return patch_from_stencil(field_stencil(field, theta, phi_ang, labels, h), s)


def induced_metrics(patch):
    """First, second, and third fundamental forms as (..., 2, 2) arrays."""
    I, II = patch.first_form, patch.second_form
    Iinv = np.linalg.inv(np.where(patch.valid[..., None, None], I, np.eye(2)))
    III = II @ Iinv @ II
    return I, II, III


# --- quadrature over a fundamental domain at infinity ------------------------

@dataclass
class BoundaryQuadrature:
    """Gauss points and weights (for dtheta dphi) covering the region at infinity.

    Cells of a (theta, phi) grid are refined where the support-element label or
    the region membership changes, so that each Gauss point sees a smooth
    integrand.
    """

    theta: np.ndarray
    phi: np.ndarray
    weight: np.ndarray
    labels: np.ndarray
    base: int
    depth: int
    stats: dict = field(default_factory=dict)


def _region_mask(p, region):
    if not len(region):
        return np.ones(len(p), dtype=bool)
    Xi = np.concatenate([np.ones((len(p), 1)), p], axis=1)
    R = np.array(region, dtype=float)
    R[:, 0] *= -1
    return np.all(Xi @ R.T >= 0, axis=1)


def build_quadrature(field, region, base=32, depth=5, verify=4000, seed=0):
    """Adaptive label-aware quadrature of the region {<xi, m_i> >= 0} on the sphere.

    When the field comes from a hull, the support search is restricted to the
    elements seen on the base grid plus two adjacency rings.  A random subset
    of the final Gauss points is re-labelled against every element; any
    mismatch enlarges the candidate set and the build is repeated.
    """
    hull = field.hull
    if hull is not None:
        field.subset = None
        nt = base
        T, P = np.meshgrid((np.arange(2 * nt) + 0.5) * np.pi / (2 * nt),
                           (np.arange(4 * nt) + 0.5) * np.pi / (2 * nt), indexing="ij")
        p = sphere_point(T.ravel(), P.ravel())
        seen = field.labels(p, full=True)[_region_mask(p, region)]
        field.subset = hull.neighbourhood(seen)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        quad = _build_quadrature(field, region, base, depth)
        if hull is None:
            return quad
        pick = rng.choice(len(quad.labels), size=min(verify, len(quad.labels)), replace=False)
        p = sphere_point(quad.theta[pick], quad.phi[pick])
        Xi = np.concatenate([np.ones((len(p), 1)), p], axis=1)
        m_full, full = hull.support(Xi)
        m_sub, _ = hull.support(Xi, subset=field.subset)
        # ties between elements of equal support value are harmless
        bad = m_sub < m_full * (1 - 1e-10)
        quad.stats["candidates"] = (len(field.subset[0]), len(field.subset[1]))
        if not bad.any():
            return quad
        seen = np.concatenate([quad.labels, full[bad]])
        field.subset = hull.neighbourhood(seen)
    raise RuntimeError("support candidate set did not stabilise")


def _region_certificate(centres, radius, region):
    """Cells certainly inside / certainly outside the region.

    <xi, m> changes by at most |m_space| * radius across a cell of
    (theta, phi) half-diagonal radius, since the sphere parametrization is
    1-Lipschitz in each coordinate.
    """
    if not len(region):
        return np.ones(len(centres), dtype=bool), np.zeros(len(centres), dtype=bool)
    p = sphere_point(centres[:, 0], centres[:, 1])
    R = np.array(region, dtype=float)
    val = p @ R[:, 1:].T - R[:, 0]
    slack = np.linalg.norm(R[:, 1:], axis=1) * radius * np.sqrt(2)
    return np.all(val - slack >= 0, axis=1), np.any(val + slack < 0, axis=1)


def _gauss_nodes(cells, ht, hp, n):
    x, w = np.polynomial.legendre.leggauss(n)
    gx, gw = (x + 1) / 2, w / 2
    TT = np.broadcast_to(cells[:, 0, None, None] + gx[None, :, None] * ht, (len(cells), n, n))
    PP = np.broadcast_to(cells[:, 1, None, None] + gx[None, None, :] * hp, (len(cells), n, n))
    WW = np.broadcast_to((gw[:, None] * gw[None, :]) * ht * hp, (len(cells), n, n))
    return TT.reshape(len(cells), -1), PP.reshape(len(cells), -1), WW.reshape(len(cells), -1)


def _indicator(field, TT, PP, labels):
    """J at s = 0 plus J at s = 1, the integrand used to steer refinement."""
    st = field_stencil(field, TT.ravel(), PP.ravel(), np.repeat(labels, TT.shape[1]))
    J = patch_from_stencil(st, 0.0).area_element + patch_from_stencil(st, 1.0).area_element
    return J.reshape(TT.shape)


def _build_quadrature(field, region, base, depth, rtol=1e-6):
    def label(th, ph):
        p = sphere_point(th, ph)
        lab = field.labels(p)
        return np.where(_region_mask(p, region), lab, -1)

    nt, nph = base, 2 * base
    dth, dph = np.pi / nt, 2 * np.pi / nph
    T0, P0 = np.meshgrid(np.arange(nt) * dth, np.arange(nph) * dph, indexing="ij")
    cells = np.stack([T0.ravel(), P0.ravel()], axis=1)
    out_t, out_p, out_w, out_l = [], [], [], []
    n_mixed = n_smooth = 0
    for level in range(depth + 1):
        if not len(cells):
            break
        ht, hp = dth / 2 ** level, dph / 2 ** level
        last = level == depth
        offs = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.5]])
        pts = cells[:, None, :] + offs[None, :, :] * np.array([ht, hp])
        labs = label(pts[..., 0].ravel(), pts[..., 1].ravel()).reshape(len(cells), 5)
        uniform = np.all(labs == labs[:, :1], axis=1)
        # a cell is uniform only if the region test is certified over the whole cell
        sure_in, sure_out = _region_certificate(cells + [ht / 2, hp / 2], np.hypot(ht, hp) / 2, region)
        uniform &= np.where(labs[:, 0] >= 0, sure_in, sure_out)
        keep = uniform & (labs[:, 0] >= 0)
        mixed = ~uniform
        n_mixed += int(mixed.sum())
        refine = mixed.copy()
        if np.any(keep):
            c, lab_c = cells[keep], labs[keep, 0]
            T3, P3, W3 = _gauss_nodes(c, ht, hp, 3)
            J3 = _indicator(field, T3, P3, lab_c)
            I3 = np.sum(J3 * W3, axis=1)
            if not last:
                T2, P2, W2 = _gauss_nodes(c, ht, hp, 2)
                I2 = np.sum(_indicator(field, T2, P2, lab_c) * W2, axis=1)
                rough = np.abs(I3 - I2) > rtol * max(np.sum(I3), 1e-300) + 1e-3 * np.abs(I3)
            else:
                rough = np.zeros(len(c), dtype=bool)
            n_smooth += int(rough.sum())
            ok = ~rough
            out_t.append(T3[ok].ravel())
            out_p.append(P3[ok].ravel())
            out_w.append(W3[ok].ravel())
            out_l.append(np.repeat(lab_c[ok], 9))
            idx = np.nonzero(keep)[0]
            refine[idx[rough]] = True
        if last and np.any(mixed):
            T3, P3, W3 = _gauss_nodes(cells[mixed], ht, hp, 3)
            LL = label(T3.ravel(), P3.ravel())
            inside = LL >= 0
            out_t.append(T3.ravel()[inside])
            out_p.append(P3.ravel()[inside])
            out_w.append(W3.ravel()[inside])
            out_l.append(LL[inside])
        if last:
            break
        c = cells[refine]
        cells = np.concatenate([c, c + [ht / 2, 0], c + [0, hp / 2], c + [ht / 2, hp / 2]])
    return BoundaryQuadrature(np.concatenate(out_t), np.concatenate(out_p), np.concatenate(out_w),
                              np.concatenate(out_l), base, depth,
                              {"mixed_cells": n_mixed, "rough_cells": n_smooth})


@dataclass
class SurfaceIntegrals:
    s: float
    area: float
    mean_curvature_integral: float  # int H dA
    min_area_element: float


def surface_integrals(field, quad, s_values, chunk=200000):
    """Area and int H dA over the quadrature region for each s (list in, list out)."""
    scalar = np.ndim(s_values) == 0
    s_values = np.atleast_1d(s_values)
    area = np.zeros(len(s_values))
    hint = np.zeros(len(s_values))
    jmin = np.full(len(s_values), np.inf)
    for a in range(0, len(quad.weight), chunk):
        sl = slice(a, a + chunk)
        st = field_stencil(field, quad.theta[sl], quad.phi[sl], quad.labels[sl])
        w = quad.weight[sl]
        for i, s in enumerate(s_values):
            patch = patch_from_stencil(st, s)
            J = patch.area_element
            area[i] += np.sum(w * J)
            hint[i] += np.sum(w * J * patch.mean_curvature)
            jmin[i] = min(jmin[i], J.min())
    out = [SurfaceIntegrals(float(s), float(A), float(Hd), float(j))
           for s, A, Hd, j in zip(s_values, area, hint, jmin)]
    return out[0] if scalar else out


@dataclass
class AreaProfile:
    """A(s) = alpha e^{2s} + beta + gamma e^{-2s} fitted to sampled areas."""

    s: np.ndarray
    area: np.ndarray
    coeffs: np.ndarray
    fit_residual: float

    def __call__(self, s):
        a, b, c = self.coeffs
        return a * np.exp(2 * s) + b + c * np.exp(-2 * s)

    def derivative(self, s):
        a, _, c = self.coeffs
        return 2 * a * np.exp(2 * s) - 2 * c * np.exp(-2 * s)

    def integral(self, s0, s1):
        a, b, c = self.coeffs
        return (a / 2 * (np.exp(2 * s1) - np.exp(2 * s0)) + b * (s1 - s0)
                - c / 2 * (np.exp(-2 * s1) - np.exp(-2 * s0)))


def area_profile(field, quad, s_values):
    s_values = np.asarray(s_values, dtype=float)
    A = np.array([r.area for r in surface_integrals(field, quad, s_values)])
    M = np.stack([np.exp(2 * s_values), np.ones_like(s_values), np.exp(-2 * s_values)], axis=1)
    coeffs, *_ = np.linalg.lstsq(M, A, rcond=None)
    resid = float(np.max(np.abs(M @ coeffs - A)) / max(1.0, np.max(np.abs(A))))
    return AreaProfile(s_values, A, coeffs, resid)


@dataclass
class EpsteinWVolume:
    value: float
    error: float
    volume: float
    half_mean_curvature: float
    r: float
    scale: float
    profile: AreaProfile
    direct_half_mean: float
    details: dict = field(default_factory=dict)


def _w_volume_once(field, quad, core_volume, u, chi, r, s_nodes):
    res = surface_integrals(field, quad, list(s_nodes) + [u])
    A = np.array([x.area for x in res[:-1]])
    s_nodes = np.asarray(s_nodes, dtype=float)
    M = np.stack([np.exp(2 * s_nodes), np.ones_like(s_nodes), np.exp(-2 * s_nodes)], axis=1)
    coeffs, *_ = np.linalg.lstsq(M, A, rcond=None)
    resid = float(np.max(np.abs(M @ coeffs - A)) / max(1.0, np.max(np.abs(A))))
    prof = AreaProfile(s_nodes, A, coeffs, resid)
    vol = core_volume + prof.integral(0.0, u)
    half_H_fit = prof.derivative(u) / 4
    direct = res[-1].mean_curvature_integral / 2
    W = vol - direct + np.pi * r * chi
    return W, prof, vol, direct, half_H_fit


_QUAD_CACHE = {}


def epstein_quadrature(core, G, base=32, depth=5):
    """Cached (field, quadrature) pair for the Thurston metric of a core."""
    key = (id(core), base, depth)
    if key not in _QUAD_CACHE:
        fld = SphereLogDensity(hull=HullThurstonMetric(core))
        region = [np.asarray(f.plane.n) for f in G.faces]
        _QUAD_CACHE[key] = (core, fld, build_quadrature(fld, region, base=base, depth=depth))
    return _QUAD_CACHE[key][1:]


def w_volume_of_metric(core, G, scale=0.0, r=1.0, base=32, depth=5, volume=None, chi=None):
    """W-volume of e^scale * tau from Epstein surfaces of the Thurston metric.

    The surface for e^r (e^scale tau) is the boundary of the (r + scale)-
    neighbourhood of the core, whose volume is V_C plus the integral of the
    surface areas A(s).  Then W(h) = W(N_r(h)) + pi r chi.  The error is the
    change between quadrature refinement depths depth - 1 and depth.
    """
    from .corehull import core_volume as _core_volume

    u = r + scale
    if u <= 0:
        raise ValueError("r + scale must be positive so the surface lies outside the core")
    V = volume if volume is not None else _core_volume(core)[0]
    chi = G.chi_boundary if chi is None else chi
    s_nodes = np.linspace(0.0, max(u, 1.0), 5)
    results = []
    for d in (depth - 1, depth):
        fld, quad = epstein_quadrature(core, G, base, d)
        results.append(_w_volume_once(fld, quad, V, u, chi, r, s_nodes) + (quad,))
    W, prof, vol, direct, half_fit, quad = results[-1]
    err = abs(results[-1][0] - results[0][0])
    return EpsteinWVolume(float(W), float(err), float(vol), float(direct), r, scale, prof,
                          float(half_fit), {"coarse": float(results[0][0]), "points": len(quad.weight),
                                            "mixed_cells": quad.stats["mixed_cells"],
                                            "fit_residual": prof.fit_residual})


def w_volume_region(core, G, u, **kw):
    """W(N) for N the u-neighbourhood of the core (reference body: the core itself)."""
    res = w_volume_of_metric(core, G, scale=u, r=0.0, **kw)
    return res


def export_mesh(path, patch, shape):
    """Write surface vertices (ball model) and quad faces as a Wavefront OBJ file."""
    from .hypmodels import hyperboloid_to_ball

    B = hyperboloid_to_ball(patch.X).reshape(shape + (3,))
    nt, np_ = shape
    with open(path, "w") as fh:
        for v in B.reshape(-1, 3):
            fh.write(f"v {v[0]:.10g} {v[1]:.10g} {v[2]:.10g}\n")
        for i in range(nt - 1):
            for j in range(np_ - 1):
                a = i * np_ + j + 1
                fh.write(f"f {a} {a + 1} {a + np_ + 1} {a + np_}\n")


def halfspace_density_from_sphere(z, sphere_density):
    """Convert a round-metric density to the |dz| density at finite z."""
    return sphere_density * 2 / (1 + np.abs(z) ** 2)


__all__ = [
    "EpsteinPatch", "epstein_from_gradient", "epstein_halfspace", "brute_force_envelope",
    "epstein_patch", "induced_metrics", "build_quadrature", "surface_integrals",
    "area_profile", "w_volume_of_metric", "w_volume_region", "export_mesh",
    "SphereLogDensity", "null_vector",
]
