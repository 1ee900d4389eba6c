"""Polyhedral convex cores in the Klein model.

The hull of a limit-set sample is a Euclidean convex hull in Klein
coordinates.  Quotient quantities are read off the compact polytope
P = hull ∩ (fundamental region), which is again a Euclidean polytope
because the region is an intersection of half-spaces.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.spatial import ConvexHull

from .hypmodels import MINKOWSKI, klein_to_hyperboloid, minkowski_dot
from .kleinian import sample_limit_set

IDEAL_TOL = 1e-12
FLAT_ANGLE = 1e-7
VOLUME_FLOOR = 1e-14


class DegenerateCoreError(ValueError):
    pass


# --- Lobachevsky function and tetrahedra ---------------------------------------

def lobachevsky(theta):
    """Lobachevsky function by quadrature of -log|2 sin t|."""
    theta = float(theta)
    k = np.floor(theta / np.pi)
    r = theta - k * np.pi
    if r == 0:
        return 0.0
    val, _ = quad(lambda t: -np.log(abs(2 * np.sin(t))), 0, r, limit=200)
    return val


def ideal_tetrahedron_volume(alpha, beta, gamma):
    return lobachevsky(alpha) + lobachevsky(beta) + lobachevsky(gamma)


def _gauss_tetra(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    u, v, s = np.meshgrid(x, x, x, indexing="ij")
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :])
    return u.ravel(), v.ravel(), s.ravel(), W.ravel()


def _finite_tetra_volume(V, order):
    """Klein-model quadrature of (1 - |k|^2)^-2 over a tetrahedron with finite vertices."""
    u, v, s, W = _gauss_tetra(order)
    a, b, c, d = V
    e1, e2, e3 = b - a, c - b, d - c
    pts = a + u[:, None] * (e1 + v[:, None] * (e2 + s[:, None] * e3))
    jac = abs(np.linalg.det(np.array([e1, e2, e3]))) * u ** 2 * v
    f = 1.0 / (1.0 - np.sum(pts ** 2, axis=1)) ** 2
    return float(np.sum(W * jac * f))


def _rotation_to_north(p):
    p = p / np.linalg.norm(p)
    north = np.array([0.0, 0.0, 1.0])
    v = np.cross(p, north)
    s = np.linalg.norm(v)
    c = p @ north
    if s < 1e-15:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s ** 2)


def _klein_to_halfspace_any(K):
    """Half-space (z, t) of Klein points; ideal points get t = 0."""
    K = np.atleast_2d(K)
    r2 = np.sum(K ** 2, axis=1)
    out_z = np.empty(len(K), dtype=complex)
    out_t = np.zeros(len(K))
    for i, (k, q) in enumerate(zip(K, r2)):
        if q >= 1 - IDEAL_TOL:
            k = k / np.sqrt(q)
            out_z[i] = (k[0] + 1j * k[1]) / (1 - k[2])
        else:
            w = 1 / np.sqrt(1 - q)
            X = np.array([w, w * k[0], w * k[1], w * k[2]])
            t = 1 / (X[0] - X[3])
            out_z[i] = (X[1] + 1j * X[2]) * t
            out_t[i] = t
    return out_z, out_t


def _column_tetra_volume(V, order):
    """Tetrahedron with an ideal vertex: send it to infinity and integrate 1/(2 h^2) over the base."""
    ideal = [i for i in range(4) if np.sum(V[i] ** 2) >= 1 - IDEAL_TOL]
    top = ideal[0]
    Q = _rotation_to_north(V[top])
    rest = [V[i] @ Q.T for i in range(4) if i != top]
    z, t = _klein_to_halfspace_any(np.array(rest))
    # hemisphere through the three remaining points: |w - c|^2 + t^2 = R^2
    A = np.array([[2 * zi.real, 2 * zi.imag, 1.0] for zi in z])
    rhs = np.abs(z) ** 2 + t ** 2
    cx, cy, k = np.linalg.solve(A, rhs)
    c = complex(cx, cy)
    R2 = k + abs(c) ** 2
    area2 = ((z[1] - z[0]).conjugate() * (z[2] - z[0])).imag
    if abs(area2) < 1e-300:
        return 0.0
    x, w = np.polynomial.legendre.leggauss(order)
    x = (x + 1) / 2
    w = w / 2
    U, S = np.meshgrid(x, x, indexing="ij")
    WW = np.outer(w, w)
    g = z.mean()
    total = 0.0
    for i in range(3):
        a, b = z[i], z[(i + 1) % 3]
        m = (a + b) / 2
        for corner, p, q in ((a, m, g), (b, g, m)):
            # Duffy collapse at the corner, which may sit on the circle
            d1, d2 = p - corner, q - corner
            pts = corner + U * (d1 + S * (d2 - d1))
            jac = U * abs((d1.conjugate() * d2).imag)
            h2 = R2 - np.abs(pts - c) ** 2
            total += np.sum(WW * jac / (2 * h2))
    return float(total)


def tetrahedron_volume(V, order=12):
    """Hyperbolic volume of a Klein-model tetrahedron (4x3 vertex array)."""
    V = np.asarray(V, dtype=float)
    if abs(np.linalg.det(V[1:] - V[0])) < 1e-300:
        return 0.0
    if np.any(np.sum(V ** 2, axis=1) >= 1 - IDEAL_TOL):
        return _column_tetra_volume(V, order)
    return _finite_tetra_volume(V, order)


def polytope_volume(vertices, order=12):
    """Volume of the convex hull of Klein points, with a two-order error estimate."""
    vertices = np.asarray(vertices, dtype=float)
    hull = ConvexHull(vertices)
    finite = vertices[np.sum(vertices ** 2, axis=1) < 1 - IDEAL_TOL]
    apex = finite.mean(axis=0) if len(finite) else vertices.mean(axis=0)
    vals = []
    for o in (order, order + 6):
        tot = 0.0
        for s in hull.simplices:
            tet = np.vstack([apex, vertices[s]])
            v = tetrahedron_volume(tet, o)
            if abs(v) > VOLUME_FLOOR:
                tot += v
        vals.append(tot)
    return vals[1], abs(vals[1] - vals[0])


# --- hull construction -------------------------------------------------------

def klein_plane_to_lorentz(normal, offset):
    """Klein half-space normal . k + offset <= 0 -> unit n with hull on <X, n> <= 0."""
    n = np.concatenate([[-offset], normal])
    q = -n[0] ** 2 + np.sum(n[1:] ** 2)
    return n / np.sqrt(q)


@dataclass
class PolyhedralCore:
    points: np.ndarray  # Klein sample on the unit sphere
    simplices: np.ndarray  # hull triangles (indices into points)
    normals: np.ndarray  # unit Lorentz normals, hull on the non-positive side
    degenerate: bool = False
    depth: int = 0
    eps: float = 0.0
    group: str = ""
    region: list = field(default_factory=list)  # Lorentz normals, region on the non-negative side
    # quotient polytope data
    pvertices: np.ndarray = None  # finite Klein vertices of P
    pfaces: list = field(default_factory=list)  # (facet index, vertex index loop)
    chi_mesh: int = None

    # -- support planes --
    def edges(self):
        """Hull edges as (facet_i, facet_j) with the two shared vertices."""
        if self.degenerate:
            return np.zeros((0, 2), dtype=int), np.zeros((0, 2), dtype=int)
        emap = {}
        for f, tri in enumerate(self.simplices):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                emap.setdefault(key, []).append(f)
        faces, verts = [], []
        for key, fs in emap.items():
            if len(fs) == 2:
                faces.append(fs)
                verts.append(key)
        return np.array(faces), np.array(verts)

    def to_json(self):
        return {
            "group": self.group, "depth": self.depth, "eps": self.eps, "degenerate": self.degenerate,
            "normals": self.normals.tolist(), "simplices": self.simplices.tolist(),
            "region": [list(map(float, r)) for r in self.region],
            "pfaces": [[int(f), [int(i) for i in loop]] for f, loop in self.pfaces],
            "chi_mesh": self.chi_mesh,
        }

    def save(self, stem):
        stem = Path(stem)
        stem.with_suffix(".json").write_text(json.dumps(self.to_json()))
        np.save(stem.with_suffix(".npy"), self.points)
        if self.pvertices is not None:
            np.save(str(stem) + "_pvertices.npy", self.pvertices)


def _affine_rank(P, tol=1e-10):
    Q = P - P.mean(axis=0)
    s = np.linalg.svd(Q, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def hull_from_points(points, region=None, depth=0, eps=0.0, group=""):
    """Klein hull of boundary points; clips to the region when one is given."""
    P = np.asarray(points, dtype=float)
    if _affine_rank(P) < 3:
        Q = P - P.mean(axis=0)
        nrm = np.linalg.svd(Q)[2][-1]
        off = -nrm @ P.mean(axis=0)
        n = klein_plane_to_lorentz(nrm, off)
        return PolyhedralCore(P, np.zeros((0, 3), dtype=int), np.array([n, -n]), True, depth, eps,
                              group, list(region or []))
    hull = ConvexHull(P)
    eq = hull.equations
    normals = np.concatenate([-eq[:, 3:], eq[:, :3]], axis=1)
    normals /= np.sqrt(np.sum(eq[:, :3] ** 2, axis=1) - eq[:, 3] ** 2)[:, None]
    core = PolyhedralCore(P, hull.simplices.copy(), normals, False, depth, eps, group,
                          list(region or []))
    # orient simplices consistently with the outward normal
    a, b, c = (P[core.simplices[:, k]] for k in range(3))
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), eq[:, :3]) < 0
    core.simplices[flip] = core.simplices[flip][:, [0, 2, 1]]
    if region:
        _clip_to_region(core)
    return core


def _region_halfspaces(region):
    """Region normals as Klein inequalities A k <= b."""
    A = np.array([-np.asarray(r)[1:] for r in region])
    b = np.array([-np.asarray(r)[0] for r in region])
    return A, b


def _clip_polygon(poly, a, b, tol=1e-14):
    """Clip a Klein polygon to a . k <= b."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = a @ p - b, a @ q - b
        if sp <= tol:
            out.append(p)
        if (sp < -tol and sq > tol) or (sp > tol and sq < -tol):
            s = sp / (sp - sq)
            out.append(p + s * (q - p))
    return out


class _VertexPool:
    def __init__(self, tol=1e-10):
        self.tol = tol
        self.pts = []
        self.keys = {}

    def add(self, p):
        key = tuple(np.round(p / self.tol).astype(np.int64))
        for dk in _neighbour_keys(key):
            idx = self.keys.get(dk)
            if idx is not None and np.linalg.norm(self.pts[idx] - p) < 4 * self.tol:
                return idx
        self.pts.append(np.array(p))
        self.keys[key] = len(self.pts) - 1
        return len(self.pts) - 1


def _neighbour_keys(key):
    x, y, z = key
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                yield (x + dx, y + dy, z + dz)


def _clip_to_region(core):
    A, b = _region_halfspaces(core.region)
    pool = _VertexPool()
    pfaces = []
    P = core.points
    # classify triangles in bulk: only those straddling a region plane need clipping
    side = np.einsum("fkj,rj->fkr", P[core.simplices], A) - b
    dropped = np.any(np.all(side > 1e-14, axis=1), axis=1)
    for f in np.flatnonzero(~dropped):
        tri = core.simplices[f]
        poly = [P[i] for i in tri]
        for r in np.flatnonzero(np.any(side[f] > -1e-14, axis=0)):
            poly = _clip_polygon(poly, A[r], b[r])
            if len(poly) < 3:
                break
        if len(poly) < 3:
            continue
        if np.any(np.sum(np.array(poly) ** 2, axis=1) > 1 - 1e-9):
            raise DegenerateCoreError("region does not cut off the ideal vertices of the hull")
        loop = [pool.add(p) for p in poly]
        dedup = [loop[i] for i in range(len(loop)) if loop[i] != loop[(i + 1) % len(loop)]]
        if len(dedup) >= 3 and _polygon_area_klein(np.array([pool.pts[i] for i in dedup])) > 1e-18:
            pfaces.append((f, dedup))
    core.pvertices = np.array(pool.pts)
    core.pfaces = pfaces
    core.chi_mesh = _mesh_euler(pfaces)


def _polygon_area_klein(poly):
    d = poly - poly.mean(axis=0)
    return float(np.sum(np.linalg.norm(np.cross(d, np.roll(d, -1, axis=0)), axis=1)) / 2)


def _mesh_euler(pfaces):
    verts = set()
    edges = set()
    for _, loop in pfaces:
        verts.update(loop)
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            edges.add((min(a, b), max(a, b)))
    return len(verts) - len(edges) + len(pfaces)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        self.parent[self.find(i)] = self.find(j)

    def count(self, items):
        return len({self.find(i) for i in items})


def quotient_euler(core, G, tol=1e-7, corner_tol=1e-2):
    """Euler characteristic of the boundary mesh after gluing paired region faces.

    With X the clipped mesh, A the glued image of its boundary, and the
    boundary a union of circles, chi(X / ~) = chi(X) + chi(A).  A is the
    graph of boundary arcs (maximal runs on one region face, glued in pairs)
    and corner classes (corners matched geometrically under the face
    pairings).  Closed arcs contribute nothing.  Returns None when the
    boundary cannot be decomposed consistently.
    """
    if core.degenerate or not core.pfaces:
        return None
    V = core.pvertices
    A, b = _region_halfspaces(core.region)
    count = {}
    for _, loop in core.pfaces:
        for i in range(len(loop)):
            a, c = loop[i], loop[(i + 1) % len(loop)]
            key = (min(a, c), max(a, c))
            count[key] = count.get(key, 0) + 1
    bedges = [e for e, n in count.items() if n == 1]
    resid = np.abs(A @ V.T - b[:, None])  # (faces, vertices)

    def face_of(e):
        k = int(np.argmin(np.maximum(resid[:, e[0]], resid[:, e[1]])))
        return k if max(resid[k, e[0]], resid[k, e[1]]) < tol else None

    nbr = {}
    for e in bedges:
        k = face_of(e)
        if k is None:
            return None
        for u, v in (e, e[::-1]):
            nbr.setdefault(u, []).append((v, k))
    if any(len(v) != 2 for v in nbr.values()):
        return None
    seen, n_arcs, corners = set(), 0, []
    for start in nbr:
        if start in seen:
            continue
        loop, labels = [start], []
        prev, cur = None, start
        while True:
            seen.add(cur)
            (v0, k0), (v1, k1) = nbr[cur]
            nxt, k = (v0, k0) if v0 != prev else (v1, k1)
            labels.append(k)
            prev, cur = cur, nxt
            if cur == start:
                break
            loop.append(cur)
        runs = sum(1 for i in range(len(labels)) if labels[i] != labels[i - 1])
        if runs == 0:
            continue
        n_arcs += runs
        for i in range(len(labels)):
            if labels[i] != labels[i - 1]:
                corners.append((loop[i], {labels[i], labels[i - 1]}))
    if n_arcs % 2:
        return None
    chi_x = _mesh_euler(core.pfaces)
    if not corners:
        return chi_x
    n_classes = _glued_corner_classes(V, corners, G, corner_tol)
    if n_classes is None:
        return None
    return chi_x + n_classes - n_arcs // 2


def _glued_corner_classes(points, corners, G, corner_tol):
    """Number of classes of corner points under the face pairings (None if unmatched)."""
    lor = [f.to_region.lorentz() for f in G.faces]
    C = np.array([points[c] for c, _ in corners])
    uf = _UnionFind(len(corners))
    for i, (c, faces) in enumerate(corners):
        for k in faces:
            X = lor[k] @ np.concatenate([[1.0], points[c]])
            d = np.linalg.norm(C - X[1:] / X[0], axis=1)
            j = int(np.argmin(d))
            if d[j] > corner_tol:
                return None
            uf.union(i, j)
    return uf.count(range(len(corners)))


def degenerate_euler(core, G, tol=1e-9, corner_tol=1e-2):
    """Euler characteristic of the boundary of a totally geodesic core.

    The core is the plane of its two support normals; clipped to the region it
    is a fundamental polygon whose sides are glued in pairs.  The boundary of
    the core consists of the two sides of the resulting closed surface.
    """
    n = np.asarray(core.normals[0], dtype=float)
    nv = n[1:]
    centre = n[0] * nv / (nv @ nv)
    e1, e2 = np.linalg.svd(nv[None, :])[2][1:]
    poly = [centre + 2 * (a * e1 + b * e2) for a, b in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    A, b = _region_halfspaces(core.region)
    for a_k, b_k in zip(A, b):
        poly = _clip_polygon(poly, a_k, b_k)
        if len(poly) < 3:
            return None
    poly = np.array(poly)
    if np.max(np.linalg.norm(poly, axis=1)) >= 1 - tol:
        return None  # not compact
    m = len(poly)
    resid = np.abs(A @ poly.T - b[:, None])
    sides = []
    for i in range(m):
        k = int(np.argmin(np.maximum(resid[:, i], resid[:, (i + 1) % m])))
        sides.append(k)
    if len(set(sides)) != m or m % 2:
        return None
    corners = [(i, {sides[i - 1], sides[i]}) for i in range(m)]
    classes = _glued_corner_classes(poly, corners, G, corner_tol)
    if classes is None:
        return None
    return 2 * (classes - m // 2 + 1)


def region_normals(G):
    return [f.plane.n for f in G.faces]


def build_core(G, depth, sample=None):
    """Convex core of G from the depth-L limit sample."""
    sample = sample if sample is not None else sample_limit_set(G, depth)
    pts = sample.sphere_points()
    if len(pts) < 4:
        raise DegenerateCoreError("need at least four limit points")
    core = hull_from_points(pts, region_normals(G), depth, sample.eps, G.name)
    core.chi_mesh = degenerate_euler(core, G) if core.degenerate else quotient_euler(core, G)
    return core


# --- quotient quantities -----------------------------------------------------

def _region_vertices_inside(core):
    """Vertices of the region polytope that lie strictly inside the hull and the ball."""
    from itertools import combinations

    if len(core.region) < 3:
        return []
    A, b = _region_halfspaces(core.region)
    out = []
    for i, j, k in combinations(range(len(A)), 3):
        M = A[[i, j, k]]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[[i, j, k]])
        if np.sum(x ** 2) >= 1 or np.any(A @ x - b > 1e-12):
            continue
        X = np.concatenate([[1.0], x])
        if np.all(minkowski_dot(X, core.normals) <= 1e-12):
            out.append(x)
    return out


def core_volume(core, order=12):
    """Hyperbolic volume of hull ∩ region (or the whole hull when no region)."""
    if core.degenerate:
        return 0.0, 0.0
    if not core.region:
        return polytope_volume(core.points, order)
    verts = list(core.pvertices) + _region_vertices_inside(core)
    return polytope_volume(np.array(verts), order)


def _edge_length_klein(p, q):
    return float(np.arccosh(max(-minkowski_dot(klein_to_hyperboloid(p), klein_to_hyperboloid(q)), 1.0)))


def bending_edges(core):
    """Edges of P shared by two hull faces: (length, exterior angle, facet pair)."""
    owner = {}
    for f, loop in core.pfaces:
        for i in range(len(loop)):
            a, b = loop[i], loop[(i + 1) % len(loop)]
            owner.setdefault((min(a, b), max(a, b)), []).append(f)
    out = []
    for (a, b), fs in owner.items():
        if len(fs) != 2 or fs[0] == fs[1]:
            continue
        c = float(minkowski_dot(core.normals[fs[0]], core.normals[fs[1]]))
        theta = float(np.arccos(np.clip(c, -1, 1)))
        ell = _edge_length_klein(core.pvertices[a], core.pvertices[b])
        out.append((ell, theta, fs[0], fs[1]))
    return out


def bending_length(core):
    """Sum of length x exterior angle over quotient edges; returns (value, error)."""
    if core.degenerate:
        return 0.0, 0.0
    total, dropped = 0.0, 0.0
    for ell, theta, _, _ in bending_edges(core):
        if theta < FLAT_ANGLE:
            dropped += ell * theta
            continue
        total += ell * theta
    return total, dropped + 1e-12 * total


def _polygon_area_hyperbolic(K):
    X = klein_to_hyperboloid(K)
    k = len(X)
    angles = 0.0
    for i in range(k):
        v, u, w = X[i], X[i - 1], X[(i + 1) % k]
        tu = u + minkowski_dot(u, v) * v
        tw = w + minkowski_dot(w, v) * v
        c = minkowski_dot(tu, tw) / np.sqrt(minkowski_dot(tu, tu) * minkowski_dot(tw, tw))
        angles += np.arccos(np.clip(c, -1, 1))
    return (k - 2) * np.pi - angles


def boundary_area(core):
    """Area of the hull faces inside the region."""
    if core.degenerate:
        return 0.0
    return float(sum(_polygon_area_hyperbolic(core.pvertices[loop]) for _, loop in core.pfaces))


@dataclass
class TubeWVolume:
    value: float
    volume: float
    half_mean_curvature: float
    error: float
    r: float


def tube_w_volume(core, r, volume=None, bend=None, area=None):
    """W(N_r) of the r-neighbourhood from face slabs and edge wedges.

    Face slab: volume A (sinh 2r / 4 + r / 2), mean-curvature term A sinh 2r / 4.
    Edge wedge: volume l th sinh^2 r / 2, mean-curvature term l th cosh 2r / 4.
    """
    V, dV = volume if volume is not None else core_volume(core)
    L, dL = bend if bend is not None else bending_length(core)
    A = area if area is not None else boundary_area(core)
    vol = V + A * (np.sinh(2 * r) / 4 + r / 2) + L * np.sinh(r) ** 2 / 2
    half_h = A * np.sinh(2 * r) / 4 + L * np.cosh(2 * r) / 4
    return TubeWVolume(vol - half_h, vol, half_h, dV + dL * np.cosh(2 * r) / 4, r)


def wedge_volume(length, angle, r):
    return length * angle * np.sinh(r) ** 2 / 2


# --- boundary injectivity radius ---------------------------------------------

def _unbend(na, nb):
    """Lorentz rotation fixing the common edge and taking normal nb to na."""
    c = float(np.clip(minkowski_dot(na, nb), -1, 1))
    th = np.arccos(c)
    if th < 1e-15:
        return np.eye(4)
    e1 = na
    e2 = (nb - c * na) / np.sin(th)
    M = MINKOWSKI
    E = np.stack([e1, e2], axis=1)  # 4x2
    Rot = np.array([[np.cos(th), np.sin(th)], [-np.sin(th), np.cos(th)]])
    return np.eye(4) + E @ (Rot - np.eye(2)) @ E.T @ M


def meridian_loop(core, plane_n):
    """Ordered hull facets crossed by hull ∩ plane."""
    P = core.points
    segs = []
    for f, tri in enumerate(core.simplices):
        X = np.concatenate([np.ones((3, 1)), P[tri]], axis=1)
        s = minkowski_dot(X, plane_n)
        if (s > 0).all() or (s < 0).all():
            continue
        ends = []
        for i in range(3):
            a, b = i, (i + 1) % 3
            if (s[a] > 0) != (s[b] > 0):
                ends.append((min(tri[a], tri[b]), max(tri[a], tri[b])))
        if len(ends) == 2:
            segs.append((f, ends[0], ends[1]))
    if not segs:
        return []
    by_edge = {}
    for f, e1, e2 in segs:
        by_edge.setdefault(e1, []).append(f)
        by_edge.setdefault(e2, []).append(f)
    seg_of = {f: (e1, e2) for f, e1, e2 in segs}
    start = segs[0][0]
    loop = [start]
    prev_edge = seg_of[start][0]
    cur = start
    while True:
        e1, e2 = seg_of[cur]
        nxt_edge = e2 if e1 == prev_edge else e1
        cand = [g for g in by_edge[nxt_edge] if g != cur]
        if not cand:
            return []
        cur = cand[0]
        prev_edge = nxt_edge
        if cur == start:
            break
        loop.append(cur)
        if len(loop) > len(segs):
            return []
    return loop


def loop_holonomy_length(core, loop):
    """Translation length of the developing holonomy around a closed chain of facets."""
    D = np.eye(4)
    k = len(loop)
    for i in range(k):
        D = D @ _unbend(core.normals[loop[i]], core.normals[loop[(i + 1) % k]])
    tr = np.trace(D)
    return float(np.arccosh(max((tr - 2) / 2, 1.0)))


def eta_estimate(core, G):
    """Half the shortest compressing meridian on the hull boundary, as (lower, upper).

    Each region face of a Schottky group is a compressing disk; the developing
    holonomy of the facets crossed by its boundary gives the length of the
    closed geodesic in that free homotopy class.
    """
    if not G.compressible:
        raise ValueError("eta undefined (incompressible)")
    lengths = []
    for f in G.faces:
        loop = meridian_loop(core, f.plane.n)
        if loop:
            lengths.append(loop_holonomy_length(core, loop))
    if not lengths:
        raise DegenerateCoreError("no meridian loop found")
    lengths = np.array(lengths)
    # paired faces bound translates of the same disk; their spread measures hull error
    per_class = lengths.reshape(-1, 2) if len(lengths) % 2 == 0 else lengths[:, None]
    best = per_class.mean(axis=1).min() / 2
    spread = np.max(np.ptp(per_class, axis=1)) / 2 if per_class.shape[1] > 1 else 0.0
    return best - spread, best + spread


def invariance_residual(core, G, tol_depth=None):
    """Max over P-face centroids x and letters g of |max_f <g x, n_f>| (0 if g x on the hull)."""
    if core.degenerate or not core.pfaces:
        return 0.0
    from .hypmodels import lorentz_matrix

    cents = np.array([klein_to_hyperboloid(core.pvertices[loop].mean(axis=0)) for _, loop in core.pfaces])
    worst = 0.0
    JN = MINKOWSKI @ core.normals.T
    for g in G.letters():
        Y = cents @ lorentz_matrix(g.m).T
        # small chunks keep the point-by-facet block in cache
        for k in range(0, len(Y), 32):
            s = Y[k:k + 32] @ JN
            worst = max(worst, float(np.max(np.abs(s.max(axis=1)))))
    return worst
