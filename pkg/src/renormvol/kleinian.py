"""Convex cocompact groups: Schottky, Fuchsian genus 2, and single-curve bendings.

A group carries a fundamental region in H^3 written as a list of faces.  Each
face is a geodesic plane whose positive side contains the region, together
with the isometry that carries points lying beyond the face back towards the
region.  For Schottky groups the faces are the hemispheres over the pairing
circles; otherwise they are the bisectors of a Dirichlet domain.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hypmodels import (
    GeodesicPlane,
    Isometry,
    halfspace_to_hyperboloid,
    lorentz_matrix,
    minkowski_dot,
)

MAX_DEPTH = 14
MAX_WORDS = 3_000_000
THETA_MAX = 0.3


class DiscretenessScreenError(ValueError):
    """A candidate group failed the discreteness screen."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class Face:
    plane: GeodesicPlane
    to_region: Isometry
    label: str = ""


@dataclass
class GroupModel:
    name: str
    kind: str  # "schottky" | "fuchsian" | "quasifuchsian"
    generators: list
    chi_boundary: int
    compressible: bool
    faces: list = field(default_factory=list)
    circles: list = field(default_factory=list)  # Schottky: [(c, r, c', r'), ...]
    metadata: dict = field(default_factory=dict)
    screened_only: bool = True

    @property
    def rank(self):
        return len(self.generators)

    def letters(self):
        """Generators followed by their inverses."""
        return self.generators + [g.inverse() for g in self.generators]

    def letter_names(self):
        names = self.metadata.get("generator_names") or [chr(ord("a") + i) for i in range(self.rank)]
        return list(names) + [n.upper() for n in names]

    def region_contains(self, X, tol=0.0):
        X = np.asarray(X, dtype=float)
        ok = np.ones(X.shape[:-1], dtype=bool)
        for f in self.faces:
            ok &= minkowski_dot(X, f.plane.n) >= -tol
        return ok

    def reduce_to_region(self, z, max_steps=64):
        """Map boundary points into the closure of the region at infinity.

        Returns (w, log_derivative) with w = g(z) and log|g'(z)| accumulated.
        """
        z = np.array(z, dtype=complex, copy=True)
        logd = np.zeros(z.shape)
        from .hypmodels import null_vector

        for _ in range(max_steps):
            N = null_vector(z)
            moved = np.zeros(z.shape, dtype=bool)
            for f in self.faces:
                bad = (~moved) & (minkowski_dot(N, f.plane.n) < 0)
                if np.any(bad):
                    g = f.to_region
                    logd[bad] += np.log(g.derivative(z[bad]))
                    z[bad] = g(z[bad])
                    moved |= bad
            if not np.any(moved):
                return z, logd
            N = null_vector(z)
        return z, logd

    def to_json(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "generators": [[[complex(v).real, complex(v).imag] for v in g.m.ravel()] for g in self.generators],
            "chi_boundary": self.chi_boundary,
            "compressible": self.compressible,
            "circles": [[c.real, c.imag, r, cp.real, cp.imag, rp] for c, r, cp, rp in self.circles],
            "faces": [{"normal": list(map(float, f.plane.n)),
                       "to_region": [[complex(v).real, complex(v).imag] for v in f.to_region.m.ravel()],
                       "label": f.label} for f in self.faces],
            "metadata": self.metadata,
            "screened_only": self.screened_only,
        }

    @classmethod
    def from_json(cls, doc):
        def mat(entries):
            return Isometry(np.array([complex(a, b) for a, b in entries]).reshape(2, 2))

        circles = [(complex(a, b), r, complex(c, d), rp) for a, b, r, c, d, rp in doc.get("circles", [])]
        faces = [Face(GeodesicPlane(np.array(f["normal"])), mat(f["to_region"]), f.get("label", ""))
                 for f in doc.get("faces", [])]
        return cls(doc["name"], doc["kind"], [mat(g) for g in doc["generators"]],
                   int(doc["chi_boundary"]), bool(doc["compressible"]), faces, circles,
                   dict(doc.get("metadata", {})), bool(doc.get("screened_only", True)))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


# --- constructions -----------------------------------------------------------

def _pairing_matrix(c, r, cp, rp, twist):
    """z -> c' + r r' e^{i twist} / (z - c): maps the exterior of C onto the interior of C'."""
    k = r * rp * np.exp(1j * twist)
    return Isometry(np.array([[cp, k - c * cp], [1, -c]], dtype=complex))


def _circle_gap(c1, r1, c2, r2):
    return abs(c1 - c2) - r1 - r2


def build_schottky(circles, pairings, twists=None, name="schottky", check_points=8):
    """Schottky group from 2n disjoint circles.

    circles: list of (center, radius).  pairings: list of (i, j) index pairs;
    generator k maps the exterior of circles[i] onto the interior of circles[j].
    """
    circles = [(complex(c), float(r)) for c, r in circles]
    n = len(pairings)
    used = [i for p in pairings for i in p]
    for i, j in pairings:
        if i == j:
            raise ValueError(f"circle {i} paired with itself: pairing would be elliptic")
    if sorted(used) != list(range(len(circles))) or len(circles) != 2 * n:
        raise ValueError("pairings must use every circle exactly once")
    for i in range(len(circles)):
        for j in range(i + 1, len(circles)):
            gap = _circle_gap(*circles[i], *circles[j])
            if gap <= 0:
                raise ValueError(f"circles {i} and {j} overlap (gap {gap:.3g})")
    twists = [np.pi] * n if twists is None else list(twists)
    gens, pairs, faces = [], [], []
    for k, (i, j) in enumerate(pairings):
        (c, r), (cp, rp) = circles[i], circles[j]
        g = _pairing_matrix(c, r, cp, rp, twists[k])
        if g.kind() != "loxodromic":
            raise ValueError(f"pairing {k} is {g.kind()}, not loxodromic")
        _check_pairing(g, c, r, cp, rp, check_points)
        gens.append(g)
        pairs.append((c, r, cp, rp))
        # points inside C are sent out of C' by g; points inside C' are pulled back by g^-1
        faces.append(Face(GeodesicPlane.from_circle(c, r), g, f"C{k}"))
        faces.append(Face(GeodesicPlane.from_circle(cp, rp), g.inverse(), f"C{k}'"))
    gaps = [_circle_gap(*circles[i], *circles[j])
            for i in range(len(circles)) for j in range(i + 1, len(circles))]
    return GroupModel(name, "schottky", gens, 2 - 2 * n, True, faces, pairs,
                      {"separation_margin": float(min(gaps)), "twists": [float(t) for t in twists]},
                      screened_only=False)


def _check_pairing(g, c, r, cp, rp, npts):
    ang = 2 * np.pi * (np.arange(npts) + 0.5) / npts
    outside = c + 1.5 * r * np.exp(1j * ang)
    on = c + r * np.exp(1j * ang)
    img_out = g(outside)
    img_on = g(on)
    if np.any(np.abs(img_out - cp) >= rp) or np.max(np.abs(np.abs(img_on - cp) - rp)) > 1e-9 * max(1, rp):
        raise ValueError("generator does not pair the circles")


def octagon_generators():
    """Side pairings a, b, c, d of the regular octagon with angles pi/4.

    Sides 0..7 carry the labels a b a^-1 b^-1 c d c^-1 d^-1, so the single
    relation is [a, b][c, d] = 1.
    """
    dmid = np.arccosh(1 + np.sqrt(2))
    phi = [2 * np.pi * k / 8 + np.pi / 8 for k in range(8)]

    def rot(p):
        return np.array([[np.exp(0.5j * p), 0], [0, np.exp(-0.5j * p)]])

    T = np.array([[np.cosh(dmid), np.sinh(dmid)], [np.sinh(dmid), np.cosh(dmid)]], dtype=complex)

    def side_map(i, j):
        return Isometry(rot(phi[j]) @ T @ rot(np.pi - phi[i]))

    return [side_map(2, 0), side_map(1, 3), side_map(6, 4), side_map(5, 7)]


def commutator(x, y):
    return x @ y @ x.inverse() @ y.inverse()


def dirichlet_faces(generators, basepoint=(0j, 1.0), depth=2):
    """Bisector faces of the Dirichlet domain at basepoint from words up to depth."""
    O = halfspace_to_hyperboloid(*basepoint)
    words = enumerate_words_matrices(generators, depth)[1:]
    faces = []
    seen = []
    for word, m in words:
        gO = lorentz_matrix(m) @ O
        n = O - gO
        if minkowski_dot(n, n) < 1e-12:
            continue
        plane = GeodesicPlane(n)
        if any(np.allclose(plane.n, s, atol=1e-10) for s in seen):
            continue
        seen.append(plane.n)
        faces.append(Face(plane, Isometry(m).inverse(), word))
    return _prune_faces(faces, O)


def _prune_faces(faces, O):
    """Drop bisectors that are redundant in the Klein model."""
    from scipy.optimize import linprog

    # <X, n> >= 0 with X ~ (1, k) reads -n_vec . k <= -n0
    G = np.array([-f.plane.n[1:] for f in faces])
    h = np.array([-f.plane.n[0] for f in faces])
    keep = []
    for i, f in enumerate(faces):
        others = np.delete(np.arange(len(faces)), i)
        res = linprog(-G[i], A_ub=G[others], b_ub=h[others], bounds=[(-1, 1)] * 3, method="highs")
        if res.status == 0 and G[i] @ res.x > h[i] + 1e-10:
            keep.append(f)
    return keep


def build_fuchsian_genus2():
    gens = octagon_generators()
    a, b, c, d = gens
    rel = commutator(a, b) @ commutator(c, d)
    faces = dirichlet_faces(gens, depth=1)
    return GroupModel("fuchsian_g2", "fuchsian", gens, 2 * (2 - 2 * 2), False, faces, [],
                      {"genus": 2, "relator_error": float(_identity_distance(rel)),
                       "generator_names": ["a", "b", "c", "d"]}, screened_only=False)


def _identity_distance(g):
    m = g.m
    return min(np.abs(m - np.eye(2)).max(), np.abs(m + np.eye(2)).max())


def rotation_about_axis(g, angle):
    """Elliptic element with the same axis as loxodromic g, rotating by angle."""
    fa, fr = g.fixed_points()
    P = np.array([[fa, fr], [1, 1]], dtype=complex)
    D = np.diag([np.exp(0.5j * angle), np.exp(-0.5j * angle)])
    return Isometry(P @ D @ np.linalg.inv(P))


def jorgensen_screen(gens):
    """Minimum of |tr^2 A - 4| + |tr[A,B] - 2| over generator pairs (>= 1 if discrete)."""
    vals = []
    letters = gens
    for i, A in enumerate(letters):
        for j, B in enumerate(letters):
            if i == j:
                continue
            vals.append(abs(A.trace ** 2 - 4) + abs(commutator(A, B).trace - 2))
    return min(vals)


def bend_quasifuchsian(base, curve="a", angle=0.2, theta_max=THETA_MAX, dirichlet_depth=2):
    """Bend a genus-2 Fuchsian group along a simple closed curve.

    curve is one of "a", "b", "c", "d" (non-separating generators of the
    presentation [a,b][c,d] = 1) or "[a,b]" (the separating commutator).
    """
    if base.kind != "fuchsian":
        raise ValueError("bending needs a Fuchsian base group")
    if abs(angle) > theta_max:
        raise DiscretenessScreenError(f"bending angle {angle} exceeds theta_max={theta_max}",
                                      {"angle": angle, "theta_max": theta_max})
    a, b, c, d = base.generators
    if angle == 0:
        gens = [a, b, c, d]
        axis = {"a": a, "b": b, "c": c, "d": d, "[a,b]": commutator(a, b)}[curve]
    elif curve in ("a", "b", "c", "d"):
        # twist the dual generator by a rotation commuting with the curve
        axis = {"a": a, "b": b, "c": c, "d": d}[curve]
        R = rotation_about_axis(axis, angle)
        gens = {"a": [a, b @ R, c, d], "b": [a @ R, b, c, d],
                "c": [a, b, c, d @ R], "d": [a, b, c @ R, d]}[curve]
    elif curve == "[a,b]":
        axis = commutator(a, b)
        R = rotation_about_axis(axis, angle)
        gens = [a, b, R @ c @ R.inverse(), R @ d @ R.inverse()]
    else:
        raise ValueError(f"unsupported bending curve {curve!r}")
    rel = commutator(gens[0], gens[1]) @ commutator(gens[2], gens[3])
    jor = jorgensen_screen(gens)
    diag = {"jorgensen_min": float(jor), "relator_error": float(_identity_distance(rel))}
    if jor < 1 or diag["relator_error"] > 1e-8:
        raise DiscretenessScreenError("bent group failed the discreteness screen", diag)
    faces = dirichlet_faces(gens, depth=dirichlet_depth)
    meta = dict(base.metadata)
    meta.update(diag)
    meta.update({"bend_curve": curve, "bend_angle": float(angle),
                 "curve_length": float(axis.translation_length())})
    kind = "fuchsian" if angle == 0 else "quasifuchsian"
    return GroupModel(f"{base.name}_bent_{curve}_{angle:g}", kind, gens, base.chi_boundary,
                      False, faces, [], meta, screened_only=angle != 0)


# --- words and limit sets ----------------------------------------------------

def _reduced_words(n, depth):
    """Freely reduced words (tuples of letter indices) of length <= depth, by length."""
    words = [()]
    frontier = [()]
    for _ in range(depth):
        nxt = []
        for w in frontier:
            last = w[-1] if w else None
            for k in range(2 * n):
                if last is not None and k == (last + n) % (2 * n):
                    continue
                nxt.append(w + (k,))
        words.extend(nxt)
        frontier = nxt
    return words


def word_count(n, depth):
    return 1 + sum(2 * n * (2 * n - 1) ** (k - 1) for k in range(1, depth + 1))


def enumerate_words_matrices(generators, depth):
    """All reduced words up to depth as (name, matrix) pairs, identity first."""
    n = len(generators)
    if depth > MAX_DEPTH or word_count(n, depth) > MAX_WORDS:
        raise ValueError(f"word budget exceeded: depth={depth}, count={word_count(n, depth)}")
    letters = [g.m for g in generators] + [g.inverse().m for g in generators]
    names = [chr(ord("a") + i) for i in range(n)] + [chr(ord("A") + i) for i in range(n)]
    out = [("", np.eye(2, dtype=complex))]
    frontier = [((), np.eye(2, dtype=complex))]
    for _ in range(depth):
        nxt = []
        for w, m in frontier:
            last = w[-1] if w else None
            for k in range(2 * n):
                if last is not None and k == (last + n) % (2 * n):
                    continue
                mk = m @ letters[k]
                nxt.append((w + (k,), mk))
        out.extend(("".join(names[i] for i in w), m) for w, m in nxt)
        frontier = nxt
    return out


def enumerate_words(G, depth):
    """Reduced words of G up to depth with their matrices (as Isometry)."""
    return [(w, Isometry(m)) for w, m in enumerate_words_matrices(G.generators, depth)]


@dataclass
class LimitSample:
    points: np.ndarray  # complex boundary points
    word_lengths: np.ndarray
    depth: int
    group: str
    eps: float
    seed: int = 0

    def sphere_points(self):
        from .hypmodels import boundary_to_sphere

        return boundary_to_sphere(self.points)

    def save(self, stem):
        stem = Path(stem)
        np.save(stem.with_suffix(".npy"), np.stack([self.points.real, self.points.imag, self.word_lengths]))
        header = {"group": self.group, "depth": self.depth, "eps": self.eps, "seed": self.seed,
                  "count": int(len(self.points))}
        stem.with_suffix(".json").write_text(json.dumps(header, indent=2))

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        arr = np.load(stem.with_suffix(".npy"))
        h = json.loads(stem.with_suffix(".json").read_text())
        return cls(arr[0] + 1j * arr[1], arr[2].astype(int), h["depth"], h["group"], h["eps"], h["seed"])


def schottky_disk_diameters(G, depth):
    """Max Euclidean diameter of the nested Schottky disks at the given level."""
    if G.kind != "schottky":
        raise ValueError("nested disks only exist for Schottky groups")
    n = G.rank
    # disk attached to letter k: generator k maps into C'_k, its inverse into C_k
    disks = [(cp, rp) for _, _, cp, rp in G.circles] + [(c, r) for c, r, _, _ in G.circles]
    letters = [g.m for g in G.generators] + [g.inverse().m for g in G.generators]
    if depth <= 1:
        return max(2 * r for _, r in disks)
    best = 0.0
    frontier = [((k,), letters[k]) for k in range(2 * n)]
    for _ in range(depth - 2):
        frontier = [(w + (k,), m @ letters[k]) for w, m in frontier for k in range(2 * n)
                    if k != (w[-1] + n) % (2 * n)]
    for w, m in frontier:
        for k in range(2 * n):
            if k == (w[-1] + n) % (2 * n):
                continue
            c, r = disks[k]
            best = max(best, _image_circle_diameter(m, c, r))
    return best


def _image_circle_diameter(m, c, r):
    from .hypmodels import mobius

    pts = mobius(m, c + r * np.exp(1j * np.array([0.0, 2.0943951, 4.1887902])))
    a, b, cc = pts
    # circumradius of the image triangle
    A, B, C = abs(b - cc), abs(a - cc), abs(a - b)
    s = (A + B + C) / 2
    area = np.sqrt(max(s * (s - A) * (s - B) * (s - C), 1e-300))
    return A * B * C / (2 * area)


def sample_limit_set(G, depth, seed=0):
    """Images of the generators' attracting fixed points under words of length <= depth."""
    fixed = []
    for g in G.letters():
        fa, _ = g.fixed_points()
        fixed.append(fa)
    fixed = np.array(fixed)
    from .hypmodels import mobius

    n = G.rank
    letter = {chr(ord("a") + i): i for i in range(n)} | {chr(ord("A") + i): i + n for i in range(n)}
    pts, lens = [], []
    for w, m in enumerate_words_matrices(G.generators, depth):
        keep = np.ones(len(fixed), dtype=bool)
        if w:
            # the attracting point of the inverse of the last letter is fixed by that letter;
            # its images are already sampled and evaluating them cancels catastrophically
            keep[(letter[w[-1]] + n) % (2 * n)] = False
        pts.append(mobius(m, fixed[keep]))
        lens.append(np.full(int(keep.sum()), len(w)))
    pts = np.concatenate(pts)
    lens = np.concatenate(lens)
    key = np.round(pts.real, 11) + 1j * np.round(pts.imag, 11)
    _, idx = np.unique(key, return_index=True)
    idx = np.sort(idx)
    pts, lens = pts[idx], lens[idx]
    if G.kind == "schottky":
        eps = schottky_disk_diameters(G, depth)
    else:
        from scipy.spatial import cKDTree

        from .hypmodels import boundary_to_sphere

        P = boundary_to_sphere(pts)
        d, _ = cKDTree(P).query(P, k=2)
        eps = float(d[:, 1].max())
    return LimitSample(pts, lens, depth, G.name, float(eps), seed)
