"""Models of hyperbolic 3-space and the isometries acting on them.

Everything is routed through the Minkowski hyperboloid with the form
<x, y> = -x0 y0 + x1 y1 + x2 y2 + x3 y3.  The upper half-space point
(z, t) corresponds to

    X = ((|z|^2 + t^2 + 1) / 2t, Re z / t, Im z / t, (|z|^2 + t^2 - 1) / 2t)

and a boundary point z to the null vector

    N(z) = ((|z|^2 + 1) / 2, Re z, Im z, (|z|^2 - 1) / 2),

so that the visual density seen from X is v_X(z) = 1 / (-<X, N(z)>).  With
this scaling v_{(w,t)}(z) = 2t / (|z - w|^2 + t^2).

Ball and Klein coordinates are X[1:] / (1 + X[0]) and X[1:] / X[0]; the
boundary point z sits on the unit sphere at N(z)[1:] / N(z)[0].
"""

from dataclasses import dataclass

import numpy as np

MINKOWSKI = np.diag([-1.0, 1.0, 1.0, 1.0])


class DisjointPlanesError(ValueError):
    """Raised when two geodesic planes do not meet."""

    def __init__(self, distance):
        super().__init__(f"planes are disjoint at distance {distance:.6g}")
        self.distance = distance


def minkowski_dot(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


# --- model conversions -------------------------------------------------------

def halfspace_to_hyperboloid(z, t):
    z = np.asarray(z, dtype=complex)
    t = np.asarray(t, dtype=float)
    s = np.abs(z) ** 2 + t ** 2
    return np.stack([(s + 1) / (2 * t), z.real / t, z.imag / t, (s - 1) / (2 * t)], axis=-1)


def hyperboloid_to_halfspace(X):
    X = np.asarray(X, dtype=float)
    t = 1.0 / (X[..., 0] - X[..., 3])
    z = (X[..., 1] + 1j * X[..., 2]) * t
    return z, t


def hyperboloid_to_ball(X):
    X = np.asarray(X, dtype=float)
    return X[..., 1:] / (1.0 + X[..., :1])


def ball_to_hyperboloid(B):
    B = np.asarray(B, dtype=float)
    r2 = np.sum(B ** 2, axis=-1, keepdims=True)
    return np.concatenate([(1 + r2), 2 * B], axis=-1) / (1 - r2)


def hyperboloid_to_klein(X):
    X = np.asarray(X, dtype=float)
    return X[..., 1:] / X[..., :1]


def klein_to_hyperboloid(K):
    K = np.asarray(K, dtype=float)
    w = 1.0 / np.sqrt(1.0 - np.sum(K ** 2, axis=-1, keepdims=True))
    return np.concatenate([w, w * K], axis=-1)


def ball_to_klein(B):
    B = np.asarray(B, dtype=float)
    return 2 * B / (1 + np.sum(B ** 2, axis=-1, keepdims=True))


def klein_to_ball(K):
    K = np.asarray(K, dtype=float)
    r2 = np.sum(K ** 2, axis=-1, keepdims=True)
    return K / (1 + np.sqrt(1 - r2))


def null_vector(z):
    """Null vector N(z) of a boundary point (finite z only)."""
    z = np.asarray(z, dtype=complex)
    a = np.abs(z) ** 2
    return np.stack([(a + 1) / 2, z.real, z.imag, (a - 1) / 2], axis=-1)


def boundary_to_sphere(z):
    """Unit-sphere point of a boundary point; z = inf goes to the north pole."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (3,))
    inf = ~np.isfinite(z)
    zz = np.where(inf, 0, z)
    a = np.abs(zz) ** 2
    out[..., 0] = 2 * zz.real / (a + 1)
    out[..., 1] = 2 * zz.imag / (a + 1)
    out[..., 2] = (a - 1) / (a + 1)
    out[inf] = (0.0, 0.0, 1.0)
    return out


def sphere_to_boundary(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (p[..., 0] + 1j * p[..., 1]) / (1 - p[..., 2])
    return np.where(p[..., 2] > 1 - 1e-15, complex(np.inf, 0), z)


def hyperbolic_distance(X, Y):
    return np.arccosh(np.maximum(-minkowski_dot(X, Y), 1.0))


@dataclass(frozen=True)
class HPoint:
    """A point of H^3 stored in hyperboloid coordinates."""

    X: np.ndarray

    @classmethod
    def from_halfspace(cls, z, t):
        return cls(halfspace_to_hyperboloid(z, t))

    @classmethod
    def from_ball(cls, b):
        return cls(ball_to_hyperboloid(b))

    @classmethod
    def from_klein(cls, k):
        return cls(klein_to_hyperboloid(k))

    @property
    def halfspace(self):
        z, t = hyperboloid_to_halfspace(self.X)
        return complex(z), float(t)

    @property
    def ball(self):
        return hyperboloid_to_ball(self.X)

    @property
    def klein(self):
        return hyperboloid_to_klein(self.X)

    def distance(self, other):
        return float(hyperbolic_distance(self.X, other.X))


# --- isometries --------------------------------------------------------------

class Isometry:
    """Orientation-preserving isometry given by a unit-determinant matrix."""

    __slots__ = ("m",)

    def __init__(self, a, b=None, c=None, d=None):
        if b is None:
            m = np.array(a, dtype=complex).reshape(2, 2)
        else:
            m = np.array([[a, b], [c, d]], dtype=complex)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) == 0:
            raise ValueError("singular matrix")
        if det != 1:
            m = m / np.sqrt(det)
        self.m = m

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @property
    def det(self):
        m = self.m
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    @property
    def trace(self):
        return self.m[0, 0] + self.m[1, 1]

    def __matmul__(self, other):
        return Isometry(self.m @ other.m)

    def inverse(self):
        (a, b), (c, d) = self.m
        return Isometry(np.array([[d, -b], [-c, a]]))

    def __call__(self, z):
        return mobius(self.m, z)

    def extend(self, z, t):
        """Poincare extension to the half-space point (z, t)."""
        (a, b), (c, d) = self.m
        z = np.asarray(z, dtype=complex)
        t = np.asarray(t, dtype=float)
        den = np.abs(c * z + d) ** 2 + np.abs(c) ** 2 * t ** 2
        if np.any(den == 0):
            raise OverflowError("point mapped to infinity")
        zn = ((a * z + b) * np.conj(c * z + d) + a * np.conj(c) * t ** 2) / den
        return zn, t / den

    def derivative(self, z):
        """|g'(z)| for finite z."""
        (_, _), (c, d) = self.m
        return 1.0 / np.abs(c * np.asarray(z) + d) ** 2

    def lorentz(self):
        return lorentz_matrix(self.m)

    def kind(self, tol=1e-9):
        tr = self.trace
        if abs(tr.imag) > tol or abs(tr.real) > 2 + tol:
            return "loxodromic"
        if abs(abs(tr.real) - 2) <= tol:
            return "parabolic"
        return "elliptic"

    def translation_length(self):
        """Complex translation length real part: 2 arccosh(|tr|/2) for real traces."""
        tr = complex(self.trace)
        lam = tr / 2 + np.sqrt(tr * tr / 4 - 1)
        return 2 * np.log(max(abs(lam), 1 / abs(lam)))

    def fixed_points(self):
        """(attracting, repelling) fixed points on the boundary."""
        (a, b), (c, d) = self.m
        if abs(c) < 1e-300:
            # fixes infinity
            if abs(a - d) < 1e-300:
                return complex(np.inf), complex(np.inf)
            other = b / (d - a)
            return (complex(np.inf), other) if abs(a) > abs(d) else (other, complex(np.inf))
        disc = np.sqrt((a + d) ** 2 - 4 + 0j)
        z1 = (a - d + disc) / (2 * c)
        z2 = (a - d - disc) / (2 * c)
        # multiplier at z is 1/(cz+d)^2
        if abs(c * z1 + d) > abs(c * z2 + d):
            return complex(z1), complex(z2)
        return complex(z2), complex(z1)

    def __repr__(self):
        (a, b), (c, d) = self.m
        return f"Isometry({a:.6g}, {b:.6g}, {c:.6g}, {d:.6g})"


def mobius(m, z):
    (a, b), (c, d) = m
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = a * z + b
        den = c * z + d
        w = num / den
    inf = ~np.isfinite(z)
    if np.any(inf):
        w = np.where(inf, (a / c) if c != 0 else complex(np.inf), w)
    w = np.where(np.isfinite(z) & (den == 0), complex(np.inf), w)
    return w if w.ndim else complex(w)


_HERM_BASIS = [
    np.array([[1, 0], [0, 1]], dtype=complex),   # X0
    np.array([[0, 1], [1, 0]], dtype=complex),   # X1
    np.array([[0, 1j], [-1j, 0]], dtype=complex),  # X2
    np.array([[1, 0], [0, -1]], dtype=complex),  # X3
]


def _herm_to_vec(H):
    return np.array([
        (H[0, 0] + H[1, 1]).real / 2,
        H[0, 1].real,
        H[0, 1].imag,
        (H[0, 0] - H[1, 1]).real / 2,
    ])


def lorentz_matrix(m):
    """SO(3,1) image of an SL(2,C) matrix, acting on column vectors."""
    m = np.asarray(m, dtype=complex)
    mh = m.conj().T
    cols = [_herm_to_vec(m @ B @ mh) for B in _HERM_BASIS]
    return np.array(cols).T


# --- horoballs and visual densities -----------------------------------------

def visual_density(z_point, t_point, z):
    """v_{(w,t)}(z) = 2t / (|z - w|^2 + t^2); z = inf uses the chart z -> -1/z."""
    w = np.asarray(z_point, dtype=complex)
    t = np.asarray(t_point, dtype=float)
    z = np.asarray(z, dtype=complex)
    if np.all(np.isfinite(z)):
        return 2 * t / (np.abs(z - w) ** 2 + t ** 2)
    flip = Isometry(0, 1, -1, 0)
    wf, tf = flip.extend(w, t)
    return visual_density(wf, tf, flip(z))


def visual_density_X(X, z):
    return 1.0 / (-minkowski_dot(X, null_vector(z)))


@dataclass(frozen=True)
class Horoball:
    base: complex
    diameter: float

    @property
    def top(self):
        return self.base, self.diameter

    def contains(self, z, t, tol=0.0):
        """Signed clearance: negative inside the horoball."""
        r = self.diameter / 2
        return np.sqrt(np.abs(np.asarray(z) - self.base) ** 2 + (np.asarray(t) - r) ** 2) - r - tol


def horoball_from_density(z0, g):
    if not g > 0:
        raise ValueError("density must be positive")
    return Horoball(complex(z0), 2.0 / g)


# --- geodesic planes ---------------------------------------------------------

@dataclass(frozen=True)
class GeodesicPlane:
    """Unit spacelike normal; the positive side is {<X, n> > 0}."""

    n: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        q = minkowski_dot(n, n)
        if q <= 0:
            raise ValueError("plane normal must be spacelike")
        object.__setattr__(self, "n", n / np.sqrt(q))

    @classmethod
    def from_circle(cls, center, radius):
        """Hemisphere over |z - c| = R; positive side faces the exterior."""
        c = complex(center)
        R = float(radius)
        a = abs(c) ** 2
        return cls(np.array([(R * R - a - 1) / (2 * R), -c.real / R, -c.imag / R,
                             (R * R - a + 1) / (2 * R)]))

    @classmethod
    def from_line(cls, point, direction):
        """Vertical plane over a line; positive side is to the left of direction."""
        d = complex(direction) / abs(direction)
        nrm = 1j * d
        c = (np.conj(nrm) * complex(point)).real
        return cls(np.array([c, nrm.real, nrm.imag, c]))

    @classmethod
    def from_klein(cls, normal, offset):
        """Klein-model plane normal . k = offset (positive side normal . k > offset)."""
        a = np.asarray(normal, dtype=float)
        return cls(np.concatenate([[offset], a]))

    def flipped(self):
        return GeodesicPlane(-self.n)

    def side(self, X):
        return minkowski_dot(X, self.n)

    def boundary_circle(self):
        """(center, radius) or (point, direction) for a vertical plane."""
        n0, n1, n2, n3 = self.n
        k = (n3 - n0) / 2
        if abs(k) < 1e-14:
            nrm = complex(n1, n2)
            return ("line", n0 * nrm / abs(nrm) ** 2, 1j * nrm)
        c = -complex(n1, n2) / (2 * k)
        R = np.sqrt(abs(c) ** 2 + (n0 + n3) / (2 * k))
        return ("circle", c, R)

    def klein(self):
        """(normal, offset) with the plane = {k : normal . k = offset}."""
        return self.n[1:].copy(), self.n[0]


def plane_distance(X, plane):
    """Signed distance from hyperboloid point(s) X to a plane (sinh d = <X, n>)."""
    return np.arcsinh(minkowski_dot(X, plane.n))


def dihedral_angle(P1, P2):
    """Angle between the normals; for outward normals this is the exterior angle."""
    c = float(minkowski_dot(P1.n, P2.n))
    if abs(c) >= 1:
        raise DisjointPlanesError(float(np.arccosh(abs(c))))
    return float(np.arccos(c))


def reflection_matrix(plane):
    n = plane.n
    return np.eye(4) - 2 * np.outer(n, MINKOWSKI @ n)
