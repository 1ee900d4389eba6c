"""Numerical laboratory for renormalized and convex-core volumes of convex cocompact
hyperbolic 3-manifolds."""

__version__ = "0.1.0"
