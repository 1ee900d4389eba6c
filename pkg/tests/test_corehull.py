import numpy as np
import pytest

from renormvol.corehull import (
    FLAT_ANGLE, DegenerateCoreError, bending_edges, bending_length, boundary_area, build_core,
    core_volume, eta_estimate, hull_from_points, ideal_tetrahedron_volume, invariance_residual,
    lobachevsky, polytope_volume, tetrahedron_volume, tube_w_volume, wedge_volume,
)
from renormvol.hypmodels import Isometry, hyperboloid_to_klein, klein_to_hyperboloid, lorentz_matrix
from renormvol.kleinian import build_schottky, sample_limit_set

REGULAR_TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)


def test_lobachevsky_values():
    assert lobachevsky(np.pi / 6) == pytest.approx(0.50747080, abs=1e-8)
    assert lobachevsky(np.pi) == pytest.approx(0.0, abs=1e-12)
    # period pi and odd symmetry
    assert lobachevsky(np.pi / 5 + np.pi) == pytest.approx(lobachevsky(np.pi / 5), abs=1e-12)
    assert ideal_tetrahedron_volume(np.pi / 3, np.pi / 3, np.pi / 3) == pytest.approx(1.0149416, abs=1e-6)


def test_ideal_regular_tetrahedron_volume():
    v = tetrahedron_volume(REGULAR_TETRA)
    assert v == pytest.approx(3 * lobachevsky(np.pi / 3), abs=1e-3)
    vol, err = polytope_volume(REGULAR_TETRA)
    assert vol == pytest.approx(1.0149, abs=1e-3)


def test_tetrahedron_hull_combinatorics():
    core = hull_from_points(REGULAR_TETRA)
    assert len(core.simplices) == 4
    faces, verts = core.edges()
    assert len(faces) == 6


def test_volume_is_isometry_invariant():
    rng = np.random.default_rng(0)
    K = rng.normal(size=(12, 3))
    K = 0.8 * K / np.linalg.norm(K, axis=1, keepdims=True) * rng.uniform(0.3, 1, (12, 1))
    v0, _ = polytope_volume(K)
    L = lorentz_matrix(Isometry(np.array([[1.1, 0.3 + 0.2j], [0.1j, 1.0]])).m)
    K2 = hyperboloid_to_klein((L @ klein_to_hyperboloid(K).T).T)
    v1, _ = polytope_volume(K2)
    assert v1 == pytest.approx(v0, abs=1e-8)


def test_degenerate_fuchsian_core(fuchsian_group):
    core = build_core(fuchsian_group, 3)
    assert core.degenerate
    assert core_volume(core)[0] == 0.0
    assert bending_length(core)[0] == 0.0
    assert core.chi_mesh == fuchsian_group.chi_boundary == -4


def test_too_few_points_raise(schottky_group):
    from renormvol.kleinian import LimitSample

    S = LimitSample(np.array([0.0, 1.0, 1j]), np.zeros(3, int), 0, "x", 1.0)
    with pytest.raises(DegenerateCoreError):
        build_core(schottky_group, 1, sample=S)


def test_convexity_of_hull(schottky_core):
    X = np.concatenate([np.ones((len(schottky_core.points), 1)), schottky_core.points], axis=1)
    vals = X @ np.diag([-1.0, 1, 1, 1]) @ schottky_core.normals.T
    assert vals.max() <= 1e-9


def test_schottky_volume_is_cauchy_in_depth(schottky_group):
    v4 = core_volume(build_core(schottky_group, 4))[0]
    v5 = core_volume(build_core(schottky_group, 5))[0]
    assert abs(v5 - v4) <= 0.01 * v5


def test_face_count_grows_with_depth(schottky_group):
    n = [len(build_core(schottky_group, d).simplices) for d in (2, 3, 4)]
    assert n[0] < n[1] < n[2]


def test_quotient_euler_characteristic_is_exact(schottky_group, bent_group):
    assert build_core(schottky_group, 4).chi_mesh == -2
    assert build_core(bent_group, 3).chi_mesh == -4


def test_invariance_residual_decreases(schottky_group):
    r = [invariance_residual(build_core(schottky_group, d), schottky_group) for d in (3, 4, 5)]
    assert r[0] > r[1] > r[2]
    assert r[2] < 1e-5


def _bending_by_side(core):
    sides = {1: 0.0, -1: 0.0}
    for ell, theta, f1, _ in bending_edges(core):
        if theta >= FLAT_ANGLE:
            sides[int(np.sign(core.normals[f1][3]))] += ell * theta
    return sides


def test_single_curve_bending_oracle(bent_group):
    # the side bent along the axis of a carries exactly theta * l(a)
    core = build_core(bent_group, 3)
    ell_a = bent_group.generators[0].translation_length()
    sides = _bending_by_side(core)
    assert sides[1] == pytest.approx(0.2 * ell_a, abs=1e-8)
    assert sides[-1] > 0
    assert sum(sides.values()) == pytest.approx(bending_length(core)[0])


def test_bending_bound_incompressible(bent_group):
    core = build_core(bent_group, 3)
    assert bending_length(core)[0] <= 28.0258 * 4


def test_tube_formula_identities(schottky_core):
    vol = core_volume(schottky_core)
    bend = bending_length(schottky_core)
    area = boundary_area(schottky_core)
    w0 = tube_w_volume(schottky_core, 0.0, vol, bend, area)
    assert w0.value == pytest.approx(vol[0] - bend[0] / 4, abs=1e-12)
    for r in (0.5, 1.0):
        w = tube_w_volume(schottky_core, r, vol, bend, area)
        assert w.value - w0.value == pytest.approx(2 * np.pi * r, rel=1e-2)


def test_boundary_area_gauss_bonnet(schottky_core):
    assert boundary_area(schottky_core) == pytest.approx(4 * np.pi, rel=1e-3)


def test_wedge_volume_against_quadrature():
    # wedge of angle th around a geodesic of length ell, radius r, in cylindrical coordinates
    from scipy.integrate import quad

    ell, th, r = 1.3, 0.4, 0.8
    brute = ell * th * quad(lambda rho: np.sinh(rho) * np.cosh(rho), 0, r)[0]
    assert wedge_volume(ell, th, r) == pytest.approx(brute, abs=1e-4)


def test_eta_requires_compressible(fuchsian_group, bent_group):
    core = build_core(bent_group, 3)
    with pytest.raises(ValueError, match="incompressible"):
        eta_estimate(core, bent_group)


def test_eta_decreases_with_circle_radius():
    etas = []
    for r in (0.8, 0.6, 0.4):
        G = build_schottky([(1.5, r), (-1.5, r), (1.5j, r), (-1.5j, r)], [(0, 1), (2, 3)])
        lo, hi = eta_estimate(build_core(G, 3), G)
        etas.append((lo + hi) / 2)
    assert etas[0] > etas[1] > etas[2]


def test_core_json(tmp_path, schottky_core):
    schottky_core.save(tmp_path / "core")
    assert (tmp_path / "core.json").exists() and (tmp_path / "core.npy").exists()


def test_sample_points_in_hull(schottky_group):
    S = sample_limit_set(schottky_group, 3)
    assert len(S.points) > 4
