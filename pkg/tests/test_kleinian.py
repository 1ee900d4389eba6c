import numpy as np
import pytest

from renormvol import kleinian
from renormvol.kleinian import (
    DiscretenessScreenError, GroupModel, LimitSample, bend_quasifuchsian, build_schottky, commutator,
    enumerate_words, sample_limit_set, schottky_disk_diameters, word_count,
)

REAL_CIRCLES = [(1.5, 0.5), (-1.5, 0.5), (6.0, 0.5), (-6.0, 0.5)]


def test_real_schottky_group_metadata():
    G = build_schottky(REAL_CIRCLES, [(0, 1), (2, 3)])
    assert G.chi_boundary == -2 and G.compressible and G.rank == 2
    assert G.metadata["separation_margin"] > 0
    for g in G.generators:
        assert np.max(np.abs(g.m.imag)) < 1e-12
        assert g.kind() == "loxodromic"


def test_pairing_maps_exterior_into_paired_interior():
    G = build_schottky(REAL_CIRCLES, [(0, 1), (2, 3)])
    for g, (c, r, cp, rp) in zip(G.generators, G.circles):
        ang = 2 * np.pi * np.arange(8) / 8
        pts = c + 1.3 * r * np.exp(1j * ang)
        assert np.all(np.abs(g(pts) - cp) < rp)
        on = c + r * np.exp(1j * ang)
        assert np.max(np.abs(np.abs(g(on) - cp) - rp)) < 1e-9


def test_schottky_rejections():
    with pytest.raises(ValueError, match="elliptic"):
        build_schottky(REAL_CIRCLES, [(0, 0), (2, 3)])
    with pytest.raises(ValueError, match="overlap"):
        build_schottky([(0, 1), (1.5, 1), (6, 0.5), (-6, 0.5)], [(0, 1), (2, 3)])
    with pytest.raises(ValueError):
        build_schottky(REAL_CIRCLES, [(0, 1), (1, 2)])


def test_fuchsian_genus2_relator_and_traces(fuchsian_group):
    G = fuchsian_group
    a, b, c, d = G.generators
    rel = commutator(a, b) @ commutator(c, d)
    m = rel.m / rel.m[0, 0]
    assert np.max(np.abs(m - np.eye(2))) < 1e-9
    assert G.chi_boundary == -4 and not G.compressible
    for g in G.generators:
        assert abs(g.trace) > 2


def test_fuchsian_limit_set_on_unit_circle(fuchsian_group):
    S = sample_limit_set(fuchsian_group, 3)
    assert np.max(np.abs(np.abs(S.points) - 1)) < 1e-6


def test_bend_zero_is_identity(fuchsian_group):
    G0 = bend_quasifuchsian(fuchsian_group, "a", 0.0)
    for g, h in zip(G0.generators, fuchsian_group.generators):
        assert np.allclose(g.m, h.m)


def test_bend_straight_angle_is_rejected(fuchsian_group):
    with pytest.raises((DiscretenessScreenError, ValueError)):
        bend_quasifuchsian(fuchsian_group, "a", np.pi)


def test_bent_group_keeps_relator(bent_group):
    a, b, c, d = bent_group.generators
    rel = commutator(a, b) @ commutator(c, d)
    assert np.max(np.abs(rel.m / rel.m[0, 0] - np.eye(2))) < 1e-8
    assert bent_group.kind == "quasifuchsian" and bent_group.screened_only
    assert bent_group.metadata["jorgensen_min"] >= 1


def test_word_counts():
    assert word_count(2, 1) == 5
    assert word_count(2, 3) == 1 + 4 + 12 + 36 == 53
    G = build_schottky(REAL_CIRCLES, [(0, 1), (2, 3)])
    assert len(enumerate_words(G, 3)) == 53


def test_words_are_distinct(schottky_group):
    words = enumerate_words(schottky_group, 3)
    mats = np.array([w.m.ravel() for _, w in words])
    # compare up to sign, which is the PSL ambiguity
    for i in range(len(mats)):
        d = np.minimum(np.abs(mats - mats[i]).max(axis=1), np.abs(mats + mats[i]).max(axis=1))
        d[i] = np.inf
        assert d.min() > 1e-6


def test_word_budget():
    G = build_schottky(REAL_CIRCLES, [(0, 1), (2, 3)])
    with pytest.raises(ValueError, match="budget"):
        enumerate_words(G, 40)


def test_real_schottky_limit_sample_is_real_and_inside_circles():
    G = build_schottky(REAL_CIRCLES, [(0, 1), (2, 3)])
    S = sample_limit_set(G, 6)
    assert np.max(np.abs(S.points.imag)) < 1e-9
    inside = np.zeros(len(S.points), dtype=bool)
    for c, r in REAL_CIRCLES:
        inside |= np.abs(S.points - c) < r + 1e-12
    assert inside.all()


def test_disk_diameters_contract(schottky_group):
    eps = [schottky_disk_diameters(schottky_group, L) for L in range(1, 6)]
    ratios = np.array(eps[1:]) / np.array(eps[:-1])
    assert np.all(ratios < 0.5)


def test_limit_sample_invariance(schottky_group):
    L = 4
    S = sample_limit_set(schottky_group, L)
    S_next = sample_limit_set(schottky_group, L + 1)
    eps = schottky_disk_diameters(schottky_group, L - 1)
    for g in schottky_group.letters():
        img = g(S.points)
        d = np.abs(img[:, None] - S_next.points[None, :]).min(axis=1)
        assert d.max() <= eps


def test_group_json_round_trip(tmp_path, schottky_group):
    path = tmp_path / "g.json"
    schottky_group.save(path)
    G2 = GroupModel.load(path)
    assert G2.name == schottky_group.name and G2.chi_boundary == -2
    assert not G2.screened_only
    for g, h in zip(G2.generators, schottky_group.generators):
        assert np.allclose(g.m, h.m)
    assert len(G2.faces) == len(schottky_group.faces)


def test_limit_sample_save_load(tmp_path, schottky_group):
    S = sample_limit_set(schottky_group, 3)
    S.save(tmp_path / "s")
    S2 = LimitSample.load(tmp_path / "s")
    assert np.allclose(S2.points, S.points) and S2.depth == 3


def test_region_reduction(schottky_group):
    rng = np.random.default_rng(0)
    z = rng.normal(size=50) * 3 + 1j * rng.normal(size=50) * 3
    for w in z:
        out = schottky_group.reduce_to_region(w)
        pt = out[0] if isinstance(out, tuple) else out
        assert np.isfinite(pt)


def test_disk_diameters_need_schottky(fuchsian_group):
    with pytest.raises(ValueError):
        schottky_disk_diameters(fuchsian_group, 2)


def test_module_exports_constructions():
    assert callable(kleinian.build_fuchsian_genus2)
