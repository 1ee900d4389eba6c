import numpy as np
import pytest

from renormvol.confmetrics import (
    K_BILIP, ConformalMetricField, DomainModel, HullThurstonMetric, SolverDivergence, comparison_constant,
    compare_metrics, discrete_curvature, export_csv, export_residual_log, fuchsian_systole,
    group_thurston_field, poincare_density, poincare_exact, scale_metric, solve_liouville,
    thurston_density, thurston_exact,
)
from renormvol.kleinian import enumerate_words, sample_limit_set


def test_bilipschitz_constant_value():
    assert K_BILIP == pytest.approx(5.7627, abs=1e-3)


def test_exact_poincare_values():
    assert poincare_exact(DomainModel.disk(), 0) == pytest.approx(2.0)
    assert poincare_exact(DomainModel.strip(), 0.5j) == pytest.approx(np.pi)
    assert poincare_exact(DomainModel.halfplane(), 2j) == pytest.approx(0.5)
    R = 5.0
    ann = DomainModel.annulus(1.0, R)
    assert poincare_exact(ann, np.sqrt(R)) == pytest.approx(np.pi / (np.sqrt(R) * np.log(R)))


def test_thurston_examples():
    tau, w = thurston_density(DomainModel.disk(), 0)
    assert tau == pytest.approx(2.0, abs=1e-9) and w.radius == pytest.approx(1.0)
    tau, w = thurston_density(DomainModel.strip(), 0.5j)
    assert tau == pytest.approx(4.0, abs=1e-9)
    assert abs(w.center - 0.5j) < 1e-6 and w.radius == pytest.approx(0.5, abs=1e-9)
    assert thurston_exact(DomainModel.halfplane(), 2j) == pytest.approx(0.5)


def test_thurston_optimizer_matches_closed_forms():
    rng = np.random.default_rng(1)
    for dom, pts in [(DomainModel.strip(), 0.3 * rng.normal(size=5) + 1j * rng.uniform(0.1, 0.9, 5)),
                     (DomainModel.annulus(1.0, 3.0), rng.uniform(1.2, 2.8, 5) * np.exp(2j * np.pi * rng.uniform(size=5)))]:
        for z in pts:
            tau, w = thurston_density(dom, z)
            assert tau == pytest.approx(thurston_exact(dom, z), rel=1e-6)
            # the witness disk lies in the domain and realises the density
            assert dom.complement_distance(w.center) - w.radius >= -1e-9
            assert 2 * w.radius / (w.radius ** 2 - abs(z - w.center) ** 2) == pytest.approx(tau, rel=1e-9)


def test_rho_le_tau_le_2rho_on_simply_connected_domains():
    rng = np.random.default_rng(2)
    z = 0.5 * rng.normal(size=200) + 1j * rng.uniform(0.01, 0.99, 200)
    rho = poincare_exact(DomainModel.strip(), z)
    tau = thurston_exact(DomainModel.strip(), z)
    stats = compare_metrics(tau, rho, bound=2.0)
    assert stats.passed and stats.max <= 4 / np.pi + 1e-12
    disk = compare_metrics(thurston_exact(DomainModel.disk(), 0.5 * z), poincare_exact(DomainModel.disk(), 0.5 * z))
    assert disk.min == pytest.approx(1.0) and disk.max == pytest.approx(1.0)


def test_thurston_mobius_invariance():
    # tau_{g Omega}(g z) |g'(z)| = tau_Omega(z) for an affine map of the strip
    dom = DomainModel.strip(1.0)
    dom2 = DomainModel.strip(3.0)
    for z in (0.2 + 0.3j, -0.4 + 0.7j):
        t1, _ = thurston_density(dom, z)
        t2, _ = thurston_density(dom2, 3 * z + 2)
        assert t2 * 3 == pytest.approx(t1, rel=1e-6)


def test_scale_metric_group_law():
    h = ConformalMetricField(DomainModel.disk(), lambda z: poincare_exact(DomainModel.disk(), z), "poincare")
    assert scale_metric(h, 0)(0.3) == pytest.approx(h(0.3))
    assert scale_metric(h, 1)(0) == pytest.approx(2 * np.e)
    a = scale_metric(scale_metric(h, 0.3), 0.4)
    assert a(0.2) == pytest.approx(scale_metric(h, 0.7)(0.2))
    assert a.provenance.startswith("scaled(0.7")
    dx, dy = h.gradient(0.5)
    # d/dx of 2/(1-x^2) at 0.5
    assert dx == pytest.approx(4 * 0.5 / (1 - 0.25) ** 2, rel=1e-6) and abs(dy) < 1e-6


def _patch(dom, box, n):
    x = np.linspace(box[0], box[1], n)
    y = np.linspace(box[2], box[3], n)
    X, Y = np.meshgrid(x, y, indexing="ij")
    ex = poincare_exact(dom, X + 1j * Y)
    interior = np.zeros(X.shape, dtype=bool)
    interior[1:-1, 1:-1] = True
    res = solve_liouville(x, y, interior, np.where(interior, np.nan, ex), u0=np.full_like(ex, ex.mean()))
    return res, ex


@pytest.mark.parametrize("dom,box", [(DomainModel.disk(), (-0.6, 0.6, -0.6, 0.6)),
                                     (DomainModel.strip(), (-0.5, 0.5, 0.05, 0.95))])
def test_liouville_patch_matches_exact(dom, box):
    res, ex = _patch(dom, box, 257)
    assert np.nanmax(np.abs(res.density - ex) / ex) < 1e-3
    K = discrete_curvature(res)
    assert np.nanmax(np.abs(K + 1)) < 1e-3


def test_liouville_second_order_convergence():
    e = []
    for n in (33, 65):
        res, ex = _patch(DomainModel.disk(), (-0.6, 0.6, -0.6, 0.6), n)
        e.append(np.nanmax(np.abs(res.density - ex) / ex))
    assert 3.0 < e[0] / e[1] < 5.0


def test_liouville_below_inscribed_disk():
    # Dirichlet data from the inscribed disk's density on a smaller square: by the maximum
    # principle the solution cannot exceed the larger of the data and the disk density
    res, ex = _patch(DomainModel.disk(), (-0.5, 0.5, -0.5, 0.5), 65)
    assert np.nanmax(res.density / ex) <= 1 + 1e-3


def test_liouville_divergence_is_reported():
    x = y = np.linspace(0, 1, 9)
    interior = np.zeros((9, 9), dtype=bool)
    interior[1:-1, 1:-1] = True
    with pytest.raises(SolverDivergence):
        solve_liouville(x, y, interior, np.full((9, 9), 1e3), max_iter=1)


def test_comparison_constant():
    assert comparison_constant(simply_connected=True) == 2.0
    assert comparison_constant(1.0) == pytest.approx(2 * np.sqrt(2) * (K_BILIP + np.pi ** 2 / 2))
    with pytest.raises(ValueError):
        comparison_constant(None)


def test_fuchsian_systole_trace_oracle(fuchsian_group):
    nu, word = fuchsian_systole(fuchsian_group)
    g = dict(enumerate_words(fuchsian_group, 3))[word]
    assert np.cosh(nu) == pytest.approx(abs(g.trace) / 2, rel=1e-12)
    assert nu == pytest.approx(1.12838, abs=1e-4)


def test_hull_thurston_metric_equivariance(schottky_group, schottky_core):
    metric = HullThurstonMetric(schottky_core)
    rng = np.random.default_rng(3)
    z = 3 * rng.normal(size=40) + 3j * rng.normal(size=40)
    for g in schottky_group.letters():
        lhs = metric.density(g(z)) * g.derivative(z)
        assert np.max(np.abs(lhs / metric.density(z) - 1)) < 1e-2


def test_hull_thurston_close_to_disk_search(schottky_group, schottky_core):
    # tau from the hull support planes against the Euclidean maximal-disk search over the limit
    # sample. Near the origin the optimal disks are bounded and the two agree. Far out the optimal
    # round disk contains infinity, which the Euclidean search cannot reach, so it only bounds tau above.
    metric = HullThurstonMetric(schottky_core)
    dom = DomainModel.group(schottky_group, schottky_core, sample_limit_set(schottky_group, 4))
    for z in (0.2 + 0.1j, -0.3 + 0.8j, 1.5 + 0.6j, 0.58 + 1.5j):
        tau_disk, w = thurston_density(dom, z, starts=4)
        assert w.radius < 10
        assert metric.density(z)[0] == pytest.approx(tau_disk, rel=2e-3)
    for z in (2.5 + 2.5j, 1.95 + 0.3j):
        tau_disk, _ = thurston_density(dom, z, starts=4)
        assert metric.density(z)[0] <= tau_disk * (1 + 2e-3)


def test_group_poincare_interval(schottky_group, schottky_core):
    dom = DomainModel.group(schottky_group, schottky_core)
    lo, hi = poincare_density(dom, np.array([0.3j, 1.0 + 0.2j]), nu=1.9)
    assert np.all(lo < hi)
    assert np.allclose(hi / lo, comparison_constant(1.9))
    field = group_thurston_field(schottky_group, schottky_core)
    assert np.allclose(field(np.array([0.3j])), hi[:1])


def test_exports(tmp_path):
    export_csv(tmp_path / "d.csv", np.array([0.1j, 0.2j]), np.array([1.0, 2.0]))
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "re,im,density"
    res, _ = _patch(DomainModel.disk(), (-0.3, 0.3, -0.3, 0.3), 17)
    export_residual_log(tmp_path / "r.json", res)
    assert "residual" in (tmp_path / "r.json").read_text()
