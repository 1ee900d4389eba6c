import numpy as np
import pytest

from renormvol import kleinian

ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store one acceptance result for the end-of-session summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def schottky(r=0.5, twists=(np.pi, np.pi / 2)):
    """Rank-2 Schottky group with pairing circles of radius r at +-1.5 and +-1.5i."""
    circles = [(1.5, r), (-1.5, r), (1.5j, r), (-1.5j, r)]
    return kleinian.build_schottky(circles, [(0, 1), (2, 3)], twists=list(twists), name=f"schottky_r{r:g}")


@pytest.fixture(scope="session")
def schottky_group():
    return schottky()


@pytest.fixture(scope="session")
def fuchsian_group():
    return kleinian.build_fuchsian_genus2()


@pytest.fixture(scope="session")
def bent_group(fuchsian_group):
    return kleinian.bend_quasifuchsian(fuchsian_group, "a", 0.2)


@pytest.fixture(scope="session")
def schottky_core(schottky_group):
    from renormvol.corehull import build_core

    return build_core(schottky_group, 4)


_REPORTS = {}


def cached_report(key, G, depth, **kw):
    """Session cache for expensive manifold reports shared between tests."""
    from renormvol.volumelab import assemble_report

    if key not in _REPORTS:
        _REPORTS[key] = assemble_report(G, depth, **kw)
    return _REPORTS[key]
