import sys
import numpy as np
import pytest
from hypothesis import settings

from tksmooth.experiments import build_jump, build_scenario, build_spline, make_rng

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_spd_blocks(rng, N, n):
    """Block-diagonally dominant, hence SPD, block-tridiagonal system."""
    sub = rng.standard_normal((max(N - 1, 0), n, n))
    norms = np.array([np.linalg.norm(a, 2) for a in sub])
    diag = np.empty((N, n, n))
    for k in range(N):
        M = rng.standard_normal((n, n))
        margin = 0.5
        if k > 0:
            margin += norms[k - 1]
        if k < N - 1:
            margin += norms[k]
        diag[k] = M @ M.T + margin * np.eye(n)
    return diag, sub


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def spline_scenario():
    return build_spline()


def scenario_problem(name, preset, seed=0, **kw):
    """A shipped scenario posed with one seeded data set."""
    scen = build_scenario(name, **kw)
    gen = make_rng(seed, 0)
    truth = scen.simulate(gen)
    z = scen.measure(truth, gen, _default_scheme(name))
    return scen, truth, scen.problem(z, scen.partition(preset))


def _default_scheme(name):
    from tksmooth.experiments import DEFAULT_SCHEMES
    return DEFAULT_SCHEMES[name]


def pytest_terminal_summary(terminalreporter):
    gate = sys.modules.get("test_acceptance")
    if gate is None or not gate.GATE:
        return
    terminalreporter.section("acceptance gate")
    for line in sorted(gate.GATE, key=lambda l: int(l.split()[1].rstrip("]"))):
        terminalreporter.write_line(line)
