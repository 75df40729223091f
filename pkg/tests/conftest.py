import math

import numpy as np
import pytest

from csvortex import GridSpec, TorusDomain, VortexConfiguration, build_background

CENTER = (math.pi, math.pi)


@pytest.fixture(scope="session")
def torus():
    return TorusDomain()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def background_for(n=128, points=(CENTER,), mults=None, domain=None):
    domain = domain or TorusDomain()
    conf = VortexConfiguration.create(domain, list(points), mults)
    return build_background(domain, GridSpec(n, n), conf)


def band_limited(domain, grid, rng, modes=6):
    """Random real trigonometric polynomial with |k| <= modes."""
    X, Y = grid.coordinates(domain)
    f = np.zeros(grid.shape)
    for a in range(-modes, modes + 1):
        for b in range(0, modes + 1):
            c, s = rng.normal(size=2)
            phase = 2 * np.pi * (a * X / domain.L1 + b * Y / domain.L2)
            f += c * np.cos(phase) + s * np.sin(phase)
    return f


# per-criterion pass/fail lines for the acceptance suite, printed at the end of the run
_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; ``note`` attaches the measured values."""
    number = request.node.get_closest_marker("criterion").args[0]
    notes = []
    yield notes.append
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    detail = "; ".join(notes) if notes else (rep.longrepr.reprcrash.message if rep and rep.failed else "")
    _CRITERIA[number] = (status, detail)
    print(f"\ncriterion {number:2d}: {status}  {detail}")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "slow: runs longer than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
