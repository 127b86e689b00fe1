import numpy as np
import pytest
from hypothesis import settings

from wglsm import kernels
from wglsm.modes import WaveguideSpec, build_mode_basis

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per kernel backend."""
    old = kernels.get_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(old)


@pytest.fixture(scope="session")
def basis10():
    return build_mode_basis(WaveguideSpec.from_mode_count(10), 20)


@pytest.fixture(scope="session")
def basis20():
    return build_mode_basis(WaveguideSpec.from_mode_count(20), 40)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# Acceptance bookkeeping: one PASS/FAIL line per criterion in the summary
# ---------------------------------------------------------------------------
_CRITERIA = []


@pytest.fixture
def criterion():
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# Shipped-scenario surveys, computed once per session
# ---------------------------------------------------------------------------
def _survey(name):
    from wglsm.config import load_scenario
    from wglsm.pipeline import survey_scenario
    cfg = load_scenario(name)
    basis, geo, survey = survey_scenario(cfg, full_aperture=True)
    return cfg, basis, geo, survey


@pytest.fixture(scope="session")
def survey_bump10():
    return _survey("bump10")


@pytest.fixture(scope="session")
def survey_bump20():
    return _survey("bump20")


@pytest.fixture(scope="session")
def survey_soft20():
    return _survey("soft_disk20")


@pytest.fixture(scope="session")
def survey_pen20():
    return _survey("penetrable_disk20")


@pytest.fixture(scope="session")
def survey_empty10():
    return _survey("empty10")
