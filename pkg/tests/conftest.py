import pytest

from magwells.amplitude import AmplitudeOptions, amplitude_profile
from magwells.eikonal import default_seal, solve_phi
from magwells.field_model import ExampleFieldParams, make_example_field


@pytest.fixture(scope="session")
def field():
    return make_example_field(ExampleFieldParams())


@pytest.fixture(scope="session")
def profile(field):
    return solve_phi(field, default_seal(field))


@pytest.fixture(scope="session")
def amplitude(field, profile):
    return amplitude_profile(field, profile, AmplitudeOptions())


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_log(pytestconfig):
    """Collects one pass/fail line per acceptance criterion."""
    return pytestconfig.stash.setdefault(ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
