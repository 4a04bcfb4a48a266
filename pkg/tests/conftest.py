import pytest


def pytest_configure(config):
    config.acceptance_results = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the session summary."""
    return request.config.acceptance_results


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
