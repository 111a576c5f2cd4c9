import pytest

from fraclap import sg_harmonic_structure

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def H():
    return sg_harmonic_structure()


@pytest.fixture(scope="session")
def fr(H):
    return H.fractal


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for marker in report.keywords:
        if marker.startswith("criterion_"):
            key = int(marker.split("_", 1)[1])
            ok = report.passed
            _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and ok


def pytest_configure(config):
    for k in range(1, 12):
        config.addinivalue_line("markers", f"criterion_{k}: acceptance criterion {k}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        verdict = "PASS" if _ACCEPTANCE[key] else "FAIL"
        terminalreporter.write_line(f"criterion {key:>2}: {verdict}")
