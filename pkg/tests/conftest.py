from __future__ import annotations

import pytest

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    # a criterion with several tests passes only if every one of them does
    prev = _ACCEPTANCE.get(number, (title, "PASS"))[1]
    _ACCEPTANCE[number] = (title, "FAIL" if "FAIL" in (prev, outcome) else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {outcome}: {title}")


@pytest.fixture
def run_cli(capsys):
    """Run the CLI in-process; returns (exit code, stdout text)."""
    import io

    from dataops_gate.cli import main

    def run(*argv):
        buf = io.StringIO()
        code = main([str(a) for a in argv], out=buf)
        return code, buf.getvalue()

    return run
