import pytest

_LINES: list[str] = []
_TABLES: list[str] = []


@pytest.fixture(scope="session")
def criterion_report():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def report(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    report.tables = _TABLES
    return report


def pytest_terminal_summary(terminalreporter):
    if not _LINES and not _TABLES:
        return
    terminalreporter.section("acceptance criteria")
    for table in _TABLES:
        terminalreporter.write_line(table)
        terminalreporter.write_line("")
    for line in sorted(_LINES):
        terminalreporter.write_line(line)
