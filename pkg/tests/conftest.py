"""Collect the acceptance verdict lines and print them after the run."""

ACCEPTANCE_KEY = "acceptance"

_lines: list[str] = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _lines.extend(v for k, v in report.user_properties if k == ACCEPTANCE_KEY)


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
