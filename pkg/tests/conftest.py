"""Shared pytest wiring: the acceptance suite registers one PASS/FAIL line
per criterion here so the summary survives output capture."""

ACCEPTANCE_RESULTS = []  # (criterion_name, "PASS" | "FAIL"), execution order


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"ACCEPTANCE {name}: {status}")
