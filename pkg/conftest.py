"""Prints one PASS/FAIL line per acceptance criterion after the run."""

ACCEPTANCE_FILE = "test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome, tag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if ACCEPTANCE_FILE in nodeid and "::" in nodeid:
                rows.append((nodeid.split("::")[-1], tag))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, tag in rows:
        terminalreporter.write_line(f"{tag}  {name}")
