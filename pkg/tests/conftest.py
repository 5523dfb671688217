def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines at the end of the run, passed or failed."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            if getattr(rep, "when", None) == "call":
                lines += [value for key, value in getattr(rep, "user_properties", []) if key == "verdict"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
