CRITERIA_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda l: int(l.split("criterion=")[1].split()[0])):
            terminalreporter.write_line(line)
