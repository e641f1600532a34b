"""Collects the one-line acceptance verdicts and prints them after the run."""

VERDICTS = {}


def record(number, ok, detail):
    """Store the verdict line of an acceptance criterion and echo it."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[number] = line
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[number])
