from _acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in RESULTS.items():
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
