import acceptance_registry


def pytest_terminal_summary(terminalreporter):
    results = acceptance_registry.RESULTS
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number].line())
