import sys


def _gate_lines():
    # the acceptance module's import name depends on pytest's import mode
    for name, mod in sys.modules.items():
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            return getattr(mod, "GATE_LINES", None)
    return None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = _gate_lines()
    if lines:
        terminalreporter.section("release gate")
        for line in lines:
            terminalreporter.write_line(line)
